#pragma once

// Projected limited-memory BFGS for box-constrained minimization.
//
// Variables sitting on a bound with the gradient pushing outward are frozen for
// the iteration; the quasi-Newton direction is computed over the remaining
// free variables and the step is projected back onto the box. Steps are
// accepted by an Armijo backtracking search along the projected path.
// Infeasible points are signalled by the objective returning +inf, which the
// search treats as a failed trial and backtracks from.

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace lmgp {

// Returns f(x); fills *grad when non-null. +inf marks an infeasible point.
using GradientObjective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct BoxLbfgsOptions {
  int max_iterations = 200;
  int memory = 8;
  double f_rel_tol = 1e-8;
  double pg_tol = 1e-6;
  int max_backtracks = 40;
  double armijo = 1e-4;
};

struct BoxLbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string reason;
};

[[nodiscard]] Eigen::VectorXd project_to_box(const Eigen::VectorXd& x, const Eigen::VectorXd& lower,
                                             const Eigen::VectorXd& upper);

// Gradient with components that would leave the box through an active bound set to 0.
[[nodiscard]] Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& grad,
                                                 const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

[[nodiscard]] BoxLbfgsResult minimize_box_lbfgs(const GradientObjective& objective, const Eigen::VectorXd& x0,
                                                const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                                const BoxLbfgsOptions& options = {});

// Central differences with step h, falling back to one-sided differences at bounds.
[[nodiscard]] Eigen::VectorXd central_difference_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x, const Eigen::VectorXd& lower,
    const Eigen::VectorXd& upper, double h = 1e-6);

}  // namespace lmgp
