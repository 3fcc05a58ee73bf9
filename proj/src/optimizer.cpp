#include "lmgp/optimizer.hpp"

#include <cmath>
#include <deque>
#include <limits>

#include "lmgp/error.hpp"

namespace lmgp {
namespace {

struct CorrectionPair {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  double rho;
};

// Two-loop recursion: returns H * q for the implicit inverse Hessian.
Eigen::VectorXd apply_inverse_hessian(const std::deque<CorrectionPair>& memory, Eigen::VectorXd q) {
  std::vector<double> alpha(memory.size());
  for (std::size_t k = memory.size(); k-- > 0;) {
    alpha[k] = memory[k].rho * memory[k].s.dot(q);
    q -= alpha[k] * memory[k].y;
  }
  if (!memory.empty()) {
    const auto& last = memory.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t k = 0; k < memory.size(); ++k) {
    const double beta = memory[k].rho * memory[k].y.dot(q);
    q += (alpha[k] - beta) * memory[k].s;
  }
  return q;
}

}  // namespace

Eigen::VectorXd project_to_box(const Eigen::VectorXd& x, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& grad, const Eigen::VectorXd& lower,
                                   const Eigen::VectorXd& upper) {
  Eigen::VectorXd pg = grad;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if ((x(i) <= lower(i) && grad(i) > 0.0) || (x(i) >= upper(i) && grad(i) < 0.0)) pg(i) = 0.0;
  }
  return pg;
}

BoxLbfgsResult minimize_box_lbfgs(const GradientObjective& objective, const Eigen::VectorXd& x0,
                                  const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                  const BoxLbfgsOptions& options) {
  if (x0.size() != lower.size() || x0.size() != upper.size()) fail_validation("optimizer dimension mismatch");
  BoxLbfgsResult res;
  res.x = project_to_box(x0, lower, upper);
  res.grad = Eigen::VectorXd::Zero(x0.size());
  res.f = objective(res.x, &res.grad);
  res.evaluations = 1;
  if (!std::isfinite(res.f) || !res.grad.allFinite()) {
    res.f = std::numeric_limits<double>::infinity();
    res.reason = "infeasible start";
    return res;
  }

  std::deque<CorrectionPair> memory;
  Eigen::VectorXd g_new(x0.size());
  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    const Eigen::VectorXd pg = projected_gradient(res.x, res.grad, lower, upper);
    if (pg.lpNorm<Eigen::Infinity>() < options.pg_tol) {
      res.converged = true;
      res.reason = "projected gradient below tolerance";
      return res;
    }

    Eigen::VectorXd dir = -apply_inverse_hessian(memory, pg);
    for (Eigen::Index i = 0; i < dir.size(); ++i) {
      if (pg(i) == 0.0) dir(i) = 0.0;
    }
    if (!(res.grad.dot(dir) < 0.0) || !dir.allFinite()) {
      memory.clear();
      dir = -pg;
    }

    double step = memory.empty() ? std::min(1.0, 1.0 / pg.lpNorm<Eigen::Infinity>()) : 1.0;
    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = 0.0;
    for (int bt = 0; bt < options.max_backtracks; ++bt, step *= 0.5) {
      x_new = project_to_box(res.x + step * dir, lower, upper);
      const Eigen::VectorXd delta = x_new - res.x;
      if (delta.lpNorm<Eigen::Infinity>() == 0.0) break;
      f_new = objective(x_new, &g_new);
      ++res.evaluations;
      if (std::isfinite(f_new) && g_new.allFinite() && f_new <= res.f + options.armijo * res.grad.dot(delta)) {
        accepted = true;
        break;
      }
    }

    if (!accepted) {
      if (!memory.empty()) {
        memory.clear();
        continue;
      }
      res.converged = true;
      res.reason = "line search made no progress";
      return res;
    }

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - res.grad;
    const double sy = s.dot(y);
    if (sy > 1e-10 * y.squaredNorm()) {
      memory.push_back({s, y, 1.0 / sy});
      if (static_cast<int>(memory.size()) > options.memory) memory.pop_front();
    }

    const double f_old = res.f;
    res.x = x_new;
    res.f = f_new;
    res.grad = g_new;
    if ((f_old - f_new) <= options.f_rel_tol * std::max({std::abs(f_old), std::abs(f_new), 1.0})) {
      res.converged = true;
      res.reason = "relative objective change below tolerance";
      ++res.iterations;
      return res;
    }
  }
  res.reason = "iteration limit";
  return res;
}

Eigen::VectorXd central_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                            const Eigen::VectorXd& x, const Eigen::VectorXd& lower,
                                            const Eigen::VectorXd& upper, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd hi = x;
    Eigen::VectorXd lo = x;
    hi(i) = std::min(x(i) + h, upper(i));
    lo(i) = std::max(x(i) - h, lower(i));
    const double span = hi(i) - lo(i);
    g(i) = span > 0.0 ? (f(hi) - f(lo)) / span : 0.0;
  }
  return g;
}

}  // namespace lmgp
