#include <gtest/gtest.h>

#include <cmath>

#include "lmgp/error.hpp"
#include "lmgp/optimizer.hpp"

namespace lmgp {
namespace {

double rosenbrock(const Eigen::VectorXd& x, Eigen::VectorXd* g) {
  const double a = 1.0 - x(0);
  const double b = x(1) - x(0) * x(0);
  if (g) {
    g->resize(2);
    (*g)(0) = -2.0 * a - 400.0 * x(0) * b;
    (*g)(1) = 200.0 * b;
  }
  return a * a + 100.0 * b * b;
}

TEST(BoxLbfgs, RosenbrockInterior) {
  BoxLbfgsOptions opts;
  opts.max_iterations = 500;
  opts.f_rel_tol = 1e-15;
  opts.pg_tol = 1e-9;
  const auto res = minimize_box_lbfgs(rosenbrock, Eigen::Vector2d(-1.2, 1.0), Eigen::Vector2d(-5, -5),
                                      Eigen::Vector2d(5, 5), opts);
  EXPECT_NEAR(res.x(0), 1.0, 1e-4);
  EXPECT_NEAR(res.x(1), 1.0, 1e-4);
  EXPECT_TRUE(res.converged);
}

TEST(BoxLbfgs, ActiveBound) {
  // Unconstrained minimum at (2, -3); box forces x0 <= 1, x1 >= -1.
  auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (g) *g = Eigen::Vector2d(2 * (x(0) - 2), 2 * (x(1) + 3));
    return (x(0) - 2) * (x(0) - 2) + (x(1) + 3) * (x(1) + 3);
  };
  const auto res = minimize_box_lbfgs(f, Eigen::Vector2d(0, 0), Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1));
  EXPECT_DOUBLE_EQ(res.x(0), 1.0);
  EXPECT_DOUBLE_EQ(res.x(1), -1.0);
  const Eigen::VectorXd pg = projected_gradient(res.x, res.grad, Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1));
  EXPECT_EQ(pg.norm(), 0.0);
}

TEST(BoxLbfgs, InfeasibleRegionBacktracks) {
  // f is +inf for x > 0.5; minimum of the quadratic part lies at 1.
  auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (x(0) > 0.5) return std::numeric_limits<double>::infinity();
    if (g) *g = Eigen::VectorXd::Constant(1, 2 * (x(0) - 1));
    return (x(0) - 1) * (x(0) - 1);
  };
  const auto res = minimize_box_lbfgs(f, Eigen::VectorXd::Constant(1, -2), Eigen::VectorXd::Constant(1, -5),
                                      Eigen::VectorXd::Constant(1, 5));
  EXPECT_TRUE(std::isfinite(res.f));
  EXPECT_LE(res.x(0), 0.5);
  EXPECT_GT(res.x(0), 0.0);
}

TEST(BoxLbfgs, InfeasibleStart) {
  auto f = [](const Eigen::VectorXd&, Eigen::VectorXd*) { return std::numeric_limits<double>::infinity(); };
  const auto res = minimize_box_lbfgs(f, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, -1),
                                      Eigen::VectorXd::Constant(1, 1));
  EXPECT_FALSE(std::isfinite(res.f));
  EXPECT_FALSE(res.converged);
}

TEST(CentralDifference, QuadraticExactAndBounds) {
  auto f = [](const Eigen::VectorXd& x) { return 3 * x(0) * x(0) + x(1); };
  const auto g = central_difference_gradient(f, Eigen::Vector2d(0.5, 1.0), Eigen::Vector2d(0, 0),
                                             Eigen::Vector2d(1, 1));
  EXPECT_NEAR(g(0), 3.0, 1e-8);
  EXPECT_NEAR(g(1), 1.0, 1e-8);
}

TEST(BoxLbfgs, DimensionMismatch) {
  EXPECT_THROW((void)minimize_box_lbfgs(rosenbrock, Eigen::Vector2d(0, 0), Eigen::VectorXd::Zero(1),
                                        Eigen::Vector2d(1, 1)),
               Error);
}

}  // namespace
}  // namespace lmgp
