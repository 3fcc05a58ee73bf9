#include <gtest/gtest.h>

#include <cmath>

#include "lmgp/error.hpp"
#include "lmgp/kernel.hpp"
#include "test_util.hpp"

namespace lmgp {
namespace {

TEST(EncodePrior, Examples) {
  const std::vector<int> t{1, 0};
  const std::vector<int> m{2, 3};
  const Eigen::VectorXd z = encode_prior(t, m);
  Eigen::VectorXd expect(5);
  expect << 0, 1, 1, 0, 0;
  EXPECT_EQ(z, expect);
  // Level "physics" is index 1 of the second variable.
  EXPECT_EQ(encode_prior(std::vector<int>{1, 1}, m), (Eigen::VectorXd(5) << 0, 1, 0, 1, 0).finished());
  EXPECT_EQ(encode_prior(std::vector<int>{0}, std::vector<int>{4}), Eigen::Vector4d(1, 0, 0, 0));
  EXPECT_EQ(encode_prior(std::vector<int>{0, 0}, std::vector<int>{2, 2}), Eigen::Vector4d(1, 0, 1, 0));
  EXPECT_THROW((void)encode_prior(std::vector<int>{2}, std::vector<int>{2}), Error);
}

TEST(MapLatent, Examples) {
  LatentMap zero = zero_latent_map({3});
  EXPECT_EQ(map_latent(std::vector<int>{2}, zero), Eigen::Vector2d::Zero());
  LatentMap m;
  m.level_counts = {3};
  m.a.resize(3, 2);
  m.a << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(map_latent(std::vector<int>{1}, m), Eigen::Vector2d(3, 4));
  LatentMap two;
  two.level_counts = {2, 2};
  two.a.resize(4, 2);
  two.a << 1, 0, 0, 1, 2, 0, 0, 3;
  // levels (0, 1): row 0 + row (m1 + 1) = row 3
  EXPECT_EQ(map_latent(std::vector<int>{0, 1}, two), Eigen::Vector2d(1, 3));
}

TEST(Gaussian, Examples) {
  const Eigen::VectorXd x = Eigen::Vector2d(0.3, 0.4);
  EXPECT_DOUBLE_EQ(gaussian_correlation(x, x, Eigen::Vector2d(1, 2)), 1.0);
  EXPECT_NEAR(gaussian_correlation(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1)),
              0.36787944117144233, 1e-15);
  EXPECT_NEAR(
      gaussian_correlation(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), Eigen::VectorXd::Constant(1, -10)),
      1.0, 1e-9);
  EXPECT_THROW((void)gaussian_correlation(x, Eigen::VectorXd::Zero(1), Eigen::Vector2d(0, 0)), Error);
}

LatentMap two_point_map(double distance) {
  LatentMap m;
  m.level_counts = {2};
  m.a = Eigen::MatrixXd::Zero(2, 2);
  m.a(1, 0) = distance;
  return m;
}

TEST(Mixed, LatentDistanceFactors) {
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.2);
  const Eigen::VectorXd w = Eigen::VectorXd::Zero(1);
  const std::vector<int> t0{0};
  const std::vector<int> t1{1};
  EXPECT_DOUBLE_EQ(mixed_correlation(x, t0, x, t0, w, two_point_map(0.5)), 1.0);
  EXPECT_NEAR(mixed_correlation(x, t0, x, t1, w, two_point_map(0.5)), std::exp(-0.25), 1e-15);
  EXPECT_NEAR(mixed_correlation(x, t0, x, t1, w, two_point_map(0.5)), 0.78, 0.005);
  EXPECT_NEAR(mixed_correlation(x, t0, x, t1, w, two_point_map(0.4)), 0.85, 0.005);
}

TEST(Mixed, MonotoneAndSymmetric) {
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.2);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 0.7);
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(1, 0.5);
  double prev = 2.0;
  for (double d = 0.0; d < 3.0; d += 0.25) {
    const auto m = two_point_map(d);
    const double v = mixed_correlation(x, std::vector<int>{0}, y, std::vector<int>{1}, w, m);
    EXPECT_LT(v, prev);
    EXPECT_EQ(v, mixed_correlation(y, std::vector<int>{1}, x, std::vector<int>{0}, w, m));
    prev = v;
  }
}

TEST(Mixed, RigidMotionInvariance) {
  LatentMap m;
  m.level_counts = {3};
  m.a.resize(3, 2);
  m.a << 0.1, -0.4, 0.9, 0.3, -0.7, 1.2;
  const double phi = 0.77;
  Eigen::Matrix2d q;
  q << std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi);
  q.col(1) *= -1.0;  // include a reflection
  LatentMap moved = m;
  moved.a = m.a * q;
  moved.a.rowwise() += Eigen::RowVector2d(0.3, -1.1);
  const Eigen::VectorXd x = Eigen::Vector2d(0.1, 0.9);
  const Eigen::VectorXd y = Eigen::Vector2d(0.6, 0.2);
  const Eigen::VectorXd w = Eigen::Vector2d(0.3, -0.5);
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      EXPECT_NEAR(mixed_correlation(x, std::vector<int>{a}, y, std::vector<int>{b}, w, m),
                  mixed_correlation(x, std::vector<int>{a}, y, std::vector<int>{b}, w, moved), 1e-12);
    }
  }
}

TEST(Calibration, Examples) {
  const LatentMap m = zero_latent_map({2});
  const Eigen::VectorXd w = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd wt = Eigen::VectorXd::Zero(1);
  CalibrationRow h1{Eigen::VectorXd::Constant(1, 0.3), {0}, Eigen::VectorXd::Zero(1), true};
  CalibrationRow h2{Eigen::VectorXd::Constant(1, 0.3), {0}, Eigen::VectorXd::Constant(1, 5.0), true};
  // theta factor skipped for two high-fidelity rows
  EXPECT_DOUBLE_EQ(calibration_correlation(h1, h2, w, wt, m, Eigen::VectorXd::Constant(1, 1.0)), 1.0);
  CalibrationRow l{Eigen::VectorXd::Constant(1, 0.3), {1}, Eigen::VectorXd::Zero(1), false};
  EXPECT_DOUBLE_EQ(calibration_correlation(l, l, w, wt, m, Eigen::VectorXd::Zero(1)), 1.0);
  EXPECT_NEAR(calibration_correlation(l, h1, w, wt, m, Eigen::VectorXd::Constant(1, 1.0)), std::exp(-1.0), 1e-15);
  EXPECT_THROW((void)calibration_correlation(l, h1, w, wt, m, Eigen::VectorXd()), Error);
}

TEST(Matrix, SmallCases) {
  SourceDataset s{"a", Eigen::MatrixXd::Zero(1, 1), std::nullopt, Eigen::VectorXd::Ones(1)};
  SourceDataset b{"b", Eigen::MatrixXd::Zero(1, 1), std::nullopt, Eigen::VectorXd::Constant(1, 2.0)};
  auto ds = assemble_fusion({s, b}, "a", EncodingStrategy::kSingle);
  CorrelationParams p;
  p.omega = Eigen::VectorXd::Zero(1);
  p.map = zero_latent_map(ds.level_counts);
  p.nugget = 0.01;
  const Eigen::MatrixXd r = build_correlation_matrix(ds, p);
  EXPECT_DOUBLE_EQ(r(0, 0), 1.01);
  EXPECT_DOUBLE_EQ(r(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(r(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(r(1, 1), 1.01);

  SourceDataset one{"x", Eigen::MatrixXd::Zero(2, 1), std::nullopt, Eigen::Vector2d(1, 2)};
  auto single = assemble_single_source(one);
  single.x.conservativeResize(1, 1);
  single.y.conservativeResize(1);
  single.t.conservativeResize(1, 0);
  single.theta.conservativeResize(1, 0);
  single.row_source.resize(1);
  p.map = zero_latent_map({});
  p.nugget = 0.25;
  EXPECT_DOUBLE_EQ(build_correlation_matrix(single, p)(0, 0), 1.25);
}

TEST(Matrix, MatchesPairwiseLoop) {
  for (auto ds : {testing::small_fusion(), testing::small_fusion(EncodingStrategy::kPerSource),
                  testing::small_calibration()}) {
    CorrelationParams p;
    p.omega = Eigen::VectorXd::LinSpaced(ds.d_x(), -0.5, 0.7);
    p.map = zero_latent_map(ds.level_counts);
    Rng rng(5);
    for (Eigen::Index i = 0; i < p.map.a.size(); ++i) p.map.a.data()[i] = 2 * rng.uniform() - 1;
    p.nugget = 1e-3;
    if (ds.calibration) {
      p.theta_hat = Eigen::VectorXd::Constant(ds.d_theta(), 0.4);
      p.omega_theta = Eigen::VectorXd::Constant(ds.d_theta(), 0.2);
    }
    const Eigen::MatrixXd r = build_correlation_matrix(ds, p);
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
      for (Eigen::Index j = 0; j < ds.n(); ++j) {
        const double expect = calibration_correlation(dataset_row(ds, i), dataset_row(ds, j), p.omega, p.omega_theta,
                                                      p.map, p.theta_hat) +
                              (i == j ? p.nugget : 0.0);
        EXPECT_NEAR(r(i, j), expect, 1e-14);
        EXPECT_EQ(r(i, j), r(j, i));
      }
    }
    EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(r).info(), Eigen::Success);
  }
}

TEST(Matrix, ParamMismatchRejected) {
  const auto ds = testing::small_calibration();
  CorrelationParams p;
  p.omega = Eigen::VectorXd::Zero(1);
  p.map = zero_latent_map(ds.level_counts);
  EXPECT_THROW((void)build_correlation_matrix(ds, p), Error);
}

}  // namespace
}  // namespace lmgp
