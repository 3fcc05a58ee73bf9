#include <gtest/gtest.h>

#include <cmath>

#include "lmgp/error.hpp"
#include "lmgp/predict.hpp"
#include "test_util.hpp"

namespace lmgp {
namespace {

// Model with given parameters and no canonicalization.
LmgpModel raw_model(const FusionDataset& ds, const CorrelationParams& p) {
  LmgpModel m;
  m.dataset = ds;
  const auto prof = profiled_likelihood(build_correlation_matrix(ds, p), constant_basis(ds.n()), ds.y);
  m.fit.params = {p, prof.beta, prof.sigma2};
  m.fit.objective = prof.objective;
  m.fit.latent_positions = source_positions(ds, p.map);
  m.fit.cache = build_cache(ds, m.fit.params);
  return m;
}

CorrelationParams gp_params(double omega, double nugget) {
  CorrelationParams p;
  p.omega = Eigen::VectorXd::Constant(1, omega);
  p.map = zero_latent_map({});
  p.nugget = nugget;
  return p;
}

SourceDataset two_points() {
  return {"g", Eigen::Vector2d(0.0, 1.0), std::nullopt, Eigen::Vector2d(1.0, 3.0)};
}

TEST(Mean, FarFromDataRevertsToBeta) {
  const auto ds = assemble_single_source(two_points());
  const auto m = raw_model(ds, gp_params(2.0, 1e-8));
  const double beta = unscale_output(m.fit.params.beta, ds.scaler)(0);
  EXPECT_NEAR(predict_mean(m, {Eigen::VectorXd::Constant(1, 50.0), "g", std::nullopt}), beta, 1e-12);
}

TEST(Mean, InterpolatesTrainingPoint) {
  const auto ds = assemble_single_source(two_points());
  const auto m = raw_model(ds, gp_params(0.0, 1e-8));
  EXPECT_NEAR(predict_mean(m, {Eigen::VectorXd::Zero(1), "g", std::nullopt}), 1.0, 1e-6);
  EXPECT_NEAR(predict_mean(m, {Eigen::VectorXd::Ones(1), "g", std::nullopt}), 3.0, 1e-6);
}

// Dense closed form with explicit inverse, natural units.
Prediction dense_predict(const LmgpModel& m, const Eigen::VectorXd& r, double c) {
  const FusionDataset& ds = m.dataset;
  Eigen::MatrixXd rm = build_correlation_matrix(ds, m.fit.params.correlation);
  const Eigen::MatrixXd ri = rm.inverse();
  const Eigen::VectorXd f = Eigen::VectorXd::Ones(ds.n());
  const double beta = f.dot(ri * ds.y) / f.dot(ri * f);
  const double s2 = (ds.y - beta * f).dot(ri * (ds.y - beta * f)) / ds.n();
  const double u = 1.0 - f.dot(ri * r);
  const double mean = beta + r.dot(ri * (ds.y - beta * f));
  const double var = s2 * (c - r.dot(ri * r) + u * u / f.dot(ri * f));
  const double ys = ds.scaler.y_std;
  return {mean * ys + ds.scaler.y_mean, var * ys * ys};
}

TEST(Mean, MidpointMatchesDenseOracle) {
  const auto ds = assemble_single_source(two_points());
  const auto m = raw_model(ds, gp_params(0.3, 1e-6));
  const Eigen::VectorXd r = Eigen::Vector2d::Constant(std::exp(-std::pow(10.0, 0.3) * 0.25));
  const auto oracle = dense_predict(m, r, 1.0);
  const auto got = predict(m, {Eigen::VectorXd::Constant(1, 0.5), "g", std::nullopt});
  EXPECT_NEAR(got.mean, oracle.mean, 1e-8);
  EXPECT_NEAR(got.variance, oracle.variance, 1e-8);
}

TEST(Cov, ThreePointFusionOracleAndSymmetry) {
  SourceDataset h{"h", Eigen::Vector2d(0.1, 0.7), std::nullopt, Eigen::Vector2d(1.0, -0.5)};
  SourceDataset l{"l", Eigen::MatrixXd::Constant(1, 1, 0.4), std::nullopt, Eigen::VectorXd::Constant(1, 2.0)};
  const auto ds = assemble_fusion({h, l}, "h", EncodingStrategy::kSingle);
  CorrelationParams p = gp_params(0.5, 1e-3);
  p.map = zero_latent_map(ds.level_counts);
  p.map.a(1, 1) = 0.7;
  const auto m = raw_model(ds, p);
  const Query qa{Eigen::VectorXd::Constant(1, 0.25), "h", std::nullopt};
  const Query qb{Eigen::VectorXd::Constant(1, 3.0), "l", std::nullopt};
  EXPECT_NEAR(predict_cov(m, qa, qb), predict_cov(m, qb, qa), 1e-12);

  // Far query on the high-fidelity source: variance at least the prior variance.
  const Query far{Eigen::VectorXd::Constant(1, 40.0), "h", std::nullopt};
  const double ys2 = ds.scaler.y_std * ds.scaler.y_std;
  EXPECT_GE(predict(m, far).variance, m.fit.params.sigma2 * ys2 * (1 - 1e-12));

  Eigen::VectorXd r(3);
  const double w = std::pow(10.0, 0.5);
  const Eigen::VectorXd xs = scale(Eigen::Vector3d(0.1, 0.7, 0.4), ds.scaler).col(0);
  const double xq = scale(Eigen::MatrixXd::Constant(1, 1, 0.25), ds.scaler)(0, 0);
  for (int i = 0; i < 3; ++i) {
    const double latent = i == 2 ? 0.49 : 0.0;
    r(i) = std::exp(-latent - w * (xs(i) - xq) * (xs(i) - xq));
  }
  const auto oracle = dense_predict(m, r, 1.0);
  const auto got = predict(m, qa);
  EXPECT_NEAR(got.mean, oracle.mean, 1e-8);
  EXPECT_NEAR(got.variance, oracle.variance, 1e-8);
}

TEST(Cov, TrainingPointVarianceTiny) {
  const auto ds = assemble_single_source(two_points());
  const auto m = raw_model(ds, gp_params(0.0, 1e-8));
  const auto pr = predict(m, {Eigen::VectorXd::Zero(1), "g", std::nullopt});
  const double ys2 = ds.scaler.y_std * ds.scaler.y_std;
  EXPECT_LE(pr.variance, 1e-7 * m.fit.params.sigma2 * ys2);
  const auto noisy = predict(m, {Eigen::VectorXd::Zero(1), "g", std::nullopt}, true);
  EXPECT_NEAR(noisy.variance - pr.variance, noise_variance(m), 1e-15);
}

TEST(Cov, MatrixPositiveSemidefinite) {
  const auto ds = testing::small_fusion();
  TrainConfig cfg;
  cfg.n_starts = 3;
  const auto m = train_model(ds, cfg);
  std::vector<Query> qs;
  Rng rng(4);
  for (int i = 0; i < 12; ++i) {
    qs.push_back({Eigen::Vector2d(rng.uniform(), rng.uniform()), ds.registry[static_cast<std::size_t>(i % 3)].label,
                  std::nullopt});
  }
  const Eigen::MatrixXd c = predict_cov_matrix(m, qs);
  EXPECT_TRUE(c.isApprox(c.transpose(), 1e-14));
  const double ys2 = ds.scaler.y_std * ds.scaler.y_std;
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c).eigenvalues().minCoeff(),
            -1e-8 * m.fit.params.sigma2 * ys2);
  const auto batch = predict_batch(m, qs, false, 2);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    EXPECT_NEAR(batch[i].variance, c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)), 1e-12);
    EXPECT_EQ(batch[i].mean, predict_mean(m, qs[i]));
  }
}

TEST(Mean, RigidMotionInvariance) {
  const auto ds = testing::small_fusion();
  CorrelationParams p = gp_params(0.0, 1e-4);
  p.omega = Eigen::Vector2d(0.2, -0.3);
  p.map = zero_latent_map(ds.level_counts);
  p.map.a << 0.3, 0.1, -0.5, 0.8, 1.0, -0.2;
  RigidTransform t;
  t.rotation << 0.6, -0.8, 0.8, 0.6;
  t.translation << 1.5, -0.25;
  CorrelationParams q = p;
  q.map = transform_latent_map(p.map, t);
  const auto a = raw_model(ds, p);
  const auto b = raw_model(ds, q);
  for (const auto& src : ds.registry) {
    const Query qq{Eigen::Vector2d(0.3, 0.6), src.label, std::nullopt};
    EXPECT_NEAR(predict_mean(a, qq), predict_mean(b, qq), 1e-10);
    EXPECT_NEAR(predict(a, qq).variance, predict(b, qq).variance, 1e-10);
  }
}

TEST(Calibration, HighFidelityThetaHatConsistency) {
  const auto ds = testing::small_calibration();
  TrainConfig cfg;
  cfg.n_starts = 3;
  const auto m = train_model(ds, cfg);
  const Eigen::VectorXd th = calibration_estimate(m);
  ASSERT_EQ(th.size(), 1);
  for (double x : {0.05, 0.4, 0.9}) {
    const Eigen::VectorXd xv = Eigen::VectorXd::Constant(1, x);
    EXPECT_NEAR(predict_mean(m, {xv, "h", std::nullopt}), predict_mean(m, {xv, "h", th}), 1e-12);
  }
  EXPECT_THROW((void)predict_mean(m, {Eigen::VectorXd::Zero(1), "l", std::nullopt}), Error);
  EXPECT_THROW((void)predict_mean(m, {Eigen::VectorXd::Zero(1), "zz", std::nullopt}), Error);
  EXPECT_THROW((void)predict_mean(m, {Eigen::VectorXd::Zero(2), "h", std::nullopt}), Error);
}

TEST(Noise, ScalesWithOutputUnits) {
  SourceDataset s = testing::make_source("g", testing::grid_1d(8, 0, 1),
                                         [](const Eigen::VectorXd& v) { return std::sin(6 * v(0)); });
  s.outputs(3) += 0.1;
  const auto ds = assemble_single_source(s);
  SourceDataset s2 = s;
  s2.outputs *= 2.0;
  const auto ds2 = assemble_single_source(s2);
  const auto p = gp_params(1.0, 1e-2);
  const auto a = raw_model(ds, p);
  const auto b = raw_model(ds2, p);
  EXPECT_NEAR(ds2.scaler.y_std, 2 * ds.scaler.y_std, 1e-12);
  EXPECT_NEAR(noise_variance(b), 4 * noise_variance(a), 1e-12);
  const auto tiny = raw_model(ds, gp_params(1.0, 1e-8));
  EXPECT_LT(noise_variance(tiny), 1e-7);
}

TEST(Fit, NoiselessInterpolationAfterTraining) {
  SourceDataset s = testing::make_source("g", testing::grid_1d(5, -1, 2),
                                         [](const Eigen::VectorXd& v) { return std::sin(3 * v(0)) + 2; });
  TrainConfig cfg;
  cfg.n_starts = 6;
  const auto m = train_model(assemble_single_source(s), cfg);
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(predict_mean(m, {s.inputs.row(i).transpose(), "g", std::nullopt}), s.outputs(i),
                1e-4 * std::abs(s.outputs(i)));
  }
}

}  // namespace
}  // namespace lmgp
