#include "lmgp/predict.hpp"

#include <cmath>

#include "lmgp/error.hpp"
#include "lmgp/kernel.hpp"
#include "lmgp/parallel.hpp"

namespace lmgp {
namespace {

// Query in model units.
struct Resolved {
  Eigen::VectorXd x;
  Eigen::Vector2d z;
  Eigen::VectorXd theta;
  bool missing = false;

  bool operator==(const Resolved& o) const {
    return x == o.x && z == o.z && missing == o.missing && theta == o.theta;
  }
};

Resolved resolve(const LmgpModel& model, const Query& q) {
  const FusionDataset& ds = model.dataset;
  const int s = ds.source_index(q.source);
  if (s < 0) fail_validation("unknown source '" + q.source + "'");
  if (q.x.size() != ds.d_x()) fail_validation("query has " + std::to_string(q.x.size()) + " inputs, model expects " +
                                              std::to_string(ds.d_x()));
  Resolved r;
  r.x = scale(q.x.transpose(), ds.scaler).row(0).transpose();
  r.z = model.fit.latent_positions.row(s).transpose();
  if (!ds.calibration) {
    if (q.theta && q.theta->size() > 0) fail_validation("model has no calibration parameters");
    r.theta.resize(0);
    return r;
  }
  if (q.theta) {
    if (q.theta->size() != ds.d_theta()) fail_validation("query calibration vector has wrong length");
    r.theta = scale(q.theta->transpose(), ds.scaler, ColumnBlock::kCalibration).row(0).transpose();
  } else if (s == 0) {
    r.missing = true;
    r.theta = Eigen::VectorXd::Zero(ds.d_theta());
  } else {
    fail_validation("source '" + q.source + "' requires calibration values");
  }
  return r;
}

Eigen::VectorXd cross(const LmgpModel& model, const Resolved& q) {
  return cross_correlation(model.dataset, model.fit.params.correlation, q.x, q.z, q.theta, q.missing);
}

double mean_from(const LmgpModel& model, const Eigen::VectorXd& r) {
  const double m = model.fit.params.beta(0) + r.dot(model.fit.cache->alpha);
  return m * model.dataset.scaler.y_std + model.dataset.scaler.y_mean;
}

// Scaled-unit covariance of the latent function.
double cov_from(const LmgpModel& model, const Resolved& a, const Eigen::VectorXd& ra, const Resolved& b,
                const Eigen::VectorXd& rb) {
  const auto& cache = *model.fit.cache;
  const auto& p = model.fit.params.correlation;
  const double prior = query_correlation(p, a.x, a.z, a.theta, a.missing, b.x, b.z, b.theta, b.missing);
  const Eigen::VectorXd va = cache.chol.matrixL().solve(ra);
  const Eigen::VectorXd vb = (&ra == &rb) ? va : Eigen::VectorXd(cache.chol.matrixL().solve(rb));
  const Eigen::VectorXd ua = Eigen::VectorXd::Ones(1) - cache.rinv_f.transpose() * ra;
  const Eigen::VectorXd ub = Eigen::VectorXd::Ones(1) - cache.rinv_f.transpose() * rb;
  return model.fit.params.sigma2 * (prior - va.dot(vb) + ua.dot(cache.ftrf.solve(ub)));
}

double finish_variance(const LmgpModel& model, double v_scaled, bool with_noise) {
  const double s2 = model.fit.params.sigma2;
  if (v_scaled < 0.0) {
    if (v_scaled < -1e-10 * s2) fail_numerical("negative predictive variance " + std::to_string(v_scaled));
    v_scaled = 0.0;
  }
  if (with_noise) v_scaled += model.fit.params.correlation.nugget * s2;
  const double ys = model.dataset.scaler.y_std;
  return v_scaled * ys * ys;
}

}  // namespace

LmgpModel train_model(FusionDataset dataset, const TrainConfig& config) {
  LmgpModel m;
  m.fit = fit_lmgp(dataset, config);
  m.dataset = std::move(dataset);
  return m;
}

LmgpModel restore_model(FusionDataset dataset, const CorrelationParams& params, bool canonicalize) {
  validate(dataset);
  LmgpModel m;
  m.fit = finalize_fit(dataset, params, canonicalize);
  m.dataset = std::move(dataset);
  return m;
}

double predict_mean(const LmgpModel& model, const Query& query) {
  return mean_from(model, cross(model, resolve(model, query)));
}

double predict_cov(const LmgpModel& model, const Query& a, const Query& b, bool with_noise) {
  const Resolved ra = resolve(model, a);
  const Resolved rb = resolve(model, b);
  const Eigen::VectorXd ca = cross(model, ra);
  if (ra == rb) return finish_variance(model, cov_from(model, ra, ca, ra, ca), with_noise);
  const Eigen::VectorXd cb = cross(model, rb);
  const double ys = model.dataset.scaler.y_std;
  return cov_from(model, ra, ca, rb, cb) * ys * ys;
}

Prediction predict(const LmgpModel& model, const Query& query, bool with_noise) {
  const Resolved q = resolve(model, query);
  const Eigen::VectorXd r = cross(model, q);
  return {mean_from(model, r), finish_variance(model, cov_from(model, q, r, q, r), with_noise)};
}

std::vector<Prediction> predict_batch(const LmgpModel& model, const std::vector<Query>& queries, bool with_noise,
                                      int threads) {
  std::vector<Prediction> out(queries.size());
  parallel_for(static_cast<int>(queries.size()), threads,
               [&](int i) { out[static_cast<std::size_t>(i)] = predict(model, queries[static_cast<std::size_t>(i)], with_noise); });
  return out;
}

Eigen::VectorXd predict_means(const LmgpModel& model, const Eigen::MatrixXd& x, const std::string& source,
                              const std::optional<Eigen::MatrixXd>& theta, int threads) {
  if (theta && theta->rows() != x.rows()) fail_validation("calibration rows do not match input rows");
  Eigen::VectorXd out(x.rows());
  parallel_for(static_cast<int>(x.rows()), threads, [&](int i) {
    Query q{x.row(i).transpose(), source, std::nullopt};
    if (theta) q.theta = theta->row(i).transpose();
    out(i) = predict_mean(model, q);
  });
  return out;
}

Eigen::MatrixXd predict_cov_matrix(const LmgpModel& model, const std::vector<Query>& queries) {
  const auto n = static_cast<Eigen::Index>(queries.size());
  std::vector<Resolved> res;
  std::vector<Eigen::VectorXd> rs;
  for (const auto& q : queries) {
    res.push_back(resolve(model, q));
    rs.push_back(cross(model, res.back()));
  }
  const double ys2 = model.dataset.scaler.y_std * model.dataset.scaler.y_std;
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    for (Eigen::Index j = i; j < n; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      const double v = cov_from(model, res[si], rs[si], res[sj], rs[sj]) * ys2;
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

double noise_variance(const LmgpModel& model) {
  const double ys = model.dataset.scaler.y_std;
  return model.fit.params.correlation.nugget * model.fit.params.sigma2 * ys * ys;
}

Eigen::VectorXd calibration_estimate(const LmgpModel& model) {
  if (!model.dataset.calibration) return {};
  return unscale(model.fit.params.correlation.theta_hat.transpose(), model.dataset.scaler, ColumnBlock::kCalibration)
      .row(0)
      .transpose();
}

}  // namespace lmgp
