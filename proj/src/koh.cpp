#include "lmgp/koh.hpp"

#include <cmath>
#include <limits>

#include "lmgp/error.hpp"
#include "lmgp/optimizer.hpp"
#include "lmgp/parallel.hpp"
#include "lmgp/random.hpp"

namespace lmgp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Bounds column_bounds(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd all(a.rows() + b.rows(), a.cols());
  all << a, b;
  Bounds out{all.colwise().minCoeff().transpose(), all.colwise().maxCoeff().transpose()};
  for (Eigen::Index j = 0; j < out.lower.size(); ++j) {
    if (!(out.upper(j) > out.lower(j))) out.upper(j) = out.lower(j) + 1.0;
  }
  return out;
}

// Low-fidelity source with theta appended to the inputs.
SourceDataset stacked_low(const SourceDataset& low) {
  SourceDataset s;
  s.label = low.label;
  s.inputs.resize(low.rows(), low.inputs.cols() + low.calib_inputs->cols());
  s.inputs << low.inputs, *low.calib_inputs;
  s.outputs = low.outputs;
  return s;
}

AssembleOptions stacked_bounds(const Scaler& sc) {
  AssembleOptions o;
  Bounds b;
  b.lower.resize(sc.x_min.size() + sc.theta_min.size());
  b.upper.resize(b.lower.size());
  b.lower << sc.x_min, sc.theta_min;
  b.upper << sc.x_max, sc.theta_max;
  o.x_bounds = b;
  return o;
}

double sq_dist(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b,
               const Eigen::VectorXd& w) {
  double e = 0.0;
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    const double d = a(k) - b(k);
    e += w(k) * d * d;
  }
  return e;
}

Eigen::VectorXd pow10(const Eigen::VectorXd& v) {
  return v.unaryExpr([](double e) { return std::pow(10.0, e); });
}

// Rows of (x, theta) in the module-1 input space: low rows, then high rows at theta*.
Eigen::MatrixXd augmented_inputs(const KohData& data, const Eigen::VectorXd& theta_star) {
  const Eigen::Index p = data.p();
  const Eigen::Index q = data.q();
  Eigen::MatrixXd u(p + q, data.d_x() + data.d_theta());
  if (p > 0) u.topRows(p) << data.x_low, data.theta_low;
  if (q > 0) u.bottomRows(q) << data.x_high, theta_star.transpose().replicate(q, 1);
  return u;
}

Eigen::MatrixXd design(Eigen::Index p, Eigen::Index q) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p + q, 2);
  h.col(0).setOnes();
  h.col(1).tail(q).setOnes();
  return h;
}

struct Evaluation {
  double objective = kInf;
  Eigen::LLT<Eigen::MatrixXd> chol;
  Eigen::MatrixXd vinv_h;
  Eigen::Matrix2d w;
  Eigen::Vector2d beta;
  Eigen::VectorXd alpha;
};

bool evaluate(const KohData& data, const KohModule1& m1, const KohPhi& phi, Evaluation& ev) {
  const KohJoint joint =
      koh_assemble_joint(data, phi.theta_star, m1.psi1, m1.nugget1, phi.psi2, phi.lambda);
  ev.chol.compute(joint.v);
  if (ev.chol.info() != Eigen::Success) return false;
  const auto diag = ev.chol.matrixLLT().diagonal();
  if (!(diag.array() > 0.0).all() || !diag.allFinite()) return false;
  ev.vinv_h = ev.chol.solve(joint.h);
  const Eigen::Matrix2d a = joint.h.transpose() * ev.vinv_h;
  Eigen::LLT<Eigen::Matrix2d> small(a);
  if (small.info() != Eigen::Success) return false;
  ev.w = small.solve(Eigen::Matrix2d::Identity());
  ev.beta = ev.w * (ev.vinv_h.transpose() * data.d);
  const Eigen::VectorXd r = data.d - joint.h * ev.beta;
  ev.alpha = ev.chol.solve(r);
  const double log_det_v = 2.0 * diag.array().log().sum();
  const double log_det_w = -2.0 * small.matrixLLT().diagonal().array().log().sum();
  ev.objective = 0.5 * (log_det_v + log_det_w + r.dot(ev.alpha));
  if (!std::isfinite(ev.objective)) ev.objective = kInf;
  return std::isfinite(ev.objective);
}

bool phi_in_bounds(const KohData& data, const KohPhi& phi) {
  if (phi.theta_star.size() != data.d_theta() || phi.psi2.omega.size() != data.d_x()) {
    fail_validation("KOH parameters do not match data dimensions");
  }
  if ((phi.theta_star.array() < 0.0).any() || (phi.theta_star.array() > 1.0).any()) return false;
  if ((phi.psi2.omega.array() < kOmegaLower).any() || (phi.psi2.omega.array() > kOmegaUpper).any()) return false;
  const double ls = std::log10(phi.psi2.sigma2);
  const double ll = std::log10(phi.lambda);
  return ls >= kKohLogSigma2Lower && ls <= kKohLogSigma2Upper && ll >= kKohLogLambdaLower && ll <= kKohLogLambdaUpper;
}

// Packed module-2 vector: [theta* | log10 sigma2_2 | omega_2 | log10 lambda].
KohPhi unpack(const Eigen::VectorXd& v, Eigen::Index d_theta, Eigen::Index d_x) {
  KohPhi phi;
  phi.theta_star = v.head(d_theta);
  phi.psi2.sigma2 = std::pow(10.0, v(d_theta));
  phi.psi2.omega = v.segment(d_theta + 1, d_x);
  phi.lambda = std::pow(10.0, v(d_theta + 1 + d_x));
  return phi;
}

}  // namespace

KohData koh_prepare(const SourceDataset& low, const SourceDataset& high, const AssembleOptions& options) {
  if (!low.calib_inputs) fail_validation("low-fidelity source needs calibration columns");
  if (high.calib_inputs) fail_validation("high-fidelity source must not carry calibration columns");
  if (low.label == high.label) fail_validation("duplicate source label '" + low.label + "'");
  if (low.inputs.rows() != low.rows() || low.calib_inputs->rows() != low.rows() ||
      high.inputs.rows() != high.rows()) {
    fail_validation("row counts differ within a source");
  }
  if (high.rows() > 0 && high.inputs.cols() != low.inputs.cols()) {
    fail_validation("input dimension mismatch across sources");
  }
  if (low.rows() < 1) fail_validation("low-fidelity source has no rows");
  if (!high.inputs.allFinite() || !high.outputs.allFinite()) fail_validation("non-finite high-fidelity values");

  KohData data;
  data.low_label = low.label;
  data.high_label = high.label;
  Scaler& sc = data.scaler;
  const Bounds xb = options.x_bounds ? *options.x_bounds
                                     : column_bounds(low.inputs, high.rows() > 0 ? high.inputs
                                                                                 : Eigen::MatrixXd(0, low.inputs.cols()));
  const Bounds tb = options.theta_bounds ? *options.theta_bounds
                                         : column_bounds(*low.calib_inputs, Eigen::MatrixXd(0, low.calib_inputs->cols()));
  sc.x_min = xb.lower;
  sc.x_max = xb.upper;
  sc.theta_min = tb.lower;
  sc.theta_max = tb.upper;

  // The standalone low-fidelity table validates the bounds and fixes the output scale.
  const FusionDataset gp = assemble_single_source(stacked_low(low), stacked_bounds(sc));
  sc.y_mean = gp.scaler.y_mean;
  sc.y_std = gp.scaler.y_std;
  data.x_low = gp.x.leftCols(low.inputs.cols());
  data.theta_low = gp.x.rightCols(low.calib_inputs->cols());
  data.x_high = high.rows() > 0 ? scale(high.inputs, sc) : Eigen::MatrixXd(0, low.inputs.cols());
  data.d.resize(low.rows() + high.rows());
  data.d << gp.y, scale_output(high.outputs, sc);
  return data;
}

KohJoint koh_assemble_joint(const KohData& data, const Eigen::VectorXd& theta_star, const KohGpParams& psi1,
                            double nugget1, const KohGpParams& psi2, double lambda) {
  if (theta_star.size() != data.d_theta()) fail_validation("theta* has wrong length");
  if (psi1.omega.size() != data.d_x() + data.d_theta()) fail_validation("module-1 roughness has wrong length");
  if (psi2.omega.size() != data.d_x()) fail_validation("discrepancy roughness has wrong length");
  const Eigen::Index p = data.p();
  const Eigen::Index n = p + data.q();
  const Eigen::MatrixXd u = augmented_inputs(data, theta_star);
  const Eigen::VectorXd w1 = pow10(psi1.omega);
  const Eigen::VectorXd w2 = pow10(psi2.omega);
  KohJoint out;
  out.h = design(p, data.q());
  out.v.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      double c = psi1.sigma2 * std::exp(-sq_dist(u.row(i), u.row(j), w1));
      if (i >= p && j >= p) {
        c += psi2.sigma2 * std::exp(-sq_dist(data.x_high.row(i - p), data.x_high.row(j - p), w2));
      }
      out.v(i, j) = c;
      out.v(j, i) = c;
    }
    out.v(i, i) += i < p ? nugget1 * psi1.sigma2 : lambda;
  }
  return out;
}

KohBeta koh_profile_beta(const Eigen::MatrixXd& v, const Eigen::MatrixXd& h, const Eigen::VectorXd& d) {
  if (h.cols() != 2 || h.rows() != v.rows() || d.size() != v.rows()) fail_validation("KOH dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> chol(v);
  if (chol.info() != Eigen::Success) fail_numerical("V_d is not positive definite");
  const Eigen::MatrixXd vinv_h = chol.solve(h);
  const Eigen::Matrix2d a = h.transpose() * vinv_h;
  Eigen::FullPivLU<Eigen::Matrix2d> lu(a);
  if (!lu.isInvertible()) fail_numerical("W is singular; both sources need at least one row");
  KohBeta out;
  out.w = lu.inverse();
  out.beta = out.w * (vinv_h.transpose() * d);
  return out;
}

double koh_objective(const KohData& data, const KohModule1& module1, const KohPhi& phi) {
  if (!phi_in_bounds(data, phi)) return kInf;
  Evaluation ev;
  return evaluate(data, module1, phi, ev) ? ev.objective : kInf;
}

KohModel koh_finalize(KohData data, const KohModule1& module1, const KohPhi& phi) {
  KohModel m;
  Evaluation ev;
  if (!evaluate(data, module1, phi, ev)) fail_numerical("V_d is not positive definite at the KOH estimate");
  m.data = std::move(data);
  m.module1 = module1;
  m.phi = phi;
  m.beta = ev.beta;
  m.objective = ev.objective;
  m.chol = std::move(ev.chol);
  m.alpha = std::move(ev.alpha);
  m.vinv_h = std::move(ev.vinv_h);
  m.w = ev.w;
  return m;
}

KohModel koh_fit(const SourceDataset& low, const SourceDataset& high, const KohConfig& config) {
  if (config.n_starts < 1) fail_validation("n_starts must be >= 1");
  if (high.rows() < 1) fail_validation("high-fidelity source has no rows");
  KohData data = koh_prepare(low, high, config.bounds);

  // Module 1: low-fidelity GP over (x, theta).
  const FusionDataset gp = assemble_single_source(stacked_low(low), stacked_bounds(data.scaler));
  TrainConfig c1 = config.module1;
  c1.seed = derive_seed(config.seed, 1);
  c1.threads = config.threads;
  const FitResult f1 = fit_lmgp(gp, c1);
  KohModule1 m1;
  m1.psi1.sigma2 = f1.params.sigma2;
  m1.psi1.omega = f1.params.correlation.omega;
  m1.nugget1 = f1.params.correlation.nugget;

  // Module 2.
  const Eigen::Index dt = data.d_theta();
  const Eigen::Index dx = data.d_x();
  const Eigen::Index size = dt + dx + 2;
  Eigen::VectorXd lo(size), hi(size), init_lo(size), init_hi(size);
  lo << Eigen::VectorXd::Zero(dt), kKohLogSigma2Lower, Eigen::VectorXd::Constant(dx, kOmegaLower), kKohLogLambdaLower;
  hi << Eigen::VectorXd::Ones(dt), kKohLogSigma2Upper, Eigen::VectorXd::Constant(dx, kOmegaUpper), kKohLogLambdaUpper;
  init_lo << Eigen::VectorXd::Zero(dt), -3.0, Eigen::VectorXd::Constant(dx, -3.0), -8.0;
  init_hi << Eigen::VectorXd::Ones(dt), 0.0, Eigen::VectorXd::Constant(dx, 3.0), -2.0;

  auto value = [&](const Eigen::VectorXd& v) { return koh_objective(data, m1, unpack(v, dt, dx)); };
  GradientObjective objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd* g) {
    const double f = value(v);
    if (g != nullptr && std::isfinite(f)) *g = central_difference_gradient(value, v, lo, hi);
    return f;
  };
  BoxLbfgsOptions opts;
  opts.max_iterations = config.max_iterations;
  opts.f_rel_tol = config.tolerance;

  Rng rng(derive_seed(config.seed, 2));
  const Eigen::MatrixXd starts = latin_hypercube(config.n_starts, init_lo, init_hi, rng);
  std::vector<BoxLbfgsResult> results(static_cast<std::size_t>(config.n_starts));
  parallel_for(config.n_starts, config.threads, [&](int s) {
    results[static_cast<std::size_t>(s)] = minimize_box_lbfgs(objective, starts.row(s).transpose(), lo, hi, opts);
  });

  int best = -1;
  int converged = 0;
  for (int s = 0; s < config.n_starts; ++s) {
    const auto& r = results[static_cast<std::size_t>(s)];
    if (!std::isfinite(r.f)) continue;
    if (r.converged) ++converged;
    if (best < 0 || r.f < results[static_cast<std::size_t>(best)].f - 1e-12) best = s;
  }
  if (best < 0) fail_numerical("all KOH restarts were infeasible");
  KohModel m = koh_finalize(std::move(data), m1, unpack(results[static_cast<std::size_t>(best)].x, dt, dx));
  m.n_starts_converged = converged;
  return m;
}

Prediction koh_predict_high(const KohModel& model, const Eigen::VectorXd& x, bool with_noise) {
  const KohData& data = model.data;
  if (x.size() != data.d_x()) fail_validation("query has wrong input dimension");
  const Eigen::RowVectorXd xs = scale(x.transpose(), data.scaler).row(0);
  Eigen::RowVectorXd u(data.d_x() + data.d_theta());
  u << xs, model.phi.theta_star.transpose();
  const Eigen::MatrixXd aug = augmented_inputs(data, model.phi.theta_star);
  const auto& psi1 = model.module1.psi1;
  const auto& psi2 = model.phi.psi2;
  const Eigen::VectorXd w1 = pow10(psi1.omega);
  const Eigen::VectorXd w2 = pow10(psi2.omega);
  const Eigen::Index p = data.p();
  Eigen::VectorXd k(aug.rows());
  for (Eigen::Index i = 0; i < aug.rows(); ++i) {
    k(i) = psi1.sigma2 * std::exp(-sq_dist(aug.row(i), u, w1));
    if (i >= p) k(i) += psi2.sigma2 * std::exp(-sq_dist(data.x_high.row(i - p), xs, w2));
  }
  const Eigen::Vector2d hq(1.0, 1.0);
  const double mean = hq.dot(model.beta) + k.dot(model.alpha);
  const Eigen::VectorXd lk = model.chol.matrixL().solve(k);
  const Eigen::Vector2d uq = hq - model.vinv_h.transpose() * k;
  double var = psi1.sigma2 + psi2.sigma2 - lk.squaredNorm() + uq.dot(model.w * uq);
  const double prior = psi1.sigma2 + psi2.sigma2;
  if (var < 0.0) {
    if (var < -1e-10 * prior) fail_numerical("negative predictive variance");
    var = 0.0;
  }
  if (with_noise) var += model.phi.lambda;
  const double ys = data.scaler.y_std;
  return {mean * ys + data.scaler.y_mean, var * ys * ys};
}

Eigen::VectorXd koh_predict_means(const KohModel& model, const Eigen::MatrixXd& x) {
  const KohData& data = model.data;
  if (x.cols() != data.d_x()) fail_validation("query has wrong input dimension");
  const Eigen::MatrixXd xs = scale(x, data.scaler);
  const Eigen::MatrixXd aug = augmented_inputs(data, model.phi.theta_star);
  const auto& psi1 = model.module1.psi1;
  const auto& psi2 = model.phi.psi2;
  const Eigen::VectorXd w1 = pow10(psi1.omega);
  const Eigen::VectorXd w2 = pow10(psi2.omega);
  const Eigen::Index p = data.p();
  const double base = model.beta.sum();
  Eigen::RowVectorXd u(data.d_x() + data.d_theta());
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    u << xs.row(r), model.phi.theta_star.transpose();
    double m = base;
    for (Eigen::Index i = 0; i < aug.rows(); ++i) {
      double k = psi1.sigma2 * std::exp(-sq_dist(aug.row(i), u, w1));
      if (i >= p) k += psi2.sigma2 * std::exp(-sq_dist(data.x_high.row(i - p), xs.row(r), w2));
      m += k * model.alpha(i);
    }
    out(r) = m * data.scaler.y_std + data.scaler.y_mean;
  }
  return out;
}

Eigen::VectorXd koh_theta_estimate(const KohModel& model) {
  return unscale(model.phi.theta_star.transpose(), model.data.scaler, ColumnBlock::kCalibration).row(0).transpose();
}

}  // namespace lmgp
