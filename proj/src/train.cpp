#include "lmgp/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "lmgp/error.hpp"
#include "lmgp/optimizer.hpp"
#include "lmgp/parallel.hpp"
#include "lmgp/random.hpp"

namespace lmgp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kLn10 = std::log(10.0);

// Restart sub-box. Starting deep in the flat corners of the full box (all
// correlations ~0 or ~1) leaves the optimizer with no gradient to follow.
constexpr double kOmegaInitLower = -3.0;
constexpr double kOmegaInitUpper = 3.0;
constexpr double kLatentInit = 1.0;
constexpr double kLogNuggetInitLower = -7.0;
constexpr double kLogNuggetInitUpper = -1.0;
constexpr double kThetaInitLower = 0.0;
constexpr double kThetaInitUpper = 1.0;

double log_det_from_chol(const Eigen::LLT<Eigen::MatrixXd>& chol) {
  return 2.0 * chol.matrixLLT().diagonal().array().log().sum();
}

bool factorize(const Eigen::MatrixXd& r, Eigen::LLT<Eigen::MatrixXd>& chol) {
  chol.compute(r);
  if (chol.info() != Eigen::Success) return false;
  const auto diag = chol.matrixLLT().diagonal();
  return diag.allFinite() && (diag.array() > 0.0).all();
}

struct Profile {
  Eigen::VectorXd beta;
  Eigen::VectorXd alpha;  // R^-1 (y - F beta)
  double sigma2 = 0.0;
};

// Returns false when F^T R^-1 F is singular.
bool profile_with(const Eigen::LLT<Eigen::MatrixXd>& chol, const Eigen::MatrixXd& f, const Eigen::VectorXd& y,
                  Profile& out) {
  const Eigen::MatrixXd rinv_f = chol.solve(f);
  const Eigen::MatrixXd ftrf = f.transpose() * rinv_f;
  Eigen::LLT<Eigen::MatrixXd> small(ftrf);
  if (small.info() != Eigen::Success) return false;
  out.beta = small.solve(rinv_f.transpose() * y);
  const Eigen::VectorXd resid = y - f * out.beta;
  out.alpha = chol.solve(resid);
  out.sigma2 = resid.dot(out.alpha) / static_cast<double>(y.size());
  return std::isfinite(out.sigma2);
}

}  // namespace

void validate(const TrainConfig& config) {
  if (config.n_starts < 1) fail_validation("n_starts must be >= 1");
  if (config.screen_factor < 1) fail_validation("screen_factor must be >= 1");
  if (config.max_iterations < 1) fail_validation("max_iterations must be >= 1");
  if (!(config.tolerance > 0.0)) fail_validation("tolerance must be > 0");
  if (config.threads < 1) fail_validation("threads must be >= 1");
}

ParamLayout::ParamLayout(const FusionDataset& ds)
    : d_x_(ds.d_x()),
      map_rows_(std::accumulate(ds.level_counts.begin(), ds.level_counts.end(), Eigen::Index{0})),
      d_theta_(ds.d_theta()),
      size_(d_x_ + map_rows_ * kLatentDim + 1 + 2 * d_theta_),
      level_counts_(ds.level_counts) {}

Eigen::VectorXd ParamLayout::lower() const {
  Eigen::VectorXd v(size_);
  v.segment(omega_offset(), d_x_).setConstant(kOmegaLower);
  v.segment(map_offset(), map_size()).setConstant(-kLatentBound);
  v(nugget_offset()) = std::log10(kNuggetLower);
  v.segment(theta_offset(), d_theta_).setConstant(kThetaHatLower);
  v.segment(omega_theta_offset(), d_theta_).setConstant(kOmegaLower);
  return v;
}

Eigen::VectorXd ParamLayout::upper() const {
  Eigen::VectorXd v(size_);
  v.segment(omega_offset(), d_x_).setConstant(kOmegaUpper);
  v.segment(map_offset(), map_size()).setConstant(kLatentBound);
  v(nugget_offset()) = std::log10(kNuggetUpper);
  v.segment(theta_offset(), d_theta_).setConstant(kThetaHatUpper);
  v.segment(omega_theta_offset(), d_theta_).setConstant(kOmegaUpper);
  return v;
}

Eigen::VectorXd ParamLayout::initial_lower() const {
  Eigen::VectorXd v(size_);
  v.segment(omega_offset(), d_x_).setConstant(kOmegaInitLower);
  v.segment(map_offset(), map_size()).setConstant(-kLatentInit);
  v(nugget_offset()) = kLogNuggetInitLower;
  v.segment(theta_offset(), d_theta_).setConstant(kThetaInitLower);
  v.segment(omega_theta_offset(), d_theta_).setConstant(kOmegaInitLower);
  return v;
}

Eigen::VectorXd ParamLayout::initial_upper() const {
  Eigen::VectorXd v(size_);
  v.segment(omega_offset(), d_x_).setConstant(kOmegaInitUpper);
  v.segment(map_offset(), map_size()).setConstant(kLatentInit);
  v(nugget_offset()) = kLogNuggetInitUpper;
  v.segment(theta_offset(), d_theta_).setConstant(kThetaInitUpper);
  v.segment(omega_theta_offset(), d_theta_).setConstant(kOmegaInitUpper);
  return v;
}

Eigen::VectorXd ParamLayout::pack(const CorrelationParams& p) const {
  if (p.omega.size() != d_x_ || p.map.a.rows() != map_rows_ || p.theta_hat.size() != d_theta_ ||
      p.omega_theta.size() != d_theta_) {
    fail_validation("parameters do not match layout");
  }
  Eigen::VectorXd v(size_);
  v.segment(omega_offset(), d_x_) = p.omega;
  for (Eigen::Index r = 0; r < map_rows_; ++r) {
    for (Eigen::Index c = 0; c < kLatentDim; ++c) v(map_offset() + r * kLatentDim + c) = p.map.a(r, c);
  }
  v(nugget_offset()) = std::log10(p.nugget);
  v.segment(theta_offset(), d_theta_) = p.theta_hat;
  v.segment(omega_theta_offset(), d_theta_) = p.omega_theta;
  return v;
}

CorrelationParams ParamLayout::unpack(const Eigen::VectorXd& v) const {
  if (v.size() != size_) fail_validation("packed parameter vector has wrong length");
  CorrelationParams p;
  p.omega = v.segment(omega_offset(), d_x_);
  p.map.level_counts = level_counts_;
  p.map.a.resize(map_rows_, kLatentDim);
  for (Eigen::Index r = 0; r < map_rows_; ++r) {
    for (Eigen::Index c = 0; c < kLatentDim; ++c) p.map.a(r, c) = v(map_offset() + r * kLatentDim + c);
  }
  p.nugget = std::pow(10.0, v(nugget_offset()));
  p.theta_hat = v.segment(theta_offset(), d_theta_);
  p.omega_theta = v.segment(omega_theta_offset(), d_theta_);
  return p;
}

std::vector<std::string> ParamLayout::names() const {
  std::vector<std::string> out;
  for (Eigen::Index k = 0; k < d_x_; ++k) out.push_back("omega[" + std::to_string(k) + "]");
  for (Eigen::Index r = 0; r < map_rows_; ++r) {
    for (Eigen::Index c = 0; c < kLatentDim; ++c) {
      out.push_back("A[" + std::to_string(r) + "," + std::to_string(c) + "]");
    }
  }
  out.emplace_back("log10_nugget");
  for (Eigen::Index k = 0; k < d_theta_; ++k) out.push_back("theta_hat[" + std::to_string(k) + "]");
  for (Eigen::Index k = 0; k < d_theta_; ++k) out.push_back("omega_theta[" + std::to_string(k) + "]");
  return out;
}

Eigen::MatrixXd constant_basis(Eigen::Index n) { return Eigen::MatrixXd::Ones(n, 1); }

Eigen::VectorXd profile_beta(const Eigen::MatrixXd& r_delta, const Eigen::MatrixXd& f, const Eigen::VectorXd& y) {
  if (r_delta.rows() != y.size() || f.rows() != y.size()) fail_validation("profile_beta dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> chol;
  if (!factorize(r_delta, chol)) fail_numerical("correlation matrix is not positive definite");
  Profile p;
  if (!profile_with(chol, f, y, p)) fail_numerical("basis matrix is rank deficient");
  return p.beta;
}

double profile_sigma2(const Eigen::MatrixXd& r_delta, const Eigen::MatrixXd& f, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& beta) {
  Eigen::LLT<Eigen::MatrixXd> chol;
  if (!factorize(r_delta, chol)) fail_numerical("correlation matrix is not positive definite");
  const Eigen::VectorXd resid = y - f * beta;
  return std::max(0.0, resid.dot(chol.solve(resid)) / static_cast<double>(y.size()));
}

ProfiledLikelihood profiled_likelihood(const Eigen::MatrixXd& r_delta, const Eigen::MatrixXd& f,
                                       const Eigen::VectorXd& y) {
  ProfiledLikelihood out;
  Eigen::LLT<Eigen::MatrixXd> chol;
  Profile p;
  if (!factorize(r_delta, chol) || !profile_with(chol, f, y, p) || !(p.sigma2 > 0.0)) {
    out.objective = kInf;
    return out;
  }
  out.beta = p.beta;
  out.sigma2 = p.sigma2;
  out.objective = static_cast<double>(y.size()) * std::log(p.sigma2) + log_det_from_chol(chol);
  if (!std::isfinite(out.objective)) out.objective = kInf;
  return out;
}

double objective_L(const FusionDataset& ds, const CorrelationParams& params) {
  return profiled_likelihood(build_correlation_matrix(ds, params), constant_basis(ds.n()), ds.y).objective;
}

double objective_with_gradient(const FusionDataset& ds, const ParamLayout& layout, const Eigen::VectorXd& packed,
                               Eigen::VectorXd* grad) {
  const CorrelationParams p = layout.unpack(packed);
  const Eigen::MatrixXd r = build_correlation_matrix(ds, p);
  const Eigen::Index n = ds.n();
  Eigen::LLT<Eigen::MatrixXd> chol;
  Profile prof;
  if (!factorize(r, chol) || !profile_with(chol, constant_basis(n), ds.y, prof) || !(prof.sigma2 > 0.0)) return kInf;
  const double objective = static_cast<double>(n) * std::log(prof.sigma2) + log_det_from_chol(chol);
  if (!std::isfinite(objective)) return kInf;
  if (grad == nullptr) return objective;

  // dL/dp = sum_ij K_ij dR_ij/dp with K = R^-1 - alpha alpha^T / sigma2.
  Eigen::MatrixXd k = chol.solve(Eigen::MatrixXd::Identity(n, n));
  k.noalias() -= prof.alpha * prof.alpha.transpose() / prof.sigma2;

  grad->setZero(layout.size());
  Eigen::VectorXd& g = *grad;
  const Eigen::Index dx = ds.d_x();
  const Eigen::Index dt = ds.d_t();
  const Eigen::Index dth = ds.d_theta();
  const Eigen::VectorXd w = p.omega.unaryExpr([](double v) { return std::pow(10.0, v); });
  const Eigen::VectorXd wt = p.omega_theta.unaryExpr([](double v) { return std::pow(10.0, v); });
  const Eigen::MatrixXd zs = source_positions(ds, p.map);
  std::vector<Eigen::Index> var_offset(static_cast<std::size_t>(dt), 0);
  for (Eigen::Index v = 1; v < dt; ++v) {
    var_offset[static_cast<std::size_t>(v)] = var_offset[static_cast<std::size_t>(v - 1)] + ds.level_counts[v - 1];
  }
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x = ds.x;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> th = ds.theta;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (ds.theta_missing(i)) th.row(i) = p.theta_hat.transpose();
  }

  Eigen::VectorXd g_omega = Eigen::VectorXd::Zero(dx);
  Eigen::VectorXd g_omega_theta = Eigen::VectorXd::Zero(dth);
  Eigen::VectorXd g_theta = Eigen::VectorXd::Zero(dth);
  Eigen::MatrixXd g_map = Eigen::MatrixXd::Zero(p.map.a.rows(), kLatentDim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int si = ds.row_source[static_cast<std::size_t>(i)];
    const bool mi = ds.theta_missing(i);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      // Factor 2 accounts for the symmetric (j, i) entry.
      const double m = 2.0 * k(j, i) * r(i, j);
      if (m == 0.0) continue;
      for (Eigen::Index c = 0; c < dx; ++c) {
        const double d = x(i, c) - x(j, c);
        g_omega(c) -= m * kLn10 * w(c) * d * d;
      }
      const int sj = ds.row_source[static_cast<std::size_t>(j)];
      if (si != sj) {
        const Eigen::RowVector2d dz = zs.row(si) - zs.row(sj);
        for (Eigen::Index v = 0; v < dt; ++v) {
          const Eigen::Index ri = var_offset[static_cast<std::size_t>(v)] + ds.t(i, v);
          const Eigen::Index rj = var_offset[static_cast<std::size_t>(v)] + ds.t(j, v);
          if (ri == rj) continue;
          g_map.row(ri) -= 2.0 * m * dz;
          g_map.row(rj) += 2.0 * m * dz;
        }
      }
      const bool mj = ds.theta_missing(j);
      if (dth > 0 && !(mi && mj)) {
        for (Eigen::Index c = 0; c < dth; ++c) {
          const double d = th(i, c) - th(j, c);
          g_omega_theta(c) -= m * kLn10 * wt(c) * d * d;
          if (mi) g_theta(c) -= 2.0 * m * wt(c) * d;
          if (mj) g_theta(c) += 2.0 * m * wt(c) * d;
        }
      }
    }
  }
  g.segment(layout.omega_offset(), dx) = g_omega;
  for (Eigen::Index rr = 0; rr < g_map.rows(); ++rr) {
    for (Eigen::Index c = 0; c < kLatentDim; ++c) g(layout.map_offset() + rr * kLatentDim + c) = g_map(rr, c);
  }
  g(layout.nugget_offset()) = k.diagonal().sum() * p.nugget * kLn10;
  g.segment(layout.theta_offset(), dth) = g_theta;
  g.segment(layout.omega_theta_offset(), dth) = g_omega_theta;
  return objective;
}

Eigen::VectorXd gradient_L(const FusionDataset& ds, const ParamLayout& layout, const Eigen::VectorXd& packed,
                           GradientMode mode) {
  if (mode == GradientMode::kAnalytic) {
    Eigen::VectorXd g;
    if (!std::isfinite(objective_with_gradient(ds, layout, packed, &g))) {
      fail_numerical("gradient requested at an infeasible point");
    }
    return g;
  }
  auto f = [&](const Eigen::VectorXd& v) { return objective_with_gradient(ds, layout, v, nullptr); };
  if (!std::isfinite(f(packed))) fail_numerical("gradient requested at an infeasible point");
  return central_difference_gradient(f, packed, layout.lower(), layout.upper());
}

RigidTransform canonical_transform(const Eigen::MatrixXd& positions, std::span<const int> anchors) {
  RigidTransform t;
  const auto k = static_cast<int>(positions.rows());
  if (k == 0 || anchors.empty()) return t;
  auto valid = [&](std::size_t a) { return a < anchors.size() && anchors[a] >= 0 && anchors[a] < k; };
  if (!valid(0)) return t;
  const Eigen::RowVector2d origin = positions.row(anchors[0]);
  if (valid(1)) {
    const Eigen::RowVector2d v = positions.row(anchors[1]) - origin;
    if (v.norm() >= 1e-12) {
      const double phi = std::atan2(v(1), v(0));
      const double c = std::cos(phi);
      const double s = std::sin(phi);
      t.rotation << c, -s, s, c;
    }
  }
  if (valid(2)) {
    const Eigen::RowVector2d w = (positions.row(anchors[2]) - origin) * t.rotation;
    const double scale = std::max(1.0, (positions.rowwise() - origin).rowwise().norm().maxCoeff());
    if (w(1) < 0.0 && std::abs(w(1)) > 1e-12 * scale) {
      t.rotation.col(1) *= -1.0;
    }
  }
  t.translation = -origin * t.rotation;
  return t;
}

Eigen::MatrixXd apply_transform(const Eigen::MatrixXd& positions, const RigidTransform& t) {
  Eigen::MatrixXd out = positions * t.rotation;
  out.rowwise() += t.translation;
  return out;
}

Eigen::MatrixXd canonicalize_latent(const Eigen::MatrixXd& positions, std::span<const int> anchors) {
  return apply_transform(positions, canonical_transform(positions, anchors));
}

LatentMap transform_latent_map(const LatentMap& map, const RigidTransform& t) {
  LatentMap out = map;
  if (map.level_counts.empty()) return out;
  out.a = map.a * t.rotation;
  out.a.rowwise() += t.translation / static_cast<double>(map.level_counts.size());
  return out;
}

std::shared_ptr<const CovarianceCache> build_cache(const FusionDataset& ds, const LmgpHyperParams& params) {
  auto cache = std::make_shared<CovarianceCache>();
  if (!factorize(build_correlation_matrix(ds, params.correlation), cache->chol)) {
    fail_numerical("correlation matrix is not positive definite");
  }
  const Eigen::MatrixXd f = constant_basis(ds.n());
  cache->rinv_f = cache->chol.solve(f);
  cache->ftrf.compute(f.transpose() * cache->rinv_f);
  if (cache->ftrf.info() != Eigen::Success) fail_numerical("basis matrix is rank deficient");
  cache->alpha = cache->chol.solve(ds.y - f * params.beta);
  return cache;
}

FitResult finalize_fit(const FusionDataset& ds, const CorrelationParams& params, bool canonicalize) {
  FitResult fit;
  fit.params.correlation = params;
  if (canonicalize) {
    const std::vector<int> anchors{0, 1, 2};
    const RigidTransform t = canonical_transform(source_positions(ds, params.map), anchors);
    fit.params.correlation.map = transform_latent_map(params.map, t);
  }
  fit.latent_positions = source_positions(ds, fit.params.correlation.map);

  const auto prof =
      profiled_likelihood(build_correlation_matrix(ds, fit.params.correlation), constant_basis(ds.n()), ds.y);
  if (!std::isfinite(prof.objective)) fail_numerical("fitted parameters give a singular correlation matrix");
  fit.params.beta = prof.beta;
  fit.params.sigma2 = prof.sigma2;
  fit.objective = prof.objective;
  fit.cache = build_cache(ds, fit.params);
  return fit;
}

FitResult fit_lmgp(const FusionDataset& ds, const TrainConfig& config) {
  validate(ds);
  validate(config);
  const ParamLayout layout(ds);
  const Eigen::VectorXd lo = layout.lower();
  const Eigen::VectorXd hi = layout.upper();
  Rng rng(derive_seed(config.seed, 0x4c4d4750));
  const Eigen::MatrixXd candidates =
      latin_hypercube(config.n_starts * config.screen_factor, layout.initial_lower(), layout.initial_upper(), rng);
  Eigen::MatrixXd starts = candidates;
  if (config.screen_factor > 1) {
    std::vector<double> f(static_cast<std::size_t>(candidates.rows()));
    parallel_for(static_cast<int>(candidates.rows()), config.threads, [&](int i) {
      f[static_cast<std::size_t>(i)] = objective_with_gradient(ds, layout, candidates.row(i).transpose(), nullptr);
    });
    std::vector<int> order(f.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const double fa = std::isfinite(f[static_cast<std::size_t>(a)]) ? f[static_cast<std::size_t>(a)] : kInf;
      const double fb = std::isfinite(f[static_cast<std::size_t>(b)]) ? f[static_cast<std::size_t>(b)] : kInf;
      return fa < fb;
    });
    starts.resize(config.n_starts, candidates.cols());
    for (int s = 0; s < config.n_starts; ++s) starts.row(s) = candidates.row(order[static_cast<std::size_t>(s)]);
  }

  BoxLbfgsOptions opts;
  opts.max_iterations = config.max_iterations;
  opts.f_rel_tol = config.tolerance;

  GradientObjective objective;
  if (config.gradient == GradientMode::kAnalytic) {
    objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd* g) { return objective_with_gradient(ds, layout, v, g); };
  } else {
    objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd* g) {
      auto f = [&](const Eigen::VectorXd& u) { return objective_with_gradient(ds, layout, u, nullptr); };
      const double value = f(v);
      if (g != nullptr && std::isfinite(value)) *g = central_difference_gradient(f, v, lo, hi);
      return value;
    };
  }

  std::vector<BoxLbfgsResult> results(static_cast<std::size_t>(config.n_starts));
  parallel_for(config.n_starts, config.threads, [&](int s) {
    results[static_cast<std::size_t>(s)] = minimize_box_lbfgs(objective, starts.row(s).transpose(), lo, hi, opts);
  });

  FitResult best_meta;
  int best = -1;
  double best_f = kInf;
  for (int s = 0; s < config.n_starts; ++s) {
    const auto& r = results[static_cast<std::size_t>(s)];
    best_meta.restarts.push_back({r.f, r.iterations, r.converged});
    if (r.converged && std::isfinite(r.f)) ++best_meta.n_starts_converged;
    if (std::isfinite(r.f) && (best < 0 || r.f < best_f - 1e-12)) {
      best = s;
      best_f = r.f;
    }
  }
  if (best < 0) fail_numerical("all optimization restarts were infeasible");

  FitResult fit = finalize_fit(ds, layout.unpack(results[static_cast<std::size_t>(best)].x));
  fit.best_start = best;
  fit.restarts = std::move(best_meta.restarts);
  fit.n_starts_converged = best_meta.n_starts_converged;
  return fit;
}

}  // namespace lmgp
