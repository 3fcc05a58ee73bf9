#include "lmgp/kernel.hpp"

#include <cmath>
#include <numeric>

#include "lmgp/error.hpp"

namespace lmgp {
namespace {

double weighted_sq_distance(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
                            const Eigen::Ref<const Eigen::VectorXd>& omega) {
  if (a.size() != b.size() || a.size() != omega.size()) fail_validation("correlation argument length mismatch");
  double s = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double d = a(k) - b(k);
    s += std::pow(10.0, omega(k)) * d * d;
  }
  return s;
}

int total_levels(std::span<const int> level_counts) {
  return std::accumulate(level_counts.begin(), level_counts.end(), 0);
}

// Calibration exponent for one pair; zero when both sides lack theta.
double theta_exponent(const Eigen::VectorXd& t1, bool missing1, const Eigen::VectorXd& t2, bool missing2,
                      const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& pow_omega_theta) {
  if (pow_omega_theta.size() == 0 || (missing1 && missing2)) return 0.0;
  const Eigen::VectorXd& a = missing1 ? theta_hat : t1;
  const Eigen::VectorXd& b = missing2 ? theta_hat : t2;
  double s = 0.0;
  for (Eigen::Index k = 0; k < pow_omega_theta.size(); ++k) {
    const double d = a(k) - b(k);
    s += pow_omega_theta(k) * d * d;
  }
  return s;
}

Eigen::VectorXd pow10(const Eigen::VectorXd& v) {
  return v.unaryExpr([](double w) { return std::pow(10.0, w); });
}

}  // namespace

LatentMap zero_latent_map(const std::vector<int>& level_counts) {
  return {level_counts, Eigen::MatrixXd::Zero(total_levels(level_counts), kLatentDim)};
}

Eigen::VectorXd encode_prior(std::span<const int> t, std::span<const int> level_counts) {
  if (t.size() != level_counts.size()) fail_validation("categorical arity mismatch");
  Eigen::VectorXd zeta = Eigen::VectorXd::Zero(total_levels(level_counts));
  int offset = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < 0 || t[i] >= level_counts[i]) fail_validation("categorical level index out of range");
    zeta(offset + t[i]) = 1.0;
    offset += level_counts[i];
  }
  return zeta;
}

Eigen::Vector2d map_latent(std::span<const int> t, const LatentMap& map) {
  const Eigen::VectorXd zeta = encode_prior(t, map.level_counts);
  if (map.a.rows() != zeta.size() || map.a.cols() != kLatentDim) fail_validation("latent map shape mismatch");
  return (zeta.transpose() * map.a).transpose();
}

double gaussian_correlation(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& x2,
                            const Eigen::Ref<const Eigen::VectorXd>& omega) {
  return std::exp(-weighted_sq_distance(x, x2, omega));
}

double mixed_correlation(const Eigen::Ref<const Eigen::VectorXd>& x, std::span<const int> t,
                         const Eigen::Ref<const Eigen::VectorXd>& x2, std::span<const int> t2,
                         const Eigen::Ref<const Eigen::VectorXd>& omega, const LatentMap& map) {
  const Eigen::Vector2d dz = map_latent(t, map) - map_latent(t2, map);
  return std::exp(-dz.squaredNorm()) * gaussian_correlation(x, x2, omega);
}

double calibration_correlation(const CalibrationRow& a, const CalibrationRow& b,
                               const Eigen::Ref<const Eigen::VectorXd>& omega,
                               const Eigen::Ref<const Eigen::VectorXd>& omega_theta, const LatentMap& map,
                               const Eigen::VectorXd& theta_hat) {
  const double base = mixed_correlation(a.x, a.t, b.x, b.t, omega, map);
  if (a.theta_missing && b.theta_missing) return base;
  if ((a.theta_missing || b.theta_missing) && theta_hat.size() != omega_theta.size()) {
    fail_validation("theta_hat required for rows without calibration values");
  }
  const Eigen::VectorXd& ta = a.theta_missing ? theta_hat : a.theta;
  const Eigen::VectorXd& tb = b.theta_missing ? theta_hat : b.theta;
  return base * std::exp(-weighted_sq_distance(ta, tb, omega_theta));
}

CalibrationRow dataset_row(const FusionDataset& ds, Eigen::Index row) {
  CalibrationRow r;
  r.x = ds.x.row(row).transpose();
  r.t.resize(static_cast<std::size_t>(ds.d_t()));
  for (Eigen::Index v = 0; v < ds.d_t(); ++v) r.t[static_cast<std::size_t>(v)] = ds.t(row, v);
  r.theta = ds.theta.row(row).transpose();
  r.theta_missing = ds.theta_missing(row);
  return r;
}

Eigen::MatrixXd source_positions(const FusionDataset& ds, const LatentMap& map) {
  Eigen::MatrixXd z(static_cast<Eigen::Index>(ds.registry.size()), kLatentDim);
  for (std::size_t s = 0; s < ds.registry.size(); ++s) {
    z.row(static_cast<Eigen::Index>(s)) = map_latent(ds.registry[s].levels, map).transpose();
  }
  return z;
}

void check_params(const FusionDataset& ds, const CorrelationParams& p) {
  if (p.omega.size() != ds.d_x()) fail_validation("omega length does not match input dimension");
  if (p.map.level_counts != ds.level_counts) fail_validation("latent map level counts do not match dataset");
  if (p.map.a.rows() != total_levels(ds.level_counts) || p.map.a.cols() != kLatentDim) {
    fail_validation("latent map shape mismatch");
  }
  if (ds.calibration) {
    if (p.theta_hat.size() != ds.d_theta()) fail_validation("theta_hat missing or wrong length");
    if (p.omega_theta.size() != ds.d_theta()) fail_validation("omega_theta missing or wrong length");
  } else if (p.theta_hat.size() != 0 || p.omega_theta.size() != 0) {
    fail_validation("calibration parameters given for a dataset without calibration columns");
  }
  if (!(p.nugget >= 0.0)) fail_validation("nugget must be nonnegative");
}

Eigen::MatrixXd build_correlation_matrix(const FusionDataset& ds, const CorrelationParams& p) {
  check_params(ds, p);
  const Eigen::Index n = ds.n();
  const Eigen::Index dx = ds.d_x();
  const Eigen::Index dth = ds.d_theta();
  const Eigen::VectorXd w = pow10(p.omega);
  const Eigen::VectorXd wt = pow10(p.omega_theta);
  const Eigen::MatrixXd zs = source_positions(ds, p.map);

  // Row-major copies keep the pair loop cache friendly.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x = ds.x;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> th = ds.theta;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (ds.theta_missing(i)) th.row(i) = p.theta_hat.transpose();
  }

  Eigen::MatrixXd r(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    r(i, i) = 1.0 + p.nugget;
    const int si = ds.row_source[static_cast<std::size_t>(i)];
    const bool mi = ds.theta_missing(i);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const int sj = ds.row_source[static_cast<std::size_t>(j)];
      double e = (zs.row(si) - zs.row(sj)).squaredNorm();
      for (Eigen::Index k = 0; k < dx; ++k) {
        const double d = x(i, k) - x(j, k);
        e += w(k) * d * d;
      }
      if (dth > 0 && !(mi && ds.theta_missing(j))) {
        for (Eigen::Index k = 0; k < dth; ++k) {
          const double d = th(i, k) - th(j, k);
          e += wt(k) * d * d;
        }
      }
      const double v = std::exp(-e);
      r(i, j) = v;
      r(j, i) = v;
    }
  }
  return r;
}

Eigen::VectorXd cross_correlation(const FusionDataset& ds, const CorrelationParams& p, const Eigen::VectorXd& x,
                                  const Eigen::Vector2d& z, const Eigen::VectorXd& theta, bool theta_missing) {
  const Eigen::Index n = ds.n();
  const Eigen::VectorXd w = pow10(p.omega);
  const Eigen::VectorXd wt = pow10(p.omega_theta);
  const Eigen::MatrixXd zs = source_positions(ds, p.map);
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int si = ds.row_source[static_cast<std::size_t>(i)];
    double e = (zs.row(si).transpose() - z).squaredNorm();
    for (Eigen::Index k = 0; k < ds.d_x(); ++k) {
      const double d = ds.x(i, k) - x(k);
      e += w(k) * d * d;
    }
    if (ds.calibration) {
      const bool mi = ds.theta_missing(i);
      if (!(mi && theta_missing)) {
        for (Eigen::Index k = 0; k < ds.d_theta(); ++k) {
          const double a = mi ? p.theta_hat(k) : ds.theta(i, k);
          const double b = theta_missing ? p.theta_hat(k) : theta(k);
          e += wt(k) * (a - b) * (a - b);
        }
      }
    }
    out(i) = std::exp(-e);
  }
  return out;
}

double query_correlation(const CorrelationParams& p, const Eigen::VectorXd& x1, const Eigen::Vector2d& z1,
                         const Eigen::VectorXd& theta1, bool missing1, const Eigen::VectorXd& x2,
                         const Eigen::Vector2d& z2, const Eigen::VectorXd& theta2, bool missing2) {
  double e = (z1 - z2).squaredNorm() + weighted_sq_distance(x1, x2, p.omega);
  e += theta_exponent(theta1, missing1, theta2, missing2, p.theta_hat, pow10(p.omega_theta));
  return std::exp(-e);
}

}  // namespace lmgp
