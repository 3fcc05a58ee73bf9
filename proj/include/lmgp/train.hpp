#pragma once

// Profiled maximum-likelihood training.
//
// beta and sigma^2 are eliminated in closed form (generalized least squares
// and the mean squared Mahalanobis residual), which leaves
//
//   L = n log(sigma2_hat) + log|R_delta|
//
// as a function of the roughness exponents, the latent map, the nugget and,
// for calibration problems, theta_hat and its roughness. L is minimized by
// box-constrained L-BFGS from a space-filling set of starting points.

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lmgp/data.hpp"
#include "lmgp/kernel.hpp"

namespace lmgp {

struct LmgpHyperParams {
  CorrelationParams correlation;
  Eigen::VectorXd beta;  // profiled; constant basis gives length 1
  double sigma2 = 0.0;   // profiled, scaled-output units
};

enum class GradientMode { kAnalytic, kCentralDifference };

struct TrainConfig {
  int n_starts = 24;
  // Draws n_starts * screen_factor candidate starts and optimizes from the
  // n_starts with the lowest objective.
  int screen_factor = 1;
  int max_iterations = 200;
  GradientMode gradient = GradientMode::kAnalytic;
  double tolerance = 1e-8;  // relative objective change
  std::uint64_t seed = 0;
  int threads = 1;  // restarts run concurrently when > 1
};

void validate(const TrainConfig& config);

// Flat parameter vector:
//   [ omega (d_x) | A row-major (sum m_i x 2) | log10(nugget) | theta_hat (d_theta) | omega_theta (d_theta) ]
class ParamLayout {
 public:
  explicit ParamLayout(const FusionDataset& dataset);

  [[nodiscard]] Eigen::Index size() const { return size_; }
  [[nodiscard]] Eigen::Index omega_offset() const { return 0; }
  [[nodiscard]] Eigen::Index map_offset() const { return d_x_; }
  [[nodiscard]] Eigen::Index map_size() const { return map_rows_ * kLatentDim; }
  [[nodiscard]] Eigen::Index nugget_offset() const { return d_x_ + map_size(); }
  [[nodiscard]] Eigen::Index theta_offset() const { return nugget_offset() + 1; }
  [[nodiscard]] Eigen::Index omega_theta_offset() const { return theta_offset() + d_theta_; }

  [[nodiscard]] Eigen::VectorXd lower() const;
  [[nodiscard]] Eigen::VectorXd upper() const;
  // Sub-box used to draw restart points.
  [[nodiscard]] Eigen::VectorXd initial_lower() const;
  [[nodiscard]] Eigen::VectorXd initial_upper() const;

  [[nodiscard]] Eigen::VectorXd pack(const CorrelationParams& params) const;
  [[nodiscard]] CorrelationParams unpack(const Eigen::VectorXd& packed) const;
  [[nodiscard]] std::vector<std::string> names() const;

 private:
  Eigen::Index d_x_;
  Eigen::Index map_rows_;
  Eigen::Index d_theta_;
  Eigen::Index size_;
  std::vector<int> level_counts_;
};

[[nodiscard]] Eigen::MatrixXd constant_basis(Eigen::Index n);

// Generalized least squares coefficients through Cholesky solves.
[[nodiscard]] Eigen::VectorXd profile_beta(const Eigen::MatrixXd& r_delta, const Eigen::MatrixXd& f,
                                           const Eigen::VectorXd& y);
[[nodiscard]] double profile_sigma2(const Eigen::MatrixXd& r_delta, const Eigen::MatrixXd& f,
                                    const Eigen::VectorXd& y, const Eigen::VectorXd& beta);

struct ProfiledLikelihood {
  double objective = 0.0;  // +inf when R_delta is not numerically positive definite
  Eigen::VectorXd beta;
  double sigma2 = 0.0;
};

[[nodiscard]] ProfiledLikelihood profiled_likelihood(const Eigen::MatrixXd& r_delta, const Eigen::MatrixXd& f,
                                                     const Eigen::VectorXd& y);

[[nodiscard]] double objective_L(const FusionDataset& dataset, const CorrelationParams& params);

// Objective and, when grad is non-null, its analytic gradient in the packed
// parameterization.
[[nodiscard]] double objective_with_gradient(const FusionDataset& dataset, const ParamLayout& layout,
                                             const Eigen::VectorXd& packed, Eigen::VectorXd* grad);

[[nodiscard]] Eigen::VectorXd gradient_L(const FusionDataset& dataset, const ParamLayout& layout,
                                         const Eigen::VectorXd& packed, GradientMode mode = GradientMode::kAnalytic);

// Rigid motion z -> z Q + c acting on row vectors.
struct RigidTransform {
  Eigen::Matrix2d rotation = Eigen::Matrix2d::Identity();
  Eigen::RowVector2d translation = Eigen::RowVector2d::Zero();
};

// Transform that puts anchor 0 at the origin, anchor 1 on the nonnegative first
// axis and anchor 2 in the nonnegative second half-plane. Anchors past the
// number of positions are ignored.
[[nodiscard]] RigidTransform canonical_transform(const Eigen::MatrixXd& positions, std::span<const int> anchors);
[[nodiscard]] Eigen::MatrixXd apply_transform(const Eigen::MatrixXd& positions, const RigidTransform& transform);
[[nodiscard]] Eigen::MatrixXd canonicalize_latent(const Eigen::MatrixXd& positions, std::span<const int> anchors);

// A' such that zeta A' = (zeta A) Q + c for every level combination.
[[nodiscard]] LatentMap transform_latent_map(const LatentMap& map, const RigidTransform& transform);

struct CovarianceCache {
  Eigen::LLT<Eigen::MatrixXd> chol;  // of R_delta
  Eigen::VectorXd alpha;             // R_delta^-1 (y - F beta)
  Eigen::MatrixXd rinv_f;            // R_delta^-1 F
  Eigen::LLT<Eigen::MatrixXd> ftrf;  // of F^T R_delta^-1 F
};

[[nodiscard]] std::shared_ptr<const CovarianceCache> build_cache(const FusionDataset& dataset,
                                                                 const LmgpHyperParams& params);

struct RestartOutcome {
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct FitResult {
  LmgpHyperParams params;
  double objective = 0.0;
  int n_starts_converged = 0;
  int best_start = 0;
  std::vector<RestartOutcome> restarts;
  Eigen::MatrixXd latent_positions;  // registered sources, canonical frame
  std::shared_ptr<const CovarianceCache> cache;
};

// Profiles beta/sigma^2 and caches the factorization for fixed correlation
// parameters. Used after optimization and when loading a saved model. With
// `canonicalize` off the latent map is kept exactly as given.
[[nodiscard]] FitResult finalize_fit(const FusionDataset& dataset, const CorrelationParams& params,
                                     bool canonicalize = true);

[[nodiscard]] FitResult fit_lmgp(const FusionDataset& dataset, const TrainConfig& config = {});

}  // namespace lmgp
