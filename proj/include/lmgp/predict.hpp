#pragma once

// Posterior prediction from a fitted model.
//
// With r the correlations between a query and the training rows (no nugget),
// u = 1 - F^T R^-1 r and alpha = R^-1 (y - F beta):
//
//   mean       = beta + r^T alpha
//   cov(a, b)  = sigma2 * (c(a, b) - r_a^T R^-1 r_b + u_a^T (F^T R^-1 F)^-1 u_b)
//
// All solves go through the cached Cholesky factors. Results are reported in
// natural output units.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "lmgp/data.hpp"
#include "lmgp/train.hpp"

namespace lmgp {

struct LmgpModel {
  FusionDataset dataset;
  FitResult fit;
};

// Fits and packages a model in one call.
[[nodiscard]] LmgpModel train_model(FusionDataset dataset, const TrainConfig& config = {});

// Rebuilds the cached factorization for fixed correlation parameters, e.g.
// after loading a model from disk.
[[nodiscard]] LmgpModel restore_model(FusionDataset dataset, const CorrelationParams& params,
                                      bool canonicalize = true);

// A query point in natural units. `theta` is required for low-fidelity
// sources of calibration models and may be given for the high-fidelity source.
struct Query {
  Eigen::VectorXd x;
  std::string source;
  std::optional<Eigen::VectorXd> theta;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

[[nodiscard]] double predict_mean(const LmgpModel& model, const Query& query);

// Posterior covariance of the latent function; `with_noise` adds delta*sigma2
// when both arguments are the same point.
[[nodiscard]] double predict_cov(const LmgpModel& model, const Query& a, const Query& b, bool with_noise = false);

[[nodiscard]] Prediction predict(const LmgpModel& model, const Query& query, bool with_noise = false);

[[nodiscard]] std::vector<Prediction> predict_batch(const LmgpModel& model, const std::vector<Query>& queries,
                                                    bool with_noise = false, int threads = 1);

// Means only, for large test grids.
[[nodiscard]] Eigen::VectorXd predict_means(const LmgpModel& model, const Eigen::MatrixXd& x,
                                            const std::string& source,
                                            const std::optional<Eigen::MatrixXd>& theta = std::nullopt,
                                            int threads = 1);

[[nodiscard]] Eigen::MatrixXd predict_cov_matrix(const LmgpModel& model, const std::vector<Query>& queries);

// delta * sigma2 in natural output units.
[[nodiscard]] double noise_variance(const LmgpModel& model);

// theta_hat in natural units (empty without calibration).
[[nodiscard]] Eigen::VectorXd calibration_estimate(const LmgpModel& model);

}  // namespace lmgp
