#pragma once

// Gaussian, latent-map and calibration correlation functions.
//
// A categorical combination t is one-hot encoded per variable and the blocks
// are concatenated into zeta(t) (length sum_i m_i). The latent map A (sum_i m_i
// by 2) sends it to z(t) = zeta(t) A. Correlations multiply three factors:
//
//   exp(-|z - z'|^2) * exp(-sum_k 10^omega_k (x_k - x'_k)^2)
//                    * exp(-sum_k 10^omega_theta_k (theta_k - theta'_k)^2)
//
// where a row without calibration values uses theta_hat in the last factor and
// a pair of such rows skips it entirely.

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "lmgp/data.hpp"

namespace lmgp {

inline constexpr double kOmegaLower = -10.0;
inline constexpr double kOmegaUpper = 6.0;
inline constexpr double kLatentBound = 3.0;
inline constexpr double kNuggetLower = 1e-8;
inline constexpr double kNuggetUpper = 1.0;
inline constexpr double kThetaHatLower = -2.0;
inline constexpr double kThetaHatUpper = 3.0;

struct LatentMap {
  std::vector<int> level_counts;
  Eigen::MatrixXd a;  // (sum of level_counts) x 2
};

[[nodiscard]] LatentMap zero_latent_map(const std::vector<int>& level_counts);

struct CorrelationParams {
  Eigen::VectorXd omega;  // d_x roughness exponents
  LatentMap map;
  double nugget = kNuggetLower;
  Eigen::VectorXd theta_hat;    // d_theta, scaled units; empty without calibration
  Eigen::VectorXd omega_theta;  // d_theta; empty without calibration
};

[[nodiscard]] Eigen::VectorXd encode_prior(std::span<const int> t, std::span<const int> level_counts);
[[nodiscard]] Eigen::Vector2d map_latent(std::span<const int> t, const LatentMap& map);

[[nodiscard]] double gaussian_correlation(const Eigen::Ref<const Eigen::VectorXd>& x,
                                          const Eigen::Ref<const Eigen::VectorXd>& x2,
                                          const Eigen::Ref<const Eigen::VectorXd>& omega);

[[nodiscard]] double mixed_correlation(const Eigen::Ref<const Eigen::VectorXd>& x, std::span<const int> t,
                                       const Eigen::Ref<const Eigen::VectorXd>& x2, std::span<const int> t2,
                                       const Eigen::Ref<const Eigen::VectorXd>& omega, const LatentMap& map);

// One side of a calibration correlation. `theta` is ignored when
// `theta_missing` is set.
struct CalibrationRow {
  Eigen::VectorXd x;
  std::vector<int> t;
  Eigen::VectorXd theta;
  bool theta_missing = false;
};

[[nodiscard]] double calibration_correlation(const CalibrationRow& a, const CalibrationRow& b,
                                             const Eigen::Ref<const Eigen::VectorXd>& omega,
                                             const Eigen::Ref<const Eigen::VectorXd>& omega_theta,
                                             const LatentMap& map, const Eigen::VectorXd& theta_hat);

[[nodiscard]] CalibrationRow dataset_row(const FusionDataset& dataset, Eigen::Index row);

// Latent position of every registered source (registry order), k x 2.
[[nodiscard]] Eigen::MatrixXd source_positions(const FusionDataset& dataset, const LatentMap& map);

// Throws Error(kValidation) when params do not fit the dataset.
void check_params(const FusionDataset& dataset, const CorrelationParams& params);

// R + nugget * I over all training rows.
[[nodiscard]] Eigen::MatrixXd build_correlation_matrix(const FusionDataset& dataset, const CorrelationParams& params);

// Correlations between a query row (scaled units) and every training row; no nugget.
[[nodiscard]] Eigen::VectorXd cross_correlation(const FusionDataset& dataset, const CorrelationParams& params,
                                                const Eigen::VectorXd& x, const Eigen::Vector2d& z,
                                                const Eigen::VectorXd& theta, bool theta_missing);

// Correlation between two query rows; no nugget.
[[nodiscard]] double query_correlation(const CorrelationParams& params, const Eigen::VectorXd& x1,
                                       const Eigen::Vector2d& z1, const Eigen::VectorXd& theta1, bool missing1,
                                       const Eigen::VectorXd& x2, const Eigen::Vector2d& z2,
                                       const Eigen::VectorXd& theta2, bool missing2);

}  // namespace lmgp
