#pragma once

// Modular Kennedy-O'Hagan calibration for one low-fidelity and one
// high-fidelity source:
//
//   y_h(x) = y_l(x, theta*) + delta(x) + eps,   eps ~ N(0, lambda)
//
// Module 1 fits a Gaussian process to the low-fidelity data over (x, theta)
// and freezes its hyperparameters. Module 2 estimates theta*, the discrepancy
// GP over x and lambda by minimizing the negative log of
//
//   |V_d|^-1/2 |W|^-1/2 exp(-1/2 (d - H beta)^T V_d^-1 (d - H beta))
//
// with beta = W H^T V_d^-1 d and W = (H^T V_d^-1 H)^-1 profiled out.
//
// Everything below works in model units: x and theta scaled to [0, 1] and
// outputs standardized with the low-fidelity mean and standard deviation.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lmgp/data.hpp"
#include "lmgp/predict.hpp"
#include "lmgp/train.hpp"

namespace lmgp {

// Gaussian covariance sigma2 * exp(-sum 10^omega_k d_k^2).
struct KohGpParams {
  double sigma2 = 1.0;
  Eigen::VectorXd omega;
};

inline constexpr double kKohLogSigma2Lower = -6.0;
inline constexpr double kKohLogSigma2Upper = 2.0;
inline constexpr double kKohLogLambdaLower = -10.0;
inline constexpr double kKohLogLambdaUpper = 1.0;

struct KohData {
  Eigen::MatrixXd x_low;      // p x d_x
  Eigen::MatrixXd theta_low;  // p x d_theta
  Eigen::MatrixXd x_high;     // q x d_x
  Eigen::VectorXd d;          // [y_l; y_h], standardized
  Scaler scaler;
  std::string low_label;
  std::string high_label;

  [[nodiscard]] Eigen::Index p() const { return x_low.rows(); }
  [[nodiscard]] Eigen::Index q() const { return x_high.rows(); }
  [[nodiscard]] Eigen::Index d_x() const { return x_low.cols(); }
  [[nodiscard]] Eigen::Index d_theta() const { return theta_low.cols(); }
};

// Scales both sources into model units. The high-fidelity source may be empty.
[[nodiscard]] KohData koh_prepare(const SourceDataset& low, const SourceDataset& high,
                                  const AssembleOptions& options = {});

struct KohJoint {
  Eigen::MatrixXd h;  // (p+q) x 2
  Eigen::MatrixXd v;  // (p+q) x (p+q)
};

// Module-1 GP over (x, theta): omega has d_x + d_theta entries, nugget1 is
// applied on the low-fidelity block only.
[[nodiscard]] KohJoint koh_assemble_joint(const KohData& data, const Eigen::VectorXd& theta_star,
                                          const KohGpParams& psi1, double nugget1, const KohGpParams& psi2,
                                          double lambda);

struct KohBeta {
  Eigen::Vector2d beta;
  Eigen::Matrix2d w;
};

[[nodiscard]] KohBeta koh_profile_beta(const Eigen::MatrixXd& v, const Eigen::MatrixXd& h, const Eigen::VectorXd& d);

// Module-2 unknowns. theta_star is in scaled units.
struct KohPhi {
  Eigen::VectorXd theta_star;
  KohGpParams psi2;
  double lambda = 1e-6;
};

struct KohModule1 {
  KohGpParams psi1;
  double nugget1 = kNuggetLower;
};

// Negative log posterior up to a constant; +inf outside the prior support or
// when V_d cannot be factorized.
[[nodiscard]] double koh_objective(const KohData& data, const KohModule1& module1, const KohPhi& phi);

struct KohConfig {
  TrainConfig module1;  // restarts for the low-fidelity GP
  int n_starts = 24;
  int max_iterations = 200;
  double tolerance = 1e-8;
  std::uint64_t seed = 0;
  int threads = 1;
  AssembleOptions bounds;
};

struct KohModel {
  KohData data;
  KohModule1 module1;
  KohPhi phi;
  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  double objective = 0.0;
  int n_starts_converged = 0;

  // Cached factorization of V_d at the estimate.
  Eigen::LLT<Eigen::MatrixXd> chol;
  Eigen::VectorXd alpha;   // V^-1 (d - H beta)
  Eigen::MatrixXd vinv_h;  // V^-1 H
  Eigen::Matrix2d w = Eigen::Matrix2d::Zero();
};

// Refactorizes V_d and profiles beta for fixed parameters.
[[nodiscard]] KohModel koh_finalize(KohData data, const KohModule1& module1, const KohPhi& phi);

[[nodiscard]] KohModel koh_fit(const SourceDataset& low, const SourceDataset& high, const KohConfig& config = {});

// Prediction of y_l(x, theta*) + delta(x) at x in natural units. The variance
// excludes lambda unless `with_noise` is set.
[[nodiscard]] Prediction koh_predict_high(const KohModel& model, const Eigen::VectorXd& x, bool with_noise = false);

// Posterior means only, one row of x (natural units) per query.
[[nodiscard]] Eigen::VectorXd koh_predict_means(const KohModel& model, const Eigen::MatrixXd& x);

// theta* in natural units.
[[nodiscard]] Eigen::VectorXd koh_theta_estimate(const KohModel& model);

}  // namespace lmgp
