#pragma once

// Training-table assembly for multi-source fusion.
//
// Every source contributes rows of quantitative inputs x and an output y.
// Low-fidelity calibration sources also carry calibration columns theta; the
// high-fidelity rows have no theta and are flagged as missing. Source identity
// is encoded with one or more categorical variables whose level combinations
// are later mapped to latent points by the kernel.

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace lmgp {

inline constexpr int kLatentDim = 2;

struct SourceDataset {
  std::string label;
  Eigen::MatrixXd inputs;                       // n x d_x, natural units
  std::optional<Eigen::MatrixXd> calib_inputs;  // n x d_theta, low-fidelity calibration only
  Eigen::VectorXd outputs;                      // n

  [[nodiscard]] Eigen::Index rows() const { return outputs.size(); }
};

enum class EncodingStrategy {
  kSingle,     // one categorical variable, one level per source
  kPerSource,  // one variable per source, each with #sources levels
};

struct Bounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

// Affine maps between natural and model units. Inputs go to [0, 1] per column,
// outputs are standardized.
struct Scaler {
  Eigen::VectorXd x_min;
  Eigen::VectorXd x_max;
  Eigen::VectorXd theta_min;
  Eigen::VectorXd theta_max;
  double y_mean = 0.0;
  double y_std = 1.0;
};

enum class ColumnBlock { kInputs, kCalibration };

// Counts values that fell outside the fitted bounds. Extrapolation is allowed;
// callers decide whether to surface it.
struct ScaleWarnings {
  std::size_t out_of_range = 0;
};

[[nodiscard]] Eigen::MatrixXd scale(const Eigen::MatrixXd& values, const Scaler& scaler,
                                    ColumnBlock block = ColumnBlock::kInputs,
                                    ScaleWarnings* warnings = nullptr);
[[nodiscard]] Eigen::MatrixXd unscale(const Eigen::MatrixXd& values, const Scaler& scaler,
                                      ColumnBlock block = ColumnBlock::kInputs);
[[nodiscard]] Eigen::VectorXd scale_output(const Eigen::VectorXd& y, const Scaler& scaler);
[[nodiscard]] Eigen::VectorXd unscale_output(const Eigen::VectorXd& y_scaled, const Scaler& scaler);

struct RegisteredSource {
  std::string label;
  std::vector<int> levels;  // one level index per categorical variable
};

struct FusionDataset {
  Eigen::MatrixXd x;      // n x d_x in [0, 1]
  Eigen::MatrixXi t;      // n x d_t level indices
  Eigen::MatrixXd theta;  // n x d_theta; rows of the high-fidelity source hold 0 and are flagged missing
  Eigen::VectorXd y;      // standardized
  std::vector<int> row_source;  // registry index of each row
  Scaler scaler;
  std::vector<RegisteredSource> registry;  // high-fidelity source first
  std::vector<int> level_counts;           // m_i per categorical variable
  EncodingStrategy strategy = EncodingStrategy::kSingle;
  int latent_dim = kLatentDim;
  bool calibration = false;

  [[nodiscard]] Eigen::Index n() const { return y.size(); }
  [[nodiscard]] Eigen::Index d_x() const { return x.cols(); }
  [[nodiscard]] Eigen::Index d_t() const { return static_cast<Eigen::Index>(level_counts.size()); }
  [[nodiscard]] Eigen::Index d_theta() const { return theta.cols(); }
  [[nodiscard]] bool theta_missing(Eigen::Index row) const {
    return calibration && row_source[static_cast<std::size_t>(row)] == 0;
  }
  [[nodiscard]] int source_index(const std::string& label) const;  // -1 if absent
};

struct AssembleOptions {
  std::optional<Bounds> x_bounds;      // default: min/max over all training inputs
  std::optional<Bounds> theta_bounds;  // default: min/max over provided calibration samples
};

// Concatenates sources into one table (high-fidelity rows first, remaining
// sources in the given order), encodes source identity and fits the scaler.
[[nodiscard]] FusionDataset assemble_fusion(const std::vector<SourceDataset>& sources,
                                            const std::string& high_fidelity_label,
                                            EncodingStrategy strategy,
                                            const AssembleOptions& options = {});

// Single-source table with no categorical variables: a plain GP.
[[nodiscard]] FusionDataset assemble_single_source(const SourceDataset& source,
                                                   const AssembleOptions& options = {});

// Number of latent positions the strategy induces for k sources.
[[nodiscard]] long long latent_position_count(EncodingStrategy strategy, int n_sources);

// Level combination assigned to the source at registry position `index`.
[[nodiscard]] std::vector<int> source_levels(EncodingStrategy strategy, int n_sources, int index);

[[nodiscard]] const char* to_string(EncodingStrategy strategy);
[[nodiscard]] EncodingStrategy parse_strategy(const std::string& text);

// Checks the structural invariants; throws Error(kValidation) on violation.
void validate(const FusionDataset& dataset);

}  // namespace lmgp
