#pragma once

// Analytic benchmark problems, quasi-random sampling, metrics and the
// repeated-fit experiment harness.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lmgp/data.hpp"
#include "lmgp/koh.hpp"
#include "lmgp/predict.hpp"
#include "lmgp/train.hpp"

namespace lmgp {

// ---- Sobol sequences ----------------------------------------------------

inline constexpr int kSobolMaxDim = 64;
inline constexpr int kSobolBits = 30;

// Base-2 Sobol points with Joe-Kuo direction numbers. The unscrambled
// sequence starts at the origin ({0, 0.5, 0.75, 0.25, ...} in one dimension).
// With scrambling on, each (master_seed, rep_index, stream) triple gets its own
// linear matrix scramble plus digital shift.
[[nodiscard]] Eigen::MatrixXd sobol_points(Eigen::Index n, int d, std::uint64_t rep_index = 0,
                                           std::uint64_t master_seed = 0, bool scramble = true,
                                           std::uint64_t stream = 0);

// Maps unit-cube points onto the box [lower, upper].
[[nodiscard]] Eigen::MatrixXd to_box(const Eigen::MatrixXd& unit, const Eigen::VectorXd& lower,
                                     const Eigen::VectorXd& upper);

// ---- Problems -----------------------------------------------------------

enum class ProblemId {
  kRational1D,
  kPoly1D,
  kPolyCalib,
  kSinCalib,
  kWingWeight,
  kBorehole,
  kRationalCalib,
  kBoreholeCalib,
};

struct BenchmarkProblem {
  ProblemId id;
  std::string name;
  Bounds x_bounds;
  std::optional<Bounds> theta_bounds;  // calibration problems only
  Eigen::VectorXd theta_true;          // natural units; empty when not a calibration problem
  std::vector<std::string> sources;    // index 0 is the high-fidelity source

  [[nodiscard]] int d_x() const { return static_cast<int>(x_bounds.lower.size()); }
  [[nodiscard]] int d_theta() const { return theta_bounds ? static_cast<int>(theta_bounds->lower.size()) : 0; }
  [[nodiscard]] bool calibration() const { return theta_bounds.has_value(); }
  [[nodiscard]] bool parameterized(int source) const { return calibration() && source > 0; }
  [[nodiscard]] int source_index(const std::string& label) const;  // -1 if absent
};

[[nodiscard]] const std::vector<BenchmarkProblem>& all_problems();
[[nodiscard]] const BenchmarkProblem& get_problem(ProblemId id);
// Case-insensitive lookup by name; throws Error(kValidation) if unknown.
[[nodiscard]] const BenchmarkProblem& find_problem(const std::string& name);

// Exact source output. theta is required for low-fidelity sources of
// calibration problems and ignored otherwise.
[[nodiscard]] double eval_source(const BenchmarkProblem& problem, int source, const Eigen::VectorXd& x,
                                 const std::optional<Eigen::VectorXd>& theta = std::nullopt);

[[nodiscard]] Eigen::VectorXd eval_source_rows(const BenchmarkProblem& problem, int source, const Eigen::MatrixXd& x,
                                               const std::optional<Eigen::MatrixXd>& theta = std::nullopt);

// ---- Metrics ------------------------------------------------------------

[[nodiscard]] Eigen::VectorXd add_noise(const Eigen::VectorXd& y, double sigma2, std::uint64_t seed);

// sqrt(|y_c - y_r|^2 / (n var(y_r))) with the population variance.
[[nodiscard]] double rrmse(const Eigen::VectorXd& candidate, const Eigen::VectorXd& reference);

[[nodiscard]] double mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truths);

struct RrmseEntry {
  std::string table;
  std::string problem;
  std::string source;
  double value = 0.0;
  double reference = 0.0;  // reference value
};

// Low-fidelity vs high-fidelity RRMSE at n unscrambled Sobol points (calibration
// parameters at their true values), for every reference table entry.
[[nodiscard]] std::vector<RrmseEntry> table_rrmse(Eigen::Index n = 10000);

// MSE between the high- and low-fidelity sine sources at n equally spaced
// points on [0, 1].
[[nodiscard]] double sin_calib_mse(double theta, Eigen::Index n = 10000);

// ---- Latent geometry ----------------------------------------------------

struct LatentReport {
  std::vector<std::string> labels;
  Eigen::MatrixXd positions;  // canonical frame
  Eigen::MatrixXd distances;
  Eigen::MatrixXd factors;  // exp(-d^2)
};

[[nodiscard]] LatentReport latent_report(const FusionDataset& dataset, const FitResult& fit);
[[nodiscard]] LatentReport latent_report(const LmgpModel& model);
[[nodiscard]] LatentReport latent_report(const std::vector<std::string>& labels, const Eigen::MatrixXd& positions);

// ---- Repetition harness -------------------------------------------------

enum class VariantKind { kLmgp, kGp, kKoh };

struct Variant {
  VariantKind kind = VariantKind::kLmgp;
  EncodingStrategy strategy = EncodingStrategy::kSingle;
  std::vector<int> low_sources;  // problem source indices other than 0
  std::string name;
};

// Parses names such as "LMGP_s_All", "LMGP_m_l2", "GP", "KOH_l2".
[[nodiscard]] Variant parse_variant(const std::string& name, const BenchmarkProblem& problem);

struct RepetitionConfig {
  int n_reps = 30;
  std::vector<int> sizes;  // per problem source, high-fidelity first
  double noise_variance = 0.0;
  std::vector<Variant> variants;
  Eigen::Index test_size = 10000;
  std::uint64_t master_seed = 0;
  TrainConfig train;
  KohConfig koh;
  int threads = 1;  // repetitions in flight
  bool record_low_mse = false;
};

void validate(const RepetitionConfig& config, const BenchmarkProblem& problem);

struct MetricRow {
  std::string problem;
  std::string variant;
  int rep = 0;
  std::string metric;
  std::string target;
  double value = 0.0;
};

struct LatentRow {
  int rep = 0;
  std::string variant;
  std::string source;
  double z1 = 0.0;
  double z2 = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::vector<LatentRow> latent;

  // Values of one (variant, metric, target) across repetitions, in rep order.
  [[nodiscard]] std::vector<double> values(const std::string& variant, const std::string& metric,
                                           const std::string& target) const;
};

struct SummaryStat {
  std::string variant;
  std::string metric;
  std::string target;
  std::size_t count = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

// Linear-interpolation quantile of unsorted values, p in [0, 1].
[[nodiscard]] double quantile(std::vector<double> values, double p);

[[nodiscard]] std::vector<SummaryStat> summarize(const MetricReport& report);

// One repetition's training and test data.
struct RepetitionData {
  std::vector<SourceDataset> sources;  // problem order, high-fidelity first
  Eigen::MatrixXd test_x;
  Eigen::VectorXd test_y;  // high-fidelity outputs with noise
};

[[nodiscard]] RepetitionData draw_repetition(const BenchmarkProblem& problem, const RepetitionConfig& config, int rep);

[[nodiscard]] MetricReport run_repetitions(const BenchmarkProblem& problem, const RepetitionConfig& config);

// Sample sizes, noise and variants used by the CLI when no manifest overrides them.
[[nodiscard]] RepetitionConfig default_config(const BenchmarkProblem& problem);

}  // namespace lmgp
