#pragma once

// File formats: source and query CSVs, model JSON, job manifests and
// benchmark reports. Doubles are written in shortest round-trip form, so a
// saved model reloads bit for bit.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lmgp/bench.hpp"
#include "lmgp/data.hpp"
#include "lmgp/koh.hpp"
#include "lmgp/predict.hpp"
#include "lmgp/train.hpp"

namespace lmgp {

// ---- CSV ----------------------------------------------------------------

// Header `x1,...,xd,[th1,...,thk,]y`. Calibration cells may hold the token
// NaN; a source whose calibration cells are all NaN is read without them.
[[nodiscard]] SourceDataset read_source_csv(const std::filesystem::path& path, const std::string& label);
void write_source_csv(const std::filesystem::path& path, const SourceDataset& source);

// Header `x1,...,xd,[th1,...,thk,]source`. NaN calibration cells mean "not given".
[[nodiscard]] std::vector<Query> read_query_csv(const std::filesystem::path& path);

// Copies the query columns and appends mean and variance.
[[nodiscard]] std::string predictions_csv(const std::vector<Query>& queries, const std::vector<Prediction>& predictions);
void write_predictions_csv(const std::filesystem::path& path, const std::vector<Query>& queries,
                           const std::vector<Prediction>& predictions);

// Shortest decimal text that parses back to the same double; NaN for NaN.
[[nodiscard]] std::string format_double(double value);
// Accepts decimal text and the NaN token; throws Error(kValidation) otherwise.
[[nodiscard]] double parse_double(const std::string& text);

// Writes a text file, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);

// ---- Models -------------------------------------------------------------

[[nodiscard]] std::string model_to_json(const LmgpModel& model);
[[nodiscard]] LmgpModel model_from_json(const std::string& text);
void save_model(const std::filesystem::path& path, const LmgpModel& model);
[[nodiscard]] LmgpModel load_model(const std::filesystem::path& path);

[[nodiscard]] std::string koh_model_to_json(const KohModel& model);
[[nodiscard]] KohModel koh_model_from_json(const std::string& text);
void save_koh_model(const std::filesystem::path& path, const KohModel& model);
[[nodiscard]] KohModel load_koh_model(const std::filesystem::path& path);

// "lmgp-model", "koh-model", or throws.
[[nodiscard]] std::string model_format(const std::filesystem::path& path);

void write_latent_csv(const std::filesystem::path& path, const LatentReport& report);

// ---- Manifests ----------------------------------------------------------

struct SourceSpec {
  std::string label;
  std::filesystem::path path;  // resolved against the manifest directory
};

struct BenchmarkSpec {
  std::string problem;
  std::optional<int> n_reps;
  std::optional<std::vector<int>> sizes;
  std::optional<double> noise_variance;
  std::optional<std::vector<std::string>> variants;
  std::optional<Eigen::Index> test_size;
  std::optional<std::uint64_t> master_seed;
  std::optional<bool> record_low_mse;
};

struct JobManifest {
  std::vector<SourceSpec> sources;
  std::string high_fidelity;
  EncodingStrategy strategy = EncodingStrategy::kSingle;
  AssembleOptions bounds;
  TrainConfig train;
  KohConfig koh;
  std::optional<BenchmarkSpec> benchmark;
  std::filesystem::path output_dir = ".";
};

// Unknown keys anywhere in the document raise Error(kValidation).
[[nodiscard]] JobManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir = ".");
[[nodiscard]] JobManifest load_manifest(const std::filesystem::path& path);

[[nodiscard]] RepetitionConfig repetition_config(const BenchmarkSpec& spec, const BenchmarkProblem& problem);

// ---- Reports ------------------------------------------------------------

void write_metric_csv(const std::filesystem::path& path, const MetricReport& report);
void write_latent_rows_csv(const std::filesystem::path& path, const MetricReport& report);
[[nodiscard]] std::string summary_json(const std::string& problem, const std::vector<SummaryStat>& stats);

}  // namespace lmgp
