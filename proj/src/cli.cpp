#include "lmgp/cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "lmgp/bench.hpp"
#include "lmgp/error.hpp"
#include "lmgp/io.hpp"
#include "lmgp/koh.hpp"
#include "lmgp/parallel.hpp"
#include "lmgp/predict.hpp"

namespace lmgp {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Overrides shared by the manifest-driven commands.
struct CommonFlags {
  std::string manifest;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string strategy;
  std::string sources;
  std::string high_fidelity;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool manifest_required) {
  auto* m = cmd->add_option("--manifest", f.manifest, "JSON job manifest");
  if (manifest_required) m->required();
  cmd->add_option("--out", f.out, "Output directory (overrides the manifest)");
  cmd->add_option("--seed", f.seed, "Random seed (overrides the manifest)");
  cmd->add_option("--strategy", f.strategy, "single or per-source");
  cmd->add_option("--sources", f.sources, "Comma-separated source labels to use");
  cmd->add_option("--high-fidelity", f.high_fidelity, "Label of the high-fidelity source");
}

std::vector<std::string> split_labels(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

JobManifest resolved_manifest(const CommonFlags& f, bool need_sources = true) {
  JobManifest m = load_manifest(f.manifest);
  if (!f.out.empty()) m.output_dir = f.out;
  if (f.seed) {
    m.train.seed = *f.seed;
    m.koh.seed = *f.seed;
    m.koh.module1.seed = *f.seed;
    if (m.benchmark) m.benchmark->master_seed = *f.seed;
  }
  if (!f.strategy.empty()) m.strategy = parse_strategy(f.strategy);
  if (!f.high_fidelity.empty()) m.high_fidelity = f.high_fidelity;
  if (!f.sources.empty()) {
    std::vector<SourceSpec> kept;
    for (const auto& label : split_labels(f.sources)) {
      auto it = std::find_if(m.sources.begin(), m.sources.end(), [&](const SourceSpec& s) { return s.label == label; });
      if (it == m.sources.end()) fail_validation("--sources names unknown source '" + label + "'");
      kept.push_back(*it);
    }
    m.sources = std::move(kept);
  }
  if (need_sources && m.sources.empty()) fail_validation("manifest lists no sources");
  if (m.high_fidelity.empty() && !m.sources.empty()) m.high_fidelity = m.sources.front().label;
  const int threads = env_thread_count();
  m.train.threads = threads;
  m.koh.threads = threads;
  m.koh.module1.threads = threads;
  return m;
}

std::vector<SourceDataset> read_sources(const JobManifest& m) {
  std::vector<SourceDataset> out;
  for (const auto& s : m.sources) out.push_back(read_source_csv(s.path, s.label));
  return out;
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json latent_json(const LatentReport& r) {
  json distances = json::object();
  json factors = json::object();
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    for (std::size_t j = i + 1; j < r.labels.size(); ++j) {
      const std::string key = r.labels[i] + "|" + r.labels[j];
      distances[key] = r.distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      factors[key] = r.factors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  json positions = json::object();
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    positions[r.labels[i]] = vec_json(r.positions.row(static_cast<Eigen::Index>(i)).transpose());
  }
  return {{"positions", positions}, {"distances", distances}, {"factors", factors}};
}

int cmd_fit(const CommonFlags& f, std::ostream& out) {
  const JobManifest m = resolved_manifest(f);
  const std::vector<SourceDataset> sources = read_sources(m);
  FusionDataset ds = sources.size() == 1 ? assemble_single_source(sources.front(), m.bounds)
                                         : assemble_fusion(sources, m.high_fidelity, m.strategy, m.bounds);
  const LmgpModel model = train_model(std::move(ds), m.train);
  const fs::path model_path = m.output_dir / "model.json";
  const fs::path latent_path = m.output_dir / "latent.csv";
  save_model(model_path, model);
  const LatentReport lr = latent_report(model);
  write_latent_csv(latent_path, lr);
  json summary = {{"model", model_path.string()},
                  {"latent", latent_path.string()},
                  {"objective", model.fit.objective},
                  {"noise_variance", noise_variance(model)},
                  {"restarts_converged", model.fit.n_starts_converged}};
  if (model.dataset.calibration) summary["theta_hat"] = vec_json(calibration_estimate(model));
  if (model.dataset.d_t() > 0) summary["latent"] = latent_json(lr);
  out << summary.dump(2) << "\n";
  return kExitOk;
}

int cmd_koh_fit(const CommonFlags& f, std::ostream& out) {
  const JobManifest m = resolved_manifest(f);
  const std::vector<SourceDataset> sources = read_sources(m);
  if (sources.size() != 2) fail_validation("koh-fit needs exactly one low-fidelity and one high-fidelity source");
  const int hi = sources[0].label == m.high_fidelity ? 0 : 1;
  if (sources[static_cast<std::size_t>(hi)].label != m.high_fidelity) {
    fail_validation("high-fidelity source '" + m.high_fidelity + "' is not among the sources");
  }
  const KohModel model = koh_fit(sources[static_cast<std::size_t>(1 - hi)], sources[static_cast<std::size_t>(hi)], m.koh);
  const fs::path model_path = m.output_dir / "koh_model.json";
  save_koh_model(model_path, model);
  const double ys = model.data.scaler.y_std;
  out << json{{"model", model_path.string()},
              {"objective", model.objective},
              {"theta_hat", vec_json(koh_theta_estimate(model))},
              {"noise_variance", model.phi.lambda * ys * ys},
              {"discrepancy_variance", model.phi.psi2.sigma2 * ys * ys}}
             .dump(2)
      << "\n";
  return kExitOk;
}

int cmd_predict(const std::string& model_path, const std::string& query_path, const std::string& out_path,
                bool with_noise, std::ostream& out) {
  const std::vector<Query> queries = read_query_csv(query_path);
  std::vector<Prediction> preds;
  if (model_format(model_path) == "koh-model") {
    const KohModel model = load_koh_model(model_path);
    for (const auto& q : queries) {
      if (q.source != model.data.high_label) {
        fail_validation("KOH models predict the high-fidelity source '" + model.data.high_label + "' only");
      }
      preds.push_back(koh_predict_high(model, q.x, with_noise));
    }
  } else {
    const LmgpModel model = load_model(model_path);
    preds = predict_batch(model, queries, with_noise, env_thread_count());
  }
  if (out_path.empty()) {
    out << predictions_csv(queries, preds);
  } else {
    write_predictions_csv(out_path, queries, preds);
  }
  return kExitOk;
}

void print_rrmse(std::ostream& out) {
  out << std::left << std::setw(8) << "table" << std::setw(15) << "problem" << std::setw(8) << "source"
      << std::setw(14) << "rrmse" << std::setw(14) << "reference" << "rel.diff\n";
  for (const auto& e : table_rrmse()) {
    out << std::left << std::setw(8) << e.table << std::setw(15) << e.problem << std::setw(8) << e.source
        << std::setw(14) << e.value << std::setw(14) << e.reference << std::abs(e.value - e.reference) / e.reference
        << "\n";
  }
}

int cmd_benchmark(const CommonFlags& f, const std::string& problem_flag, std::optional<int> reps, std::ostream& out) {
  std::optional<JobManifest> manifest;
  if (!f.manifest.empty()) manifest = resolved_manifest(f, false);
  std::string name = problem_flag;
  if (name.empty() && manifest && manifest->benchmark) name = manifest->benchmark->problem;
  if (name.empty()) fail_validation("benchmark needs --problem or a manifest with a benchmark section");

  if (name == "table-rrmse") {
    print_rrmse(out);
    return kExitOk;
  }
  const BenchmarkProblem& problem = find_problem(name);
  BenchmarkSpec spec;
  if (manifest && manifest->benchmark) spec = *manifest->benchmark;
  spec.problem = problem.name;
  if (reps) spec.n_reps = *reps;
  if (f.seed) spec.master_seed = *f.seed;
  RepetitionConfig config = repetition_config(spec, problem);
  if (manifest) {
    config.train = manifest->train;
    config.koh = manifest->koh;
  }
  config.threads = env_thread_count();
  config.train.threads = 1;
  config.koh.threads = 1;
  config.koh.module1.threads = 1;

  const MetricReport report = run_repetitions(problem, config);
  const auto stats = summarize(report);
  fs::path dir;
  if (!f.out.empty()) {
    dir = f.out;
  } else if (manifest) {
    dir = manifest->output_dir;
  }
  if (!dir.empty()) {
    write_metric_csv(dir / "metrics.csv", report);
    write_latent_rows_csv(dir / "latent.csv", report);
    write_text(dir / "summary.json", summary_json(problem.name, stats) + "\n");
  }
  out << std::left << std::setw(16) << "variant" << std::setw(18) << "metric" << std::setw(10) << "target"
      << std::setw(6) << "n" << std::setw(14) << "median" << std::setw(14) << "q1" << "q3\n";
  for (const auto& s : stats) {
    if (s.metric == "objective") continue;
    out << std::left << std::setw(16) << s.variant << std::setw(18) << s.metric << std::setw(10) << s.target
        << std::setw(6) << s.count << std::setw(14) << s.median << std::setw(14) << s.q1 << s.q3 << "\n";
  }
  return kExitOk;
}

int cmd_latent(const std::string& model_path, const std::string& out_path, std::ostream& out) {
  const LmgpModel model = load_model(model_path);
  const LatentReport lr = latent_report(model);
  if (!out_path.empty()) write_latent_csv(out_path, lr);
  out << latent_json(lr).dump(2) << "\n";
  return kExitOk;
}

int report_error(std::ostream& err, const char* kind, const std::string& message, int code) {
  err << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
  return code;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent-map Gaussian process data fusion and calibration"};
  app.name("lmgp");
  app.require_subcommand(1);

  CommonFlags fit_flags, koh_flags, bench_flags;
  auto* fit = app.add_subcommand("fit", "Fit an LMGP to the sources of a manifest");
  add_common(fit, fit_flags, true);

  auto* koh = app.add_subcommand("koh-fit", "Fit the modular Kennedy-O'Hagan baseline");
  add_common(koh, koh_flags, true);

  std::string model_path, query_path, pred_out;
  bool with_noise = false;
  auto* predict_cmd = app.add_subcommand("predict", "Predict with a saved model");
  predict_cmd->add_option("--model", model_path, "Model JSON")->required();
  predict_cmd->add_option("--query", query_path, "Query CSV")->required();
  predict_cmd->add_option("--out", pred_out, "Output CSV (default: stdout)");
  predict_cmd->add_flag("--with-noise", with_noise, "Add the estimated noise variance");

  std::string problem;
  std::optional<int> reps;
  auto* bench = app.add_subcommand("benchmark", "Run the repeated benchmark study");
  add_common(bench, bench_flags, false);
  bench->add_option("--problem", problem, "Problem name, or table-rrmse");
  bench->add_option("--reps", reps, "Number of repetitions");

  std::string latent_model, latent_out;
  auto* latent = app.add_subcommand("latent", "Report latent positions and distances of a model");
  latent->add_option("--model", latent_model, "Model JSON")->required();
  latent->add_option("--out", latent_out, "Latent CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return report_error(err, "schema", e.what(), kExitValidation);
  }

  try {
    if (*fit) return cmd_fit(fit_flags, out);
    if (*koh) return cmd_koh_fit(koh_flags, out);
    if (*predict_cmd) return cmd_predict(model_path, query_path, pred_out, with_noise, out);
    if (*bench) return cmd_benchmark(bench_flags, problem, reps, out);
    if (*latent) return cmd_latent(latent_model, latent_out, out);
  } catch (const Error& e) {
    const int code = e.kind() == ErrorKind::kNumerical ? kExitNumerical
                     : e.kind() == ErrorKind::kIo      ? kExitIo
                                                       : kExitValidation;
    return report_error(err, to_string(e.kind()), e.what(), code);
  } catch (const nlohmann::json::exception& e) {
    return report_error(err, "schema", e.what(), kExitValidation);
  } catch (const std::exception& e) {
    return report_error(err, "numerical", e.what(), kExitNumerical);
  }
  return report_error(err, "schema", "no command given", kExitValidation);
}

}  // namespace lmgp
