#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "lmgp/bench.hpp"
#include "lmgp/error.hpp"
#include "lmgp/io.hpp"
#include "lmgp/koh.hpp"
#include "lmgp/predict.hpp"
#include "lmgp/train.hpp"

namespace py = pybind11;
using namespace lmgp;

namespace {

SourceDataset make_source(const std::string& label, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const std::optional<Eigen::MatrixXd>& theta) {
  SourceDataset s;
  s.label = label;
  s.inputs = x;
  s.outputs = y;
  s.calib_inputs = theta;
  return s;
}

std::optional<Bounds> to_bounds(const std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& b) {
  if (!b) return std::nullopt;
  return Bounds{b->first, b->second};
}

TrainConfig train_config(int n_starts, int screen_factor, int max_iterations, std::uint64_t seed, int threads) {
  TrainConfig c;
  c.n_starts = n_starts;
  c.screen_factor = screen_factor;
  c.max_iterations = max_iterations;
  c.seed = seed;
  c.threads = threads;
  return c;
}

py::dict latent_dict(const LatentReport& r) {
  py::dict d;
  d["labels"] = r.labels;
  d["positions"] = r.positions;
  d["distances"] = r.distances;
  d["factors"] = r.factors;
  return d;
}

}  // namespace

PYBIND11_MODULE(_lmgp, m) {
  m.doc() = "Latent-map Gaussian processes for multi-source data fusion";

  static py::exception<Error> error(m, "LmgpError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error.ptr())(e.what());
      exc.attr("kind") = to_string(e.kind());
      py::set_error(error, exc);
    }
  });

  py::class_<SourceDataset>(m, "Source")
      .def(py::init(&make_source), py::arg("label"), py::arg("x"), py::arg("y"), py::arg("theta") = std::nullopt)
      .def_readonly("label", &SourceDataset::label)
      .def_readonly("x", &SourceDataset::inputs)
      .def_readonly("y", &SourceDataset::outputs)
      .def_readonly("theta", &SourceDataset::calib_inputs)
      .def_static("read_csv", &read_source_csv, py::arg("path"), py::arg("label"))
      .def("write_csv", [](const SourceDataset& s, const std::filesystem::path& p) { write_source_csv(p, s); });

  py::class_<LmgpModel>(m, "Model")
      .def(
          "predict",
          [](const LmgpModel& model, const Eigen::MatrixXd& x, const std::string& source,
             const std::optional<Eigen::MatrixXd>& theta, bool with_noise) {
            std::vector<Query> qs;
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
              std::optional<Eigen::VectorXd> th;
              if (theta) th = theta->row(i).transpose();
              qs.push_back({x.row(i).transpose(), source, th});
            }
            const auto preds = predict_batch(model, qs, with_noise);
            Eigen::VectorXd mean(x.rows()), var(x.rows());
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
              mean(i) = preds[static_cast<std::size_t>(i)].mean;
              var(i) = preds[static_cast<std::size_t>(i)].variance;
            }
            return py::make_tuple(mean, var);
          },
          py::arg("x"), py::arg("source"), py::arg("theta") = std::nullopt, py::arg("with_noise") = false,
          "Posterior mean and variance at each row of x for one source.")
      .def("latent", [](const LmgpModel& model) { return latent_dict(latent_report(model)); })
      .def_property_readonly("noise_variance", &noise_variance)
      .def_property_readonly("theta", &calibration_estimate)
      .def_property_readonly("objective", [](const LmgpModel& model) { return model.fit.objective; })
      .def_property_readonly("sources",
                             [](const LmgpModel& model) {
                               std::vector<std::string> out;
                               for (const auto& s : model.dataset.registry) out.push_back(s.label);
                               return out;
                             })
      .def("to_json", &model_to_json)
      .def_static("from_json", &model_from_json)
      .def("save", [](const LmgpModel& model, const std::filesystem::path& p) { save_model(p, model); })
      .def_static("load", &load_model);

  m.def(
      "fit",
      [](const std::vector<SourceDataset>& sources, const std::string& high_fidelity, const std::string& strategy,
         int n_starts, int screen_factor, int max_iterations, std::uint64_t seed, int threads,
         const std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& x_bounds,
         const std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& theta_bounds) {
        AssembleOptions opt{to_bounds(x_bounds), to_bounds(theta_bounds)};
        FusionDataset ds = sources.size() == 1 && high_fidelity.empty()
                               ? assemble_single_source(sources[0], opt)
                               : assemble_fusion(sources, high_fidelity.empty() ? sources[0].label : high_fidelity,
                                                 parse_strategy(strategy), opt);
        const TrainConfig cfg = train_config(n_starts, screen_factor, max_iterations, seed, threads);
        py::gil_scoped_release release;
        return train_model(std::move(ds), cfg);
      },
      py::arg("sources"), py::arg("high_fidelity") = "", py::arg("strategy") = "single", py::arg("n_starts") = 24,
      py::arg("screen_factor") = 1, py::arg("max_iterations") = 200, py::arg("seed") = 0, py::arg("threads") = 1,
      py::arg("x_bounds") = std::nullopt, py::arg("theta_bounds") = std::nullopt,
      "Fit an LMGP to one or more sources. A single source with no high_fidelity label gives a plain GP.");

  py::class_<KohModel>(m, "KohModel")
      .def(
          "predict",
          [](const KohModel& model, const Eigen::MatrixXd& x, bool with_noise) {
            Eigen::VectorXd mean(x.rows()), var(x.rows());
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
              const Prediction p = koh_predict_high(model, x.row(i).transpose(), with_noise);
              mean(i) = p.mean;
              var(i) = p.variance;
            }
            return py::make_tuple(mean, var);
          },
          py::arg("x"), py::arg("with_noise") = false)
      .def_property_readonly("theta", &koh_theta_estimate)
      .def_property_readonly("objective", [](const KohModel& model) { return model.objective; })
      .def("to_json", &koh_model_to_json)
      .def_static("from_json", &koh_model_from_json)
      .def("save", [](const KohModel& model, const std::filesystem::path& p) { save_koh_model(p, model); })
      .def_static("load", &load_koh_model);

  m.def(
      "koh_fit",
      [](const SourceDataset& low, const SourceDataset& high, int n_starts, std::uint64_t seed,
         const std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& x_bounds,
         const std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& theta_bounds) {
        KohConfig cfg;
        cfg.n_starts = n_starts;
        cfg.module1.n_starts = n_starts;
        cfg.seed = seed;
        cfg.bounds = {to_bounds(x_bounds), to_bounds(theta_bounds)};
        py::gil_scoped_release release;
        return koh_fit(low, high, cfg);
      },
      py::arg("low"), py::arg("high"), py::arg("n_starts") = 24, py::arg("seed") = 0,
      py::arg("x_bounds") = std::nullopt, py::arg("theta_bounds") = std::nullopt);

  m.def("problems", [] {
    std::vector<std::string> names;
    for (const auto& p : all_problems()) names.push_back(p.name);
    return names;
  });
  m.def("problem_info", [](const std::string& name) {
    const BenchmarkProblem& p = find_problem(name);
    py::dict d;
    d["name"] = p.name;
    d["sources"] = p.sources;
    d["x_bounds"] = py::make_tuple(p.x_bounds.lower, p.x_bounds.upper);
    if (p.theta_bounds) d["theta_bounds"] = py::make_tuple(p.theta_bounds->lower, p.theta_bounds->upper);
    d["theta_true"] = p.theta_true;
    return d;
  });
  m.def(
      "evaluate",
      [](const std::string& problem, const std::string& source, const Eigen::MatrixXd& x,
         const std::optional<Eigen::MatrixXd>& theta) {
        const BenchmarkProblem& p = find_problem(problem);
        const int s = p.source_index(source);
        if (s < 0) fail_validation(problem + " has no source " + source);
        return eval_source_rows(p, s, x, theta);
      },
      py::arg("problem"), py::arg("source"), py::arg("x"), py::arg("theta") = std::nullopt);
  m.def("sobol", &sobol_points, py::arg("n"), py::arg("d"), py::arg("rep_index") = 0, py::arg("master_seed") = 0,
        py::arg("scramble") = true, py::arg("stream") = 0);
  m.def("table_rrmse", [](Eigen::Index n) {
    py::list out;
    for (const auto& e : table_rrmse(n)) {
      py::dict d;
      d["table"] = e.table;
      d["problem"] = e.problem;
      d["source"] = e.source;
      d["value"] = e.value;
      d["reference"] = e.reference;
      out.append(d);
    }
    return out;
  }, py::arg("n") = 10000);
  m.def(
      "benchmark",
      [](const std::string& problem, int reps, std::uint64_t seed, const std::optional<std::vector<std::string>>& variants,
         const std::optional<std::vector<int>>& sizes, std::optional<int> n_starts, int threads) {
        const BenchmarkProblem& p = find_problem(problem);
        RepetitionConfig c = default_config(p);
        c.n_reps = reps;
        c.master_seed = seed;
        c.threads = threads;
        if (variants) {
          c.variants.clear();
          for (const auto& v : *variants) c.variants.push_back(parse_variant(v, p));
        }
        if (sizes) c.sizes = *sizes;
        if (n_starts) {
          c.train.n_starts = *n_starts;
          c.koh.n_starts = *n_starts;
          c.koh.module1.n_starts = *n_starts;
        }
        MetricReport r;
        {
          py::gil_scoped_release release;
          r = run_repetitions(p, c);
        }
        py::list rows;
        for (const auto& row : r.rows) {
          rows.append(py::make_tuple(row.problem, row.variant, row.rep, row.metric, row.target, row.value));
        }
        return rows;
      },
      py::arg("problem"), py::arg("reps") = 30, py::arg("seed") = 0, py::arg("variants") = std::nullopt,
      py::arg("sizes") = std::nullopt, py::arg("n_starts") = std::nullopt, py::arg("threads") = 1,
      "Repeated-fit experiment. Returns (problem, variant, rep, metric, target, value) rows.");
}
