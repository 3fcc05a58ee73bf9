#include "lmgp/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "lmgp/error.hpp"

namespace lmgp {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_io("cannot write " + path.string());
  out << text;
  if (!out) fail_io("write failed for " + path.string());
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t first_line = 2;
};

CsvTable read_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      fail_validation(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                      " cells, found " + std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) fail_validation(path.string() + ": missing header row");
  return t;
}

// Column layout of source and query files.
struct Columns {
  int d_x = 0;
  int d_theta = 0;
};

Columns parse_header(const std::vector<std::string>& header, const std::string& last, const std::string& where) {
  Columns c;
  if (header.empty() || header.back() != last) fail_validation(where + ": last column must be '" + last + "'");
  std::size_t i = 0;
  for (; i + 1 < header.size() && header[i] == "x" + std::to_string(c.d_x + 1); ++i) ++c.d_x;
  for (; i + 1 < header.size() && header[i] == "th" + std::to_string(c.d_theta + 1); ++i) ++c.d_theta;
  if (i + 1 != header.size()) fail_validation(where + ": unexpected column '" + header[i] + "'");
  if (c.d_x == 0) fail_validation(where + ": no x columns");
  return c;
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) fail_validation(where + " must be an object");
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) fail_validation("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
T get_as(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) fail_validation(where + ": missing key '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    fail_validation(where + "." + key + ": " + e.what());
  }
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vec(const json& j, const std::string& where) {
  const auto v = [&] {
    try {
      return j.get<std::vector<double>>();
    } catch (const json::exception& e) {
      fail_validation(where + ": " + e.what());
    }
  }();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json mat_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
  return rows;
}

Eigen::MatrixXd json_mat(const json& j, Eigen::Index cols, const std::string& where) {
  if (!j.is_array()) fail_validation(where + " must be an array of rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Eigen::VectorXd row = json_vec(j[i], where);
    if (row.size() != cols) fail_validation(where + ": row " + std::to_string(i) + " has the wrong length");
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

Bounds json_bounds(const json& j, const std::string& where) {
  check_keys(j, {"lower", "upper"}, where);
  Bounds b{json_vec(get_as<json>(j, "lower", where), where + ".lower"),
           json_vec(get_as<json>(j, "upper", where), where + ".upper")};
  if (b.lower.size() != b.upper.size() || b.lower.size() == 0) fail_validation(where + ": bounds size mismatch");
  if (!(b.lower.array() < b.upper.array()).all()) fail_validation(where + ": lower must be below upper");
  return b;
}

json scaler_json(const Scaler& s) {
  return {{"x_min", vec_json(s.x_min)},         {"x_max", vec_json(s.x_max)}, {"theta_min", vec_json(s.theta_min)},
          {"theta_max", vec_json(s.theta_max)}, {"y_mean", s.y_mean},         {"y_std", s.y_std}};
}

Scaler json_scaler(const json& j) {
  const std::string w = "scaler";
  check_keys(j, {"x_min", "x_max", "theta_min", "theta_max", "y_mean", "y_std"}, w);
  Scaler s;
  s.x_min = json_vec(get_as<json>(j, "x_min", w), w);
  s.x_max = json_vec(get_as<json>(j, "x_max", w), w);
  s.theta_min = json_vec(get_as<json>(j, "theta_min", w), w);
  s.theta_max = json_vec(get_as<json>(j, "theta_max", w), w);
  s.y_mean = get_as<double>(j, "y_mean", w);
  s.y_std = get_as<double>(j, "y_std", w);
  return s;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail_validation(what + " is not valid JSON: " + e.what());
  }
}

void check_format(const json& j, const std::string& format) {
  if (!j.is_object() || j.value("format", "") != format) fail_validation("document is not a " + format);
  if (j.value("version", 0) != kFormatVersion) fail_validation(format + ": unsupported version");
}

TrainConfig parse_train(const json& j, TrainConfig c) {
  const std::string w = "train";
  check_keys(j, {"n_starts", "screen_factor", "max_iterations", "tolerance", "seed", "gradient"}, w);
  if (j.contains("n_starts")) c.n_starts = get_as<int>(j, "n_starts", w);
  if (j.contains("screen_factor")) c.screen_factor = get_as<int>(j, "screen_factor", w);
  if (j.contains("max_iterations")) c.max_iterations = get_as<int>(j, "max_iterations", w);
  if (j.contains("tolerance")) c.tolerance = get_as<double>(j, "tolerance", w);
  if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j, "seed", w);
  if (j.contains("gradient")) {
    const auto g = get_as<std::string>(j, "gradient", w);
    if (g == "analytic") {
      c.gradient = GradientMode::kAnalytic;
    } else if (g == "central-difference") {
      c.gradient = GradientMode::kCentralDifference;
    } else {
      fail_validation("train.gradient must be 'analytic' or 'central-difference'");
    }
  }
  validate(c);
  return c;
}

KohConfig parse_koh(const json& j, KohConfig c) {
  const std::string w = "koh";
  check_keys(j, {"n_starts", "max_iterations", "tolerance", "seed", "module1"}, w);
  if (j.contains("n_starts")) c.n_starts = get_as<int>(j, "n_starts", w);
  if (j.contains("max_iterations")) c.max_iterations = get_as<int>(j, "max_iterations", w);
  if (j.contains("tolerance")) c.tolerance = get_as<double>(j, "tolerance", w);
  if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j, "seed", w);
  if (j.contains("module1")) c.module1 = parse_train(j.at("module1"), c.module1);
  if (c.n_starts < 1 || c.max_iterations < 1 || !(c.tolerance > 0.0)) fail_validation("koh: invalid optimizer settings");
  return c;
}

BenchmarkSpec parse_benchmark(const json& j) {
  const std::string w = "benchmark";
  check_keys(j,
             {"problem", "n_reps", "sizes", "noise_variance", "variants", "test_size", "master_seed", "record_low_mse"},
             w);
  BenchmarkSpec s;
  s.problem = get_as<std::string>(j, "problem", w);
  if (j.contains("n_reps")) s.n_reps = get_as<int>(j, "n_reps", w);
  if (j.contains("sizes")) s.sizes = get_as<std::vector<int>>(j, "sizes", w);
  if (j.contains("noise_variance")) s.noise_variance = get_as<double>(j, "noise_variance", w);
  if (j.contains("variants")) s.variants = get_as<std::vector<std::string>>(j, "variants", w);
  if (j.contains("test_size")) s.test_size = get_as<Eigen::Index>(j, "test_size", w);
  if (j.contains("master_seed")) s.master_seed = get_as<std::uint64_t>(j, "master_seed", w);
  if (j.contains("record_low_mse")) s.record_low_mse = get_as<bool>(j, "record_low_mse", w);
  return s;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

// ---- CSV -----------------------------------------------------------------

std::string format_double(double value) {
  if (std::isnan(value)) return "NaN";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  const std::string t = trim(text);
  if (t == "NaN" || t == "nan" || t == "NAN") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* first = t.data();
  if (!t.empty() && t[0] == '+') ++first;
  const auto res = std::from_chars(first, t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    fail_validation("not a number: '" + text + "'");
  }
  return v;
}

SourceDataset read_source_csv(const std::filesystem::path& path, const std::string& label) {
  const CsvTable t = read_csv(path);
  const Columns c = parse_header(t.header, "y", path.string());
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  SourceDataset s;
  s.label = label;
  s.inputs.resize(n, c.d_x);
  s.outputs.resize(n);
  Eigen::MatrixXd theta(n, c.d_theta);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    const std::string where = path.string() + ":" + std::to_string(i + 2);
    for (int j = 0; j < c.d_x; ++j) {
      s.inputs(i, j) = parse_double(row[static_cast<std::size_t>(j)]);
      if (!std::isfinite(s.inputs(i, j))) fail_validation(where + ": x values must be finite");
    }
    for (int j = 0; j < c.d_theta; ++j) theta(i, j) = parse_double(row[static_cast<std::size_t>(c.d_x + j)]);
    s.outputs(i) = parse_double(row.back());
    if (!std::isfinite(s.outputs(i))) fail_validation(where + ": y must be finite");
  }
  if (c.d_theta > 0) {
    const auto missing = theta.array().isNaN().count();
    if (missing == 0) {
      s.calib_inputs = theta;
    } else if (missing != theta.size()) {
      fail_validation(path.string() + ": calibration columns must be all numbers or all NaN");
    }
  }
  return s;
}

void write_source_csv(const std::filesystem::path& path, const SourceDataset& s) {
  std::ostringstream out;
  const Eigen::Index dth = s.calib_inputs ? s.calib_inputs->cols() : 0;
  for (Eigen::Index j = 0; j < s.inputs.cols(); ++j) out << "x" << j + 1 << ",";
  for (Eigen::Index j = 0; j < dth; ++j) out << "th" << j + 1 << ",";
  out << "y\n";
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.inputs.cols(); ++j) out << format_double(s.inputs(i, j)) << ",";
    for (Eigen::Index j = 0; j < dth; ++j) out << format_double((*s.calib_inputs)(i, j)) << ",";
    out << format_double(s.outputs(i)) << "\n";
  }
  write_file(path, out.str());
}

std::vector<Query> read_query_csv(const std::filesystem::path& path) {
  if (trim(read_file(path)).empty()) return {};
  const CsvTable t = read_csv(path);
  const Columns c = parse_header(t.header, "source", path.string());
  std::vector<Query> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    Query q;
    q.x.resize(c.d_x);
    for (int j = 0; j < c.d_x; ++j) q.x(j) = parse_double(row[static_cast<std::size_t>(j)]);
    if (c.d_theta > 0) {
      Eigen::VectorXd th(c.d_theta);
      for (int j = 0; j < c.d_theta; ++j) th(j) = parse_double(row[static_cast<std::size_t>(c.d_x + j)]);
      const auto missing = th.array().isNaN().count();
      if (missing == 0) {
        q.theta = th;
      } else if (missing != th.size()) {
        fail_validation(path.string() + ":" + std::to_string(i + 2) + ": partially missing calibration values");
      }
    }
    q.source = row.back();
    out.push_back(std::move(q));
  }
  return out;
}

std::string predictions_csv(const std::vector<Query>& queries, const std::vector<Prediction>& predictions) {
  if (queries.size() != predictions.size()) fail_validation("prediction count does not match query count");
  Eigen::Index d_x = 0, d_theta = 0;
  for (const auto& q : queries) {
    d_x = std::max(d_x, q.x.size());
    if (q.theta) d_theta = std::max(d_theta, q.theta->size());
  }
  std::ostringstream out;
  for (Eigen::Index j = 0; j < d_x; ++j) out << "x" << j + 1 << ",";
  for (Eigen::Index j = 0; j < d_theta; ++j) out << "th" << j + 1 << ",";
  out << "source,mean,variance\n";
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    for (Eigen::Index j = 0; j < d_x; ++j) out << format_double(q.x(j)) << ",";
    for (Eigen::Index j = 0; j < d_theta; ++j) {
      out << format_double(q.theta ? (*q.theta)(j) : std::numeric_limits<double>::quiet_NaN()) << ",";
    }
    out << csv_cell(q.source) << "," << format_double(predictions[i].mean) << ","
        << format_double(predictions[i].variance) << "\n";
  }
  return out.str();
}

void write_predictions_csv(const std::filesystem::path& path, const std::vector<Query>& queries,
                           const std::vector<Prediction>& predictions) {
  write_file(path, predictions_csv(queries, predictions));
}

void write_text(const std::filesystem::path& path, const std::string& text) { write_file(path, text); }

// ---- LMGP model ----------------------------------------------------------

std::string model_to_json(const LmgpModel& model) {
  const FusionDataset& ds = model.dataset;
  const auto& p = model.fit.params.correlation;
  json theta = json::array();
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < ds.d_theta(); ++j) {
      if (ds.theta_missing(i)) {
        row.push_back(nullptr);
      } else {
        row.push_back(ds.theta(i, j));
      }
    }
    theta.push_back(row);
  }
  json t = json::array();
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    std::vector<int> row(static_cast<std::size_t>(ds.d_t()));
    for (Eigen::Index j = 0; j < ds.d_t(); ++j) row[static_cast<std::size_t>(j)] = ds.t(i, j);
    t.push_back(row);
  }
  json registry = json::array();
  for (const auto& r : ds.registry) registry.push_back({{"label", r.label}, {"levels", r.levels}});

  json doc;
  doc["format"] = "lmgp-model";
  doc["version"] = kFormatVersion;
  doc["dataset"] = {{"x", mat_json(ds.x)},
                    {"t", t},
                    {"theta", theta},
                    {"d_theta", ds.d_theta()},
                    {"y", vec_json(ds.y)},
                    {"row_source", ds.row_source},
                    {"scaler", scaler_json(ds.scaler)},
                    {"registry", registry},
                    {"level_counts", ds.level_counts},
                    {"strategy", to_string(ds.strategy)},
                    {"latent_dim", ds.latent_dim},
                    {"calibration", ds.calibration}};
  doc["params"] = {{"omega", vec_json(p.omega)},
                   {"latent_map", mat_json(p.map.a)},
                   {"nugget", p.nugget},
                   {"theta_hat", vec_json(p.theta_hat)},
                   {"omega_theta", vec_json(p.omega_theta)}};
  doc["summary"] = {{"beta", vec_json(model.fit.params.beta)},
                    {"sigma2", model.fit.params.sigma2},
                    {"objective", model.fit.objective},
                    {"noise_variance", noise_variance(model)},
                    {"theta_estimate", vec_json(calibration_estimate(model))},
                    {"latent_positions", mat_json(model.fit.latent_positions)}};
  return doc.dump(1);
}

LmgpModel model_from_json(const std::string& text) {
  const json doc = parse_json(text, "model");
  check_format(doc, "lmgp-model");
  check_keys(doc, {"format", "version", "dataset", "params", "summary"}, "model");
  const json& d = get_as<json>(doc, "dataset", "model");
  const std::string w = "dataset";
  check_keys(d,
             {"x", "t", "theta", "d_theta", "y", "row_source", "scaler", "registry", "level_counts", "strategy",
              "latent_dim", "calibration"},
             w);
  FusionDataset ds;
  ds.scaler = json_scaler(get_as<json>(d, "scaler", w));
  ds.y = json_vec(get_as<json>(d, "y", w), "dataset.y");
  const Eigen::Index n = ds.y.size();
  ds.x = json_mat(get_as<json>(d, "x", w), ds.scaler.x_min.size(), "dataset.x");
  ds.row_source = get_as<std::vector<int>>(d, "row_source", w);
  ds.level_counts = get_as<std::vector<int>>(d, "level_counts", w);
  ds.strategy = parse_strategy(get_as<std::string>(d, "strategy", w));
  ds.latent_dim = get_as<int>(d, "latent_dim", w);
  ds.calibration = get_as<bool>(d, "calibration", w);
  for (const auto& r : get_as<json>(d, "registry", w)) {
    check_keys(r, {"label", "levels"}, "dataset.registry");
    ds.registry.push_back({get_as<std::string>(r, "label", "registry"), get_as<std::vector<int>>(r, "levels", "registry")});
  }
  const json& tj = get_as<json>(d, "t", w);
  if (!tj.is_array() || static_cast<Eigen::Index>(tj.size()) != n) fail_validation("dataset.t has the wrong row count");
  const auto d_t = static_cast<Eigen::Index>(ds.level_counts.size());
  ds.t.resize(n, d_t);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = tj[static_cast<std::size_t>(i)].get<std::vector<int>>();
    if (static_cast<Eigen::Index>(row.size()) != d_t) fail_validation("dataset.t row has the wrong length");
    for (Eigen::Index j = 0; j < d_t; ++j) ds.t(i, j) = row[static_cast<std::size_t>(j)];
  }
  const auto d_theta = get_as<Eigen::Index>(d, "d_theta", w);
  const json& thj = get_as<json>(d, "theta", w);
  if (!thj.is_array() || static_cast<Eigen::Index>(thj.size()) != n) {
    fail_validation("dataset.theta has the wrong row count");
  }
  if (static_cast<Eigen::Index>(ds.row_source.size()) != n) fail_validation("dataset.row_source has the wrong length");
  ds.theta = Eigen::MatrixXd::Zero(n, d_theta);
  for (Eigen::Index i = 0; i < n; ++i) {
    const json& row = thj[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != d_theta) {
      fail_validation("dataset.theta row has the wrong length");
    }
    for (Eigen::Index j = 0; j < d_theta; ++j) {
      const json& cell = row[static_cast<std::size_t>(j)];
      if (cell.is_null()) {
        if (!ds.theta_missing(i)) fail_validation("dataset.theta: null outside the high-fidelity rows");
      } else {
        ds.theta(i, j) = cell.get<double>();
      }
    }
  }

  const json& pj = get_as<json>(doc, "params", "model");
  check_keys(pj, {"omega", "latent_map", "nugget", "theta_hat", "omega_theta"}, "params");
  CorrelationParams p;
  p.omega = json_vec(get_as<json>(pj, "omega", "params"), "params.omega");
  p.map.level_counts = ds.level_counts;
  p.map.a = json_mat(get_as<json>(pj, "latent_map", "params"), kLatentDim, "params.latent_map");
  p.nugget = get_as<double>(pj, "nugget", "params");
  p.theta_hat = json_vec(get_as<json>(pj, "theta_hat", "params"), "params.theta_hat");
  p.omega_theta = json_vec(get_as<json>(pj, "omega_theta", "params"), "params.omega_theta");
  try {
    return restore_model(std::move(ds), p, false);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kNumerical) throw;
    fail_validation(std::string("model: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const LmgpModel& model) { write_file(path, model_to_json(model)); }

LmgpModel load_model(const std::filesystem::path& path) { return model_from_json(read_file(path)); }

// ---- KOH model -----------------------------------------------------------

std::string koh_model_to_json(const KohModel& m) {
  const KohData& d = m.data;
  json doc;
  doc["format"] = "koh-model";
  doc["version"] = kFormatVersion;
  doc["data"] = {{"x_low", mat_json(d.x_low)},   {"theta_low", mat_json(d.theta_low)},
                 {"x_high", mat_json(d.x_high)}, {"d", vec_json(d.d)},
                 {"scaler", scaler_json(d.scaler)}, {"low_label", d.low_label},
                 {"high_label", d.high_label}};
  doc["module1"] = {{"sigma2", m.module1.psi1.sigma2},
                    {"omega", vec_json(m.module1.psi1.omega)},
                    {"nugget", m.module1.nugget1}};
  doc["phi"] = {{"theta_star", vec_json(m.phi.theta_star)},
                {"sigma2", m.phi.psi2.sigma2},
                {"omega", vec_json(m.phi.psi2.omega)},
                {"lambda", m.phi.lambda}};
  const double ys = d.scaler.y_std;
  doc["summary"] = {{"beta", vec_json(m.beta)},
                    {"objective", m.objective},
                    {"theta_estimate", vec_json(koh_theta_estimate(m))},
                    {"noise_variance", m.phi.lambda * ys * ys}};
  return doc.dump(1);
}

KohModel koh_model_from_json(const std::string& text) {
  const json doc = parse_json(text, "KOH model");
  check_format(doc, "koh-model");
  check_keys(doc, {"format", "version", "data", "module1", "phi", "summary"}, "model");
  const json& dj = get_as<json>(doc, "data", "model");
  check_keys(dj, {"x_low", "theta_low", "x_high", "d", "scaler", "low_label", "high_label"}, "data");
  KohData d;
  d.scaler = json_scaler(get_as<json>(dj, "scaler", "data"));
  const Eigen::Index dx = d.scaler.x_min.size();
  const Eigen::Index dth = d.scaler.theta_min.size();
  d.x_low = json_mat(get_as<json>(dj, "x_low", "data"), dx, "data.x_low");
  d.theta_low = json_mat(get_as<json>(dj, "theta_low", "data"), dth, "data.theta_low");
  d.x_high = json_mat(get_as<json>(dj, "x_high", "data"), dx, "data.x_high");
  d.d = json_vec(get_as<json>(dj, "d", "data"), "data.d");
  d.low_label = get_as<std::string>(dj, "low_label", "data");
  d.high_label = get_as<std::string>(dj, "high_label", "data");
  if (d.d.size() != d.p() + d.q() || d.theta_low.rows() != d.p()) fail_validation("KOH model: inconsistent data sizes");

  const json& m1 = get_as<json>(doc, "module1", "model");
  check_keys(m1, {"sigma2", "omega", "nugget"}, "module1");
  KohModule1 module1;
  module1.psi1.sigma2 = get_as<double>(m1, "sigma2", "module1");
  module1.psi1.omega = json_vec(get_as<json>(m1, "omega", "module1"), "module1.omega");
  module1.nugget1 = get_as<double>(m1, "nugget", "module1");

  const json& pj = get_as<json>(doc, "phi", "model");
  check_keys(pj, {"theta_star", "sigma2", "omega", "lambda"}, "phi");
  KohPhi phi;
  phi.theta_star = json_vec(get_as<json>(pj, "theta_star", "phi"), "phi.theta_star");
  phi.psi2.sigma2 = get_as<double>(pj, "sigma2", "phi");
  phi.psi2.omega = json_vec(get_as<json>(pj, "omega", "phi"), "phi.omega");
  phi.lambda = get_as<double>(pj, "lambda", "phi");
  if (module1.psi1.omega.size() != dx + dth || phi.psi2.omega.size() != dx || phi.theta_star.size() != dth) {
    fail_validation("KOH model: parameter sizes do not match the data");
  }
  return koh_finalize(std::move(d), module1, phi);
}

void save_koh_model(const std::filesystem::path& path, const KohModel& model) {
  write_file(path, koh_model_to_json(model));
}

KohModel load_koh_model(const std::filesystem::path& path) { return koh_model_from_json(read_file(path)); }

std::string model_format(const std::filesystem::path& path) {
  const json doc = parse_json(read_file(path), path.string());
  const std::string f = doc.is_object() ? doc.value("format", "") : "";
  if (f != "lmgp-model" && f != "koh-model") fail_validation(path.string() + ": unknown model format");
  return f;
}

void write_latent_csv(const std::filesystem::path& path, const LatentReport& report) {
  std::ostringstream out;
  out << "source,z1,z2";
  for (const auto& l : report.labels) out << ",d_" << l;
  out << "\n";
  for (std::size_t i = 0; i < report.labels.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    out << csv_cell(report.labels[i]) << "," << format_double(report.positions(ii, 0)) << ","
        << format_double(report.positions(ii, 1));
    for (Eigen::Index j = 0; j < report.distances.cols(); ++j) out << "," << format_double(report.distances(ii, j));
    out << "\n";
  }
  write_file(path, out.str());
}

// ---- Manifests -----------------------------------------------------------

JobManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir) {
  const json doc = parse_json(text, "manifest");
  check_keys(doc,
             {"sources", "high_fidelity", "strategy", "x_bounds", "theta_bounds", "train", "koh", "benchmark",
              "output_dir"},
             "manifest");
  JobManifest m;
  if (doc.contains("sources")) {
    const json& src = doc.at("sources");
    if (!src.is_array()) fail_validation("manifest.sources must be an array");
    std::set<std::string> seen;
    for (const auto& s : src) {
      check_keys(s, {"label", "path"}, "manifest.sources[]");
      SourceSpec spec{get_as<std::string>(s, "label", "source"), get_as<std::string>(s, "path", "source")};
      if (spec.label.empty()) fail_validation("source label must not be empty");
      if (!seen.insert(spec.label).second) fail_validation("duplicate source label '" + spec.label + "'");
      if (spec.path.is_relative()) spec.path = base_dir / spec.path;
      m.sources.push_back(std::move(spec));
    }
  }
  if (doc.contains("high_fidelity")) m.high_fidelity = get_as<std::string>(doc, "high_fidelity", "manifest");
  if (doc.contains("strategy")) m.strategy = parse_strategy(get_as<std::string>(doc, "strategy", "manifest"));
  if (doc.contains("x_bounds")) m.bounds.x_bounds = json_bounds(doc.at("x_bounds"), "x_bounds");
  if (doc.contains("theta_bounds")) m.bounds.theta_bounds = json_bounds(doc.at("theta_bounds"), "theta_bounds");
  if (doc.contains("train")) m.train = parse_train(doc.at("train"), m.train);
  if (doc.contains("koh")) m.koh = parse_koh(doc.at("koh"), m.koh);
  if (doc.contains("benchmark")) m.benchmark = parse_benchmark(doc.at("benchmark"));
  if (doc.contains("output_dir")) {
    m.output_dir = get_as<std::string>(doc, "output_dir", "manifest");
    if (m.output_dir.is_relative()) m.output_dir = base_dir / m.output_dir;
  } else {
    m.output_dir = base_dir;
  }
  m.koh.bounds = m.bounds;
  return m;
}

JobManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.has_parent_path() ? path.parent_path() : ".");
}

RepetitionConfig repetition_config(const BenchmarkSpec& spec, const BenchmarkProblem& problem) {
  RepetitionConfig c = default_config(problem);
  if (spec.n_reps) c.n_reps = *spec.n_reps;
  if (spec.sizes) c.sizes = *spec.sizes;
  if (spec.noise_variance) c.noise_variance = *spec.noise_variance;
  if (spec.variants) {
    c.variants.clear();
    for (const auto& v : *spec.variants) c.variants.push_back(parse_variant(v, problem));
  }
  if (spec.test_size) c.test_size = *spec.test_size;
  if (spec.master_seed) c.master_seed = *spec.master_seed;
  if (spec.record_low_mse) c.record_low_mse = *spec.record_low_mse;
  validate(c, problem);
  return c;
}

// ---- Reports -------------------------------------------------------------

void write_metric_csv(const std::filesystem::path& path, const MetricReport& report) {
  std::ostringstream out;
  out << "problem,variant,rep,metric,target,value\n";
  for (const auto& r : report.rows) {
    out << csv_cell(r.problem) << "," << csv_cell(r.variant) << "," << r.rep << "," << csv_cell(r.metric) << ","
        << csv_cell(r.target) << "," << format_double(r.value) << "\n";
  }
  write_file(path, out.str());
}

void write_latent_rows_csv(const std::filesystem::path& path, const MetricReport& report) {
  std::ostringstream out;
  out << "rep,variant,source,z1,z2\n";
  for (const auto& r : report.latent) {
    out << r.rep << "," << csv_cell(r.variant) << "," << csv_cell(r.source) << "," << format_double(r.z1) << ","
        << format_double(r.z2) << "\n";
  }
  write_file(path, out.str());
}

std::string summary_json(const std::string& problem, const std::vector<SummaryStat>& stats) {
  json rows = json::array();
  for (const auto& s : stats) {
    rows.push_back({{"variant", s.variant},
                    {"metric", s.metric},
                    {"target", s.target},
                    {"count", s.count},
                    {"median", s.median},
                    {"q1", s.q1},
                    {"q3", s.q3}});
  }
  return json{{"problem", problem}, {"summary", rows}}.dump(1);
}

}  // namespace lmgp
