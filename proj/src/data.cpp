#include "lmgp/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "lmgp/error.hpp"

namespace lmgp {
namespace {

// Column min/max. Constant columns get a unit span so the map stays invertible.
Bounds fit_bounds(const Eigen::MatrixXd& values) {
  Bounds b{values.colwise().minCoeff().transpose(), values.colwise().maxCoeff().transpose()};
  for (Eigen::Index j = 0; j < b.lower.size(); ++j) {
    if (!(b.upper(j) > b.lower(j))) b.upper(j) = b.lower(j) + 1.0;
  }
  return b;
}

void check_bounds(const Bounds& b, Eigen::Index dims, const char* what) {
  if (b.lower.size() != dims || b.upper.size() != dims) {
    fail_validation(std::string(what) + " bounds have wrong dimension");
  }
  for (Eigen::Index j = 0; j < dims; ++j) {
    if (!(b.upper(j) > b.lower(j))) fail_validation(std::string(what) + " bounds must satisfy max > min");
  }
}

// Mean and population standard deviation computed over sorted values so the
// result does not depend on row order.
std::pair<double, double> standardization(const Eigen::VectorXd& y) {
  std::vector<double> sorted(y.data(), y.data() + y.size());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
  std::vector<double> sq(sorted.size());
  std::transform(sorted.begin(), sorted.end(), sq.begin(), [mean](double v) { return (v - mean) * (v - mean); });
  std::sort(sq.begin(), sq.end());
  const double var = std::accumulate(sq.begin(), sq.end(), 0.0) / n;
  const double sd = std::sqrt(var);
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) fail_validation("degenerate output variance");
  return {mean, sd};
}

void require_finite(const Eigen::MatrixXd& m, const std::string& label) {
  if (!m.allFinite()) fail_validation("non-finite values in source '" + label + "'");
}

void check_source_shape(const SourceDataset& s) {
  if (s.rows() < 1) fail_validation("source '" + s.label + "' has no rows");
  if (s.inputs.rows() != s.rows()) fail_validation("source '" + s.label + "': inputs and outputs row counts differ");
  if (s.calib_inputs && s.calib_inputs->rows() != s.rows()) {
    fail_validation("source '" + s.label + "': calibration and output row counts differ");
  }
  require_finite(s.inputs, s.label);
  require_finite(s.outputs, s.label);
  if (s.calib_inputs) require_finite(*s.calib_inputs, s.label);
}

Eigen::MatrixXd scale_columns(const Eigen::MatrixXd& values, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                              ScaleWarnings* warnings) {
  if (values.cols() != lo.size()) fail_validation("column count does not match scaler");
  Eigen::MatrixXd out(values.rows(), values.cols());
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    const double span = hi(j) - lo(j);
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      const double v = values(i, j);
      if (warnings && (v < lo(j) || v > hi(j))) ++warnings->out_of_range;
      out(i, j) = (v - lo(j)) / span;
    }
  }
  return out;
}

}  // namespace

Eigen::MatrixXd scale(const Eigen::MatrixXd& values, const Scaler& scaler, ColumnBlock block,
                      ScaleWarnings* warnings) {
  return block == ColumnBlock::kInputs ? scale_columns(values, scaler.x_min, scaler.x_max, warnings)
                                       : scale_columns(values, scaler.theta_min, scaler.theta_max, warnings);
}

Eigen::MatrixXd unscale(const Eigen::MatrixXd& values, const Scaler& scaler, ColumnBlock block) {
  const auto& lo = block == ColumnBlock::kInputs ? scaler.x_min : scaler.theta_min;
  const auto& hi = block == ColumnBlock::kInputs ? scaler.x_max : scaler.theta_max;
  if (values.cols() != lo.size()) fail_validation("column count does not match scaler");
  Eigen::MatrixXd out(values.rows(), values.cols());
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    out.col(j) = values.col(j).array() * (hi(j) - lo(j)) + lo(j);
  }
  return out;
}

Eigen::VectorXd scale_output(const Eigen::VectorXd& y, const Scaler& scaler) {
  return (y.array() - scaler.y_mean) / scaler.y_std;
}

Eigen::VectorXd unscale_output(const Eigen::VectorXd& y_scaled, const Scaler& scaler) {
  return y_scaled.array() * scaler.y_std + scaler.y_mean;
}

int FusionDataset::source_index(const std::string& label) const {
  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (registry[i].label == label) return static_cast<int>(i);
  }
  return -1;
}

long long latent_position_count(EncodingStrategy strategy, int n_sources) {
  if (strategy == EncodingStrategy::kSingle) return n_sources;
  long long count = 1;
  for (int i = 0; i < n_sources; ++i) count *= n_sources;
  return count;
}

std::vector<int> source_levels(EncodingStrategy strategy, int n_sources, int index) {
  if (strategy == EncodingStrategy::kSingle) return {index};
  return std::vector<int>(static_cast<std::size_t>(n_sources), index);
}

const char* to_string(EncodingStrategy strategy) {
  return strategy == EncodingStrategy::kSingle ? "single" : "per-source";
}

EncodingStrategy parse_strategy(const std::string& text) {
  if (text == "single" || text == "s") return EncodingStrategy::kSingle;
  if (text == "per-source" || text == "per_source" || text == "m") return EncodingStrategy::kPerSource;
  fail_validation("unknown encoding strategy '" + text + "'");
}

FusionDataset assemble_fusion(const std::vector<SourceDataset>& sources, const std::string& high_fidelity_label,
                              EncodingStrategy strategy, const AssembleOptions& options) {
  if (sources.size() < 2) fail_validation("fusion needs at least 2 sources");
  std::set<std::string> labels;
  for (const auto& s : sources) {
    if (!labels.insert(s.label).second) fail_validation("duplicate source label '" + s.label + "'");
    check_source_shape(s);
  }
  const auto hf_it = std::find_if(sources.begin(), sources.end(),
                                  [&](const SourceDataset& s) { return s.label == high_fidelity_label; });
  if (hf_it == sources.end()) fail_validation("unknown high-fidelity label '" + high_fidelity_label + "'");

  std::vector<const SourceDataset*> ordered{&*hf_it};
  for (const auto& s : sources) {
    if (&s != &*hf_it) ordered.push_back(&s);
  }

  const Eigen::Index d_x = ordered.front()->inputs.cols();
  for (const auto* s : ordered) {
    if (s->inputs.cols() != d_x) fail_validation("input dimension mismatch across sources");
  }
  if (hf_it->calib_inputs) fail_validation("high-fidelity source must not carry calibration columns");
  const bool calibration = std::any_of(ordered.begin() + 1, ordered.end(),
                                       [](const SourceDataset* s) { return s->calib_inputs.has_value(); });
  Eigen::Index d_theta = 0;
  if (calibration) {
    d_theta = ordered[1]->calib_inputs ? ordered[1]->calib_inputs->cols() : 0;
    for (auto it = ordered.begin() + 1; it != ordered.end(); ++it) {
      if (!(*it)->calib_inputs) fail_validation("source '" + (*it)->label + "' lacks calibration columns");
      if ((*it)->calib_inputs->cols() != d_theta) fail_validation("calibration dimension mismatch across sources");
    }
    if (d_theta == 0) fail_validation("calibration columns are empty");
  }

  Eigen::Index n = 0;
  for (const auto* s : ordered) n += s->rows();

  Eigen::MatrixXd x_raw(n, d_x);
  Eigen::MatrixXd theta_raw = Eigen::MatrixXd::Zero(n, d_theta);
  Eigen::VectorXd y_raw(n);
  FusionDataset out;
  out.row_source.reserve(static_cast<std::size_t>(n));
  const int k = static_cast<int>(ordered.size());
  out.strategy = strategy;
  out.calibration = calibration;
  out.level_counts = strategy == EncodingStrategy::kSingle ? std::vector<int>{k}
                                                           : std::vector<int>(static_cast<std::size_t>(k), k);
  out.t.resize(n, static_cast<Eigen::Index>(out.level_counts.size()));

  Eigen::Index row = 0;
  for (int s = 0; s < k; ++s) {
    const auto& src = *ordered[static_cast<std::size_t>(s)];
    const auto levels = source_levels(strategy, k, s);
    out.registry.push_back({src.label, levels});
    const Eigen::Index m = src.rows();
    x_raw.middleRows(row, m) = src.inputs;
    y_raw.segment(row, m) = src.outputs;
    if (calibration && s > 0) theta_raw.middleRows(row, m) = *src.calib_inputs;
    for (Eigen::Index i = 0; i < m; ++i) {
      for (std::size_t v = 0; v < levels.size(); ++v) out.t(row + i, static_cast<Eigen::Index>(v)) = levels[v];
      out.row_source.push_back(s);
    }
    row += m;
  }

  Bounds xb;
  if (options.x_bounds) {
    check_bounds(*options.x_bounds, d_x, "input");
    xb = *options.x_bounds;
  } else {
    xb = fit_bounds(x_raw);
  }
  out.scaler.x_min = xb.lower;
  out.scaler.x_max = xb.upper;

  if (calibration) {
    const Eigen::Index n_h = ordered.front()->rows();
    Bounds tb;
    if (options.theta_bounds) {
      check_bounds(*options.theta_bounds, d_theta, "calibration");
      tb = *options.theta_bounds;
    } else {
      tb = fit_bounds(theta_raw.bottomRows(n - n_h));
    }
    out.scaler.theta_min = tb.lower;
    out.scaler.theta_max = tb.upper;
    out.theta = scale_columns(theta_raw, tb.lower, tb.upper, nullptr);
    out.theta.topRows(n_h).setZero();
  } else {
    out.scaler.theta_min.resize(0);
    out.scaler.theta_max.resize(0);
    out.theta.resize(n, 0);
  }

  const auto [mean, sd] = standardization(y_raw);
  out.scaler.y_mean = mean;
  out.scaler.y_std = sd;
  out.x = scale_columns(x_raw, xb.lower, xb.upper, nullptr);
  out.y = scale_output(y_raw, out.scaler);
  validate(out);
  return out;
}

FusionDataset assemble_single_source(const SourceDataset& source, const AssembleOptions& options) {
  check_source_shape(source);
  if (source.calib_inputs) fail_validation("single-source fits take no calibration columns");
  FusionDataset out;
  const Eigen::Index n = source.rows();
  const Eigen::Index d_x = source.inputs.cols();
  Bounds xb;
  if (options.x_bounds) {
    check_bounds(*options.x_bounds, d_x, "input");
    xb = *options.x_bounds;
  } else {
    xb = fit_bounds(source.inputs);
  }
  out.scaler.x_min = xb.lower;
  out.scaler.x_max = xb.upper;
  const auto [mean, sd] = standardization(source.outputs);
  out.scaler.y_mean = mean;
  out.scaler.y_std = sd;
  out.x = scale_columns(source.inputs, xb.lower, xb.upper, nullptr);
  out.y = scale_output(source.outputs, out.scaler);
  out.t.resize(n, 0);
  out.theta.resize(n, 0);
  out.row_source.assign(static_cast<std::size_t>(n), 0);
  out.registry.push_back({source.label, {}});
  validate(out);
  return out;
}

void validate(const FusionDataset& ds) {
  const Eigen::Index n = ds.n();
  if (n < 1) fail_validation("dataset has no rows");
  if (ds.x.rows() != n || ds.t.rows() != n || ds.theta.rows() != n ||
      static_cast<Eigen::Index>(ds.row_source.size()) != n) {
    fail_validation("dataset arrays have inconsistent row counts");
  }
  if (ds.t.cols() != ds.d_t()) fail_validation("categorical columns do not match level counts");
  if (ds.latent_dim != kLatentDim) fail_validation("latent dimension must be 2");
  if (ds.registry.empty()) fail_validation("empty source registry");
  if (ds.scaler.x_min.size() != ds.d_x() || ds.scaler.x_max.size() != ds.d_x()) {
    fail_validation("scaler input dimension mismatch");
  }
  if (ds.calibration != (ds.d_theta() > 0)) fail_validation("calibration flag inconsistent with theta columns");
  if (ds.scaler.theta_min.size() != ds.d_theta()) fail_validation("scaler calibration dimension mismatch");
  if (!(ds.scaler.y_std > 0.0)) fail_validation("degenerate output variance");
  if (!ds.x.allFinite() || !ds.y.allFinite() || !ds.theta.allFinite()) fail_validation("non-finite dataset values");
  for (const auto& src : ds.registry) {
    if (static_cast<Eigen::Index>(src.levels.size()) != ds.d_t()) fail_validation("registry level arity mismatch");
    for (std::size_t v = 0; v < src.levels.size(); ++v) {
      if (src.levels[v] < 0 || src.levels[v] >= ds.level_counts[v]) fail_validation("registry level out of range");
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const int s = ds.row_source[static_cast<std::size_t>(i)];
    if (s < 0 || s >= static_cast<int>(ds.registry.size())) fail_validation("row source index out of range");
    const auto& levels = ds.registry[static_cast<std::size_t>(s)].levels;
    for (Eigen::Index v = 0; v < ds.d_t(); ++v) {
      if (ds.t(i, v) != levels[static_cast<std::size_t>(v)]) fail_validation("row categorical levels not registered");
    }
  }
}

}  // namespace lmgp
