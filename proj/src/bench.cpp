#include "lmgp/bench.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "lmgp/error.hpp"
#include "lmgp/parallel.hpp"
#include "lmgp/random.hpp"

namespace lmgp {
namespace {

#include "bench/sobol_directions.inc"

using Directions = std::array<std::uint32_t, kSobolBits>;

Directions direction_numbers(int dim) {
  Directions v{};
  if (dim == 0) {
    v.fill(1);
  } else {
    const std::uint32_t poly = kSobolPoly[static_cast<std::size_t>(dim)];
    const int m = std::bit_width(poly) - 1;
    const auto& init = kSobolVinit[static_cast<std::size_t>(dim)];
    for (int j = 0; j < m; ++j) v[static_cast<std::size_t>(j)] = init[static_cast<std::size_t>(j)];
    for (int j = m; j < kSobolBits; ++j) {
      std::uint32_t next = v[static_cast<std::size_t>(j - m)];
      std::uint32_t pow2 = 1;
      for (int k = 0; k < m; ++k) {
        pow2 <<= 1;
        if ((poly >> (m - 1 - k)) & 1U) next ^= pow2 * v[static_cast<std::size_t>(j - k - 1)];
      }
      v[static_cast<std::size_t>(j)] = next;
    }
  }
  for (int k = 0; k < kSobolBits; ++k) v[static_cast<std::size_t>(k)] <<= (kSobolBits - 1 - k);
  return v;
}

// Random lower-triangular unit-diagonal matrix over GF(2) applied to each
// direction number, bits indexed from the most significant.
void linear_scramble(Directions& v, Rng& rng) {
  std::array<std::uint32_t, kSobolBits> rows{};
  for (int r = 0; r < kSobolBits; ++r) {
    std::uint32_t row = 1U << (kSobolBits - 1 - r);
    for (int c = 0; c < r; ++c) {
      if (rng.next() >> 63) row |= 1U << (kSobolBits - 1 - c);
    }
    rows[static_cast<std::size_t>(r)] = row;
  }
  for (auto& value : v) {
    std::uint32_t out = 0;
    for (int r = 0; r < kSobolBits; ++r) {
      if (std::popcount(rows[static_cast<std::size_t>(r)] & value) & 1) out |= 1U << (kSobolBits - 1 - r);
    }
    value = out;
  }
}

double sq(double v) { return v * v; }

std::string lower_case(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

Bounds make_bounds(std::initializer_list<double> lo, std::initializer_list<double> hi) {
  Bounds b;
  b.lower = Eigen::Map<const Eigen::VectorXd>(lo.begin(), static_cast<Eigen::Index>(lo.size()));
  b.upper = Eigen::Map<const Eigen::VectorXd>(hi.begin(), static_cast<Eigen::Index>(hi.size()));
  return b;
}

std::vector<BenchmarkProblem> build_problems() {
  std::vector<BenchmarkProblem> out;
  const Bounds line = make_bounds({-2.0}, {3.0});
  out.push_back({ProblemId::kRational1D, "rational1d", line, std::nullopt, {}, {"h", "l1", "l2", "l3"}});
  out.push_back({ProblemId::kPoly1D, "poly1d", line, std::nullopt, {}, {"h", "l1", "l2"}});

  Eigen::VectorXd t(1);
  t << 0.1;
  out.push_back({ProblemId::kPolyCalib, "polycalib", line, make_bounds({-2.0}, {2.0}), t, {"h", "l1", "l2"}});

  t << 10.0 * std::numbers::pi;
  out.push_back({ProblemId::kSinCalib, "sincalib", make_bounds({0.0}, {1.0}),
                 make_bounds({std::numbers::pi - 2.0}, {10.0 * std::numbers::pi + 2.0}), t, {"h", "l"}});

  out.push_back({ProblemId::kWingWeight, "wingweight",
                 make_bounds({150, 220, 6, -10, 16, 0.5, 0.08, 2.5, 1700, 0.025},
                             {200, 300, 10, 10, 45, 1.0, 0.18, 6.0, 2500, 0.08}),
                 std::nullopt, {}, {"h", "l1", "l2", "l3"}});
  out.push_back({ProblemId::kBorehole, "borehole",
                 make_bounds({100, 990, 700, 100, 0.05, 10, 1000, 6000}, {1000, 1110, 820, 10000, 0.15, 500, 2000, 12000}),
                 std::nullopt, {}, {"h", "l1", "l2", "l3"}});

  t << 1.0;
  out.push_back({ProblemId::kRationalCalib, "rationalcalib", line, make_bounds({-1.0}, {2.0}), t, {"h", "l1", "l2"}});

  Eigen::VectorXd t2(2);
  t2 << 250.0, 1500.0;
  out.push_back({ProblemId::kBoreholeCalib, "boreholecalib",
                 make_bounds({100, 990, 700, 100, 0.05, 6000}, {1000, 1110, 820, 10000, 0.15, 12000}),
                 make_bounds({10.0, 1000.0}, {500.0, 2000.0}), t2, {"h", "l1", "l2"}});
  return out;
}

double wing_weight(const Eigen::VectorXd& x, double sw_power, double wp_factor) {
  const double sw = x(0), wfw = x(1), a = x(2), lam = x(3) * std::numbers::pi / 180.0, q = x(4), taper = x(5),
               tc = x(6), nz = x(7), wdg = x(8), wp = x(9);
  const double c = std::cos(lam);
  return 0.036 * std::pow(sw, sw_power) * std::pow(wfw, 0.0035) * std::pow(a / (c * c), 0.6) * std::pow(q, 0.006) *
             std::pow(taper, 0.04) * std::pow(100.0 * tc / c, -0.3) * std::pow(nz * wdg, 0.49) +
         wp_factor * sw * wp;
}

struct BoreholeTerms {
  double head_upper = 1.0;  // multiplier on Hu
  double head_lower = 1.0;  // multiplier on Hl
  double outer_log_radius = 1.0;
  double length_factor = 2.0;
  double transmissivity_ratio = 1.0;
};

double borehole(double tu, double hu, double hl, double r, double rw, double tl, double l, double kw,
                const BoreholeTerms& c) {
  const double log_ratio = std::log(r / rw);
  const double outer = std::log(c.outer_log_radius * r / rw);
  return 2.0 * std::numbers::pi * tu * (c.head_upper * hu - c.head_lower * hl) /
         (outer * (1.0 + c.length_factor * l * tu / (log_ratio * rw * rw * kw) + c.transmissivity_ratio * tu / tl));
}

double borehole_calib_low(const Eigen::VectorXd& x, const Eigen::VectorXd& th, double hu_factor, double hl_factor,
                          double log_factor) {
  const double hu = x(1), hl = x(2), r = x(3), rw = x(4), kw = x(5);
  const double tl = th(0), l = th(1);
  const double log_ratio = std::log(r / rw);
  return 2.0 * std::numbers::pi * 500.0 * (hu_factor * hu - hl_factor * hl) /
         (log_factor * log_ratio * (1.0 + 2.0 * l * 500.0 / (log_ratio * rw * rw * kw) + 500.0 / tl));
}

const Eigen::VectorXd& require_theta(const BenchmarkProblem& p, int source, const std::optional<Eigen::VectorXd>& th) {
  if (!th) fail_validation(p.name + ": source " + p.sources[static_cast<std::size_t>(source)] + " needs theta");
  if (th->size() != p.d_theta()) fail_validation(p.name + ": theta has wrong dimension");
  return *th;
}

// Row-keyed seed for repetition streams.
std::uint64_t rep_seed(const RepetitionConfig& c, int rep, std::uint64_t stream) {
  return derive_seed(c.master_seed, static_cast<std::uint64_t>(rep), stream);
}

constexpr std::uint64_t kTrainNoiseStream = 100;
constexpr std::uint64_t kTestPointStream = 1000;
constexpr std::uint64_t kTestNoiseStream = 1001;
constexpr std::uint64_t kLowTestStream = 1100;
constexpr std::uint64_t kFitStream = 3000;

}  // namespace

// ---- Sobol ----------------------------------------------------------------

Eigen::MatrixXd sobol_points(Eigen::Index n, int d, std::uint64_t rep_index, std::uint64_t master_seed, bool scramble,
                             std::uint64_t stream) {
  if (n < 0) fail_validation("sobol_points: negative point count");
  if (d < 1 || d > kSobolMaxDim) fail_validation("sobol_points: dimension must be in [1, 64]");
  if (n > (Eigen::Index{1} << kSobolBits)) fail_validation("sobol_points: too many points");
  Eigen::MatrixXd out(n, d);
  Rng rng(derive_seed(master_seed, rep_index, stream));
  for (int j = 0; j < d; ++j) {
    Directions v = direction_numbers(j);
    std::uint32_t state = 0;
    if (scramble) {
      linear_scramble(v, rng);
      state = static_cast<std::uint32_t>(rng.next() >> (64 - kSobolBits));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i > 0) {
        const int c = std::countr_one(static_cast<std::uint64_t>(i - 1));
        state ^= v[static_cast<std::size_t>(c)];
      }
      out(i, j) = std::ldexp(static_cast<double>(state), -kSobolBits);
    }
  }
  return out;
}

Eigen::MatrixXd to_box(const Eigen::MatrixXd& unit, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  if (unit.cols() != lower.size() || lower.size() != upper.size()) fail_validation("to_box: dimension mismatch");
  Eigen::MatrixXd out(unit.rows(), unit.cols());
  for (Eigen::Index j = 0; j < unit.cols(); ++j) out.col(j) = lower(j) + unit.col(j).array() * (upper(j) - lower(j));
  return out;
}

// ---- Problems -------------------------------------------------------------

int BenchmarkProblem::source_index(const std::string& label) const {
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (sources[i] == label) return static_cast<int>(i);
  }
  return -1;
}

const std::vector<BenchmarkProblem>& all_problems() {
  static const std::vector<BenchmarkProblem> problems = build_problems();
  return problems;
}

const BenchmarkProblem& get_problem(ProblemId id) {
  for (const auto& p : all_problems()) {
    if (p.id == id) return p;
  }
  fail_validation("unknown problem id");
}

const BenchmarkProblem& find_problem(const std::string& name) {
  const std::string key = lower_case(name);
  for (const auto& p : all_problems()) {
    if (p.name == key) return p;
  }
  fail_validation("unknown problem: " + name);
}

double eval_source(const BenchmarkProblem& p, int source, const Eigen::VectorXd& x,
                   const std::optional<Eigen::VectorXd>& theta) {
  if (source < 0 || source >= static_cast<int>(p.sources.size())) fail_validation(p.name + ": source out of range");
  if (x.size() != p.d_x()) fail_validation(p.name + ": x has wrong dimension");
  switch (p.id) {
    case ProblemId::kRational1D: {
      const double v = x(0);
      switch (source) {
        case 0: return 1.0 / (0.1 * v * v * v + v * v + v + 1.0);
        case 1: return 1.0 / (0.2 * v * v * v + v * v + v + 1.0);
        case 2: return 1.0 / (v * v + v + 1.0);
        default: return 1.0 / (v * v + 1.0);
      }
    }
    case ProblemId::kPoly1D: {
      const double v = x(0);
      switch (source) {
        case 0: return 0.1 * v * v * v + v * v + v + 1.0;
        case 1: return 0.2 * v * v * v + v * v + v + 1.0;
        default: return v * v + v + 1.0;
      }
    }
    case ProblemId::kPolyCalib: {
      const double v = x(0);
      if (source == 0) return 0.1 * v * v * v + v * v + v + 1.0;
      const double th = require_theta(p, source, theta)(0);
      return source == 1 ? th * v * v * v + v * v + v + 1.0 : th * v * v * v + v * v + 1.0;
    }
    case ProblemId::kSinCalib: {
      const double v = x(0);
      if (source == 0) return std::sin(std::numbers::pi * v) + std::sin(10.0 * std::numbers::pi * v);
      return std::sin(require_theta(p, source, theta)(0) * v);
    }
    case ProblemId::kWingWeight:
      switch (source) {
        case 0: return wing_weight(x, 0.758, 1.0);
        case 1: return wing_weight(x, 0.758, 0.0) + x(9);
        case 2: return wing_weight(x, 0.8, 0.0) + x(9);
        default: return wing_weight(x, 0.9, 0.0);
      }
    case ProblemId::kBorehole: {
      BoreholeTerms c;
      if (source == 1) {
        c.head_lower = 0.8;
        c.length_factor = 1.0;
      } else if (source == 2) {
        c.length_factor = 8.0;
        c.transmissivity_ratio = 0.75;
      } else if (source == 3) {
        c.head_upper = 1.1;
        c.outer_log_radius = 4.0;
      }
      return borehole(x(0), x(1), x(2), x(3), x(4), x(5), x(6), x(7), c);
    }
    case ProblemId::kRationalCalib: {
      const double v = x(0);
      if (source == 0) return 1.0 / (0.1 * v * v * v + v * v + v + 10.0);
      const double th = require_theta(p, source, theta)(0);
      return source == 1 ? 1.0 / (0.1 * v * v * v + th * v * v + 1.5 * v + 10.5) : 1.0 / (th * v * v + v + 10.0);
    }
    case ProblemId::kBoreholeCalib: {
      if (source == 0) return borehole(x(0), x(1), x(2), x(3), x(4), 250.0, 1500.0, x(5), BoreholeTerms{});
      const Eigen::VectorXd& th = require_theta(p, source, theta);
      return source == 1 ? borehole_calib_low(x, th, 0.993, 1.0, 0.95) : borehole_calib_low(x, th, 1.0, 1.045, 1.0);
    }
  }
  fail_validation("unknown problem");
}

Eigen::VectorXd eval_source_rows(const BenchmarkProblem& p, int source, const Eigen::MatrixXd& x,
                                 const std::optional<Eigen::MatrixXd>& theta) {
  if (theta && theta->rows() != x.rows()) fail_validation(p.name + ": theta rows do not match x rows");
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::optional<Eigen::VectorXd> th;
    if (theta) th = theta->row(i).transpose();
    out(i) = eval_source(p, source, x.row(i).transpose(), th);
  }
  return out;
}

// ---- Metrics --------------------------------------------------------------

Eigen::VectorXd add_noise(const Eigen::VectorXd& y, double sigma2, std::uint64_t seed) {
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) fail_validation("noise variance must be finite and >= 0");
  if (sigma2 == 0.0) return y;
  Rng rng(seed);
  const double sd = std::sqrt(sigma2);
  Eigen::VectorXd out = y;
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += sd * rng.normal();
  return out;
}

double rrmse(const Eigen::VectorXd& candidate, const Eigen::VectorXd& reference) {
  if (candidate.size() != reference.size() || reference.size() == 0) fail_validation("rrmse: size mismatch");
  const double n = static_cast<double>(reference.size());
  const double var = (reference.array() - reference.mean()).square().sum() / n;
  if (!(var > 0.0)) fail_validation("rrmse: reference has zero variance");
  return std::sqrt((candidate - reference).squaredNorm() / (n * var));
}

double mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truths) {
  if (predictions.size() != truths.size() || truths.size() == 0) fail_validation("mse: size mismatch");
  return (predictions - truths).squaredNorm() / static_cast<double>(truths.size());
}

std::vector<RrmseEntry> table_rrmse(Eigen::Index n) {
  struct ReferenceRow {
    const char* table;
    ProblemId id;
    std::vector<double> values;
  };
  const std::vector<ReferenceRow> references = {
      {"table1", ProblemId::kRational1D, {0.23364, 0.14626, 0.72549}},
      {"table2", ProblemId::kWingWeight, {0.19912, 1.1423, 5.7484}},
      {"table3", ProblemId::kBorehole, {3.6671, 1.3688, 0.36232}},
      {"table4", ProblemId::kRationalCalib, {0.22241, 0.1285}},
      {"table5", ProblemId::kBoreholeCalib, {0.049219, 0.19838}},
  };
  std::vector<RrmseEntry> out;
  for (const auto& row : references) {
    const BenchmarkProblem& p = get_problem(row.id);
    const Eigen::MatrixXd x = to_box(sobol_points(n, p.d_x(), 0, 0, false), p.x_bounds.lower, p.x_bounds.upper);
    const Eigen::VectorXd yh = eval_source_rows(p, 0, x);
    std::optional<Eigen::MatrixXd> theta;
    if (p.calibration()) theta = p.theta_true.transpose().replicate(n, 1);
    for (std::size_t s = 1; s < p.sources.size(); ++s) {
      const Eigen::VectorXd yl = eval_source_rows(p, static_cast<int>(s), x, theta);
      out.push_back({row.table, p.name, p.sources[s], rrmse(yl, yh), row.values[s - 1]});
    }
  }
  return out;
}

double sin_calib_mse(double theta, Eigen::Index n) {
  if (n < 2) fail_validation("sin_calib_mse: need at least two points");
  const BenchmarkProblem& p = get_problem(ProblemId::kSinCalib);
  Eigen::VectorXd x(1), th(1);
  th << theta;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    x << static_cast<double>(i) / static_cast<double>(n - 1);
    total += sq(eval_source(p, 0, x) - eval_source(p, 1, x, th));
  }
  return total / static_cast<double>(n);
}

// ---- Latent geometry -------------------------------------------------------

LatentReport latent_report(const std::vector<std::string>& labels, const Eigen::MatrixXd& positions) {
  if (static_cast<Eigen::Index>(labels.size()) != positions.rows()) fail_validation("latent_report: label count mismatch");
  LatentReport r;
  r.labels = labels;
  r.positions = positions;
  const Eigen::Index k = positions.rows();
  r.distances = Eigen::MatrixXd::Zero(k, k);
  r.factors = Eigen::MatrixXd::Ones(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const double d = (positions.row(i) - positions.row(j)).norm();
      r.distances(i, j) = d;
      r.factors(i, j) = std::exp(-d * d);
    }
  }
  return r;
}

LatentReport latent_report(const FusionDataset& dataset, const FitResult& fit) {
  std::vector<std::string> labels;
  for (const auto& s : dataset.registry) labels.push_back(s.label);
  return latent_report(labels, fit.latent_positions);
}

LatentReport latent_report(const LmgpModel& model) { return latent_report(model.dataset, model.fit); }

// ---- Harness --------------------------------------------------------------

Variant parse_variant(const std::string& name, const BenchmarkProblem& problem) {
  Variant v;
  v.name = name;
  const auto fail = [&](const std::string& why) -> void {
    fail_validation("variant " + name + " for " + problem.name + ": " + why);
  };
  const auto source_list = [&](const std::string& spec) {
    std::vector<int> out;
    if (lower_case(spec) == "all") {
      for (std::size_t s = 1; s < problem.sources.size(); ++s) out.push_back(static_cast<int>(s));
      return out;
    }
    std::size_t start = 0;
    while (start <= spec.size()) {
      const std::size_t end = std::min(spec.find('+', start), spec.size());
      const std::string label = spec.substr(start, end - start);
      const int idx = problem.source_index(label);
      if (idx <= 0) fail("unknown low-fidelity source '" + label + "'");
      if (std::find(out.begin(), out.end(), idx) != out.end()) fail("duplicate source '" + label + "'");
      out.push_back(idx);
      start = end + 1;
    }
    return out;
  };

  const std::string upper = [&] {
    std::string s = name;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
  }();
  if (upper == "GP") {
    v.kind = VariantKind::kGp;
    return v;
  }
  if (upper.rfind("KOH_", 0) == 0) {
    v.kind = VariantKind::kKoh;
    if (!problem.calibration()) fail("KOH needs a calibration problem");
    v.low_sources = source_list(name.substr(4));
    if (v.low_sources.size() != 1) fail("KOH takes exactly one low-fidelity source");
    return v;
  }
  if (upper.rfind("LMGP_", 0) == 0) {
    const std::size_t sep = name.find('_', 5);
    if (sep == std::string::npos) fail("expected LMGP_<s|m>_<sources>");
    const std::string strat = lower_case(name.substr(5, sep - 5));
    if (strat == "s" || strat == "single") {
      v.strategy = EncodingStrategy::kSingle;
    } else if (strat == "m" || strat == "per-source") {
      v.strategy = EncodingStrategy::kPerSource;
    } else {
      fail("unknown strategy '" + strat + "'");
    }
    v.low_sources = source_list(name.substr(sep + 1));
    return v;
  }
  fail("expected GP, KOH_<source> or LMGP_<s|m>_<sources>");
  return v;
}

void validate(const RepetitionConfig& c, const BenchmarkProblem& problem) {
  if (c.n_reps < 1) fail_validation("n_reps must be >= 1");
  if (c.sizes.size() != problem.sources.size()) {
    fail_validation("sizes must list one sample size per source of " + problem.name);
  }
  for (int n : c.sizes) {
    if (n < 1) fail_validation("every sample size must be >= 1");
  }
  if (!(c.noise_variance >= 0.0) || !std::isfinite(c.noise_variance)) fail_validation("noise variance must be >= 0");
  if (c.test_size < 1) fail_validation("test size must be >= 1");
  if (c.variants.empty()) fail_validation("no variants requested");
  if (c.threads < 1) fail_validation("threads must be >= 1");
  for (const auto& v : c.variants) {
    if (v.name.empty()) fail_validation("variant without a name");
    for (int s : v.low_sources) {
      if (s <= 0 || s >= static_cast<int>(problem.sources.size())) fail_validation("variant source out of range");
    }
  }
  validate(c.train);
  validate(c.koh.module1);
}

std::vector<double> MetricReport::values(const std::string& variant, const std::string& metric,
                                         const std::string& target) const {
  std::vector<double> out;
  for (const auto& r : rows) {
    if (r.variant == variant && r.metric == metric && r.target == target) out.push_back(r.value);
  }
  return out;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) fail_validation("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) fail_validation("quantile level must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<SummaryStat> summarize(const MetricReport& report) {
  std::vector<SummaryStat> out;
  std::vector<std::tuple<std::string, std::string, std::string>> keys;
  for (const auto& r : report.rows) {
    auto key = std::make_tuple(r.variant, r.metric, r.target);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  for (const auto& [variant, metric, target] : keys) {
    const std::vector<double> v = report.values(variant, metric, target);
    out.push_back({variant, metric, target, v.size(), quantile(v, 0.5), quantile(v, 0.25), quantile(v, 0.75)});
  }
  return out;
}

RepetitionData draw_repetition(const BenchmarkProblem& p, const RepetitionConfig& c, int rep) {
  RepetitionData data;
  const auto r = static_cast<std::uint64_t>(rep);
  for (std::size_t s = 0; s < p.sources.size(); ++s) {
    const bool param = p.parameterized(static_cast<int>(s));
    const int d = p.d_x() + (param ? p.d_theta() : 0);
    const Eigen::MatrixXd u = sobol_points(c.sizes[s], d, r, c.master_seed, true, s);
    SourceDataset src;
    src.label = p.sources[s];
    src.inputs = to_box(u.leftCols(p.d_x()), p.x_bounds.lower, p.x_bounds.upper);
    if (param) src.calib_inputs = to_box(u.rightCols(p.d_theta()), p.theta_bounds->lower, p.theta_bounds->upper);
    const Eigen::VectorXd y = eval_source_rows(p, static_cast<int>(s), src.inputs, src.calib_inputs);
    src.outputs = add_noise(y, c.noise_variance, rep_seed(c, rep, kTrainNoiseStream + s));
    data.sources.push_back(std::move(src));
  }
  data.test_x = to_box(sobol_points(c.test_size, p.d_x(), r, c.master_seed, true, kTestPointStream),
                       p.x_bounds.lower, p.x_bounds.upper);
  data.test_y = add_noise(eval_source_rows(p, 0, data.test_x), c.noise_variance, rep_seed(c, rep, kTestNoiseStream));
  return data;
}

namespace {

void record_theta(std::vector<MetricRow>& rows, const MetricRow& base, const Eigen::VectorXd& theta) {
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    MetricRow row = base;
    row.metric = "theta_hat";
    row.target = theta.size() == 1 ? "theta" : "theta" + std::to_string(j + 1);
    row.value = theta(j);
    rows.push_back(row);
  }
}

void run_variant(const BenchmarkProblem& p, const RepetitionConfig& c, int rep, const RepetitionData& data,
                 const Variant& v, std::vector<MetricRow>& rows, std::vector<LatentRow>& latent) {
  const MetricRow base{p.name, v.name, rep, "", "", 0.0};
  const auto push = [&](const std::string& metric, const std::string& target, double value) {
    MetricRow row = base;
    row.metric = metric;
    row.target = target;
    row.value = value;
    rows.push_back(row);
  };
  const std::uint64_t fit_seed = rep_seed(c, rep, kFitStream);
  const SourceDataset& high = data.sources[0];

  if (v.kind == VariantKind::kKoh) {
    KohConfig kc = c.koh;
    kc.seed = fit_seed;
    kc.bounds.x_bounds = p.x_bounds;
    kc.bounds.theta_bounds = p.theta_bounds;
    const KohModel model = koh_fit(data.sources[static_cast<std::size_t>(v.low_sources[0])], high, kc);
    push("mse", high.label, mse(koh_predict_means(model, data.test_x), data.test_y));
    record_theta(rows, base, koh_theta_estimate(model));
    push("noise_variance", "all", model.phi.lambda * model.data.scaler.y_std * model.data.scaler.y_std);
    push("objective", "", model.objective);
    return;
  }

  TrainConfig tc = c.train;
  tc.seed = fit_seed;
  AssembleOptions opts;
  opts.x_bounds = p.x_bounds;

  if (v.kind == VariantKind::kGp) {
    const LmgpModel model = train_model(assemble_single_source(high, opts), tc);
    push("mse", high.label, mse(predict_means(model, data.test_x, high.label), data.test_y));
    push("noise_variance", "all", noise_variance(model));
    push("objective", "", model.fit.objective);
    return;
  }

  std::vector<SourceDataset> sources{high};
  bool calibrated = false;
  for (int s : v.low_sources) {
    sources.push_back(data.sources[static_cast<std::size_t>(s)]);
    calibrated = calibrated || p.parameterized(s);
  }
  if (calibrated) opts.theta_bounds = p.theta_bounds;
  const LmgpModel model = train_model(assemble_fusion(sources, high.label, v.strategy, opts), tc);
  push("mse", high.label, mse(predict_means(model, data.test_x, high.label), data.test_y));

  if (c.record_low_mse) {
    for (int s : v.low_sources) {
      const bool param = p.parameterized(s);
      const int d = p.d_x() + (param ? p.d_theta() : 0);
      const Eigen::MatrixXd u = sobol_points(c.test_size, d, static_cast<std::uint64_t>(rep), c.master_seed, true,
                                             kLowTestStream + static_cast<std::uint64_t>(s));
      const Eigen::MatrixXd x = to_box(u.leftCols(p.d_x()), p.x_bounds.lower, p.x_bounds.upper);
      std::optional<Eigen::MatrixXd> th;
      if (param) th = to_box(u.rightCols(p.d_theta()), p.theta_bounds->lower, p.theta_bounds->upper);
      const auto& label = p.sources[static_cast<std::size_t>(s)];
      push("mse", label, mse(predict_means(model, x, label, th), eval_source_rows(p, s, x, th)));
    }
  }
  if (model.dataset.calibration) record_theta(rows, base, calibration_estimate(model));
  push("noise_variance", "all", noise_variance(model));
  push("objective", "", model.fit.objective);

  const LatentReport lr = latent_report(model);
  for (std::size_t i = 0; i < lr.labels.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    latent.push_back({rep, v.name, lr.labels[i], lr.positions(ii, 0), lr.positions(ii, 1)});
    for (std::size_t j = i + 1; j < lr.labels.size(); ++j) {
      push("latent_distance", lr.labels[i] + "|" + lr.labels[j], lr.distances(ii, static_cast<Eigen::Index>(j)));
    }
  }
}

}  // namespace

MetricReport run_repetitions(const BenchmarkProblem& problem, const RepetitionConfig& config) {
  validate(config, problem);
  std::vector<MetricReport> per_rep(static_cast<std::size_t>(config.n_reps));
  parallel_for(config.n_reps, config.threads, [&](int rep) {
    MetricReport& out = per_rep[static_cast<std::size_t>(rep)];
    const RepetitionData data = draw_repetition(problem, config, rep);
    for (const auto& v : config.variants) {
      std::vector<MetricRow> rows;
      std::vector<LatentRow> latent;
      try {
        run_variant(problem, config, rep, data, v, rows, latent);
      } catch (const Error& e) {
        rows.assign(1, MetricRow{problem.name, v.name, rep, "failed", to_string(e.kind()), 1.0});
        latent.clear();
      }
      out.rows.insert(out.rows.end(), rows.begin(), rows.end());
      out.latent.insert(out.latent.end(), latent.begin(), latent.end());
    }
  });
  MetricReport report;
  for (auto& r : per_rep) {
    report.rows.insert(report.rows.end(), r.rows.begin(), r.rows.end());
    report.latent.insert(report.latent.end(), r.latent.begin(), r.latent.end());
  }
  return report;
}

RepetitionConfig default_config(const BenchmarkProblem& problem) {
  RepetitionConfig c;
  std::vector<std::string> names;
  switch (problem.id) {
    case ProblemId::kRational1D:
      c.sizes = {3, 20, 20, 20};
      names = {"LMGP_s_All", "LMGP_m_All", "GP", "LMGP_s_l1", "LMGP_s_l2", "LMGP_s_l3"};
      break;
    case ProblemId::kPoly1D:
      c.sizes = {3, 20, 20};
      names = {"LMGP_s_All", "GP", "LMGP_s_l1", "LMGP_s_l2"};
      break;
    case ProblemId::kPolyCalib:
      c.sizes = {5, 25, 25};
      names = {"LMGP_s_All", "LMGP_s_l1", "LMGP_s_l2", "KOH_l1", "KOH_l2"};
      break;
    case ProblemId::kSinCalib:
      c.sizes = {100, 200};
      names = {"LMGP_s_All", "KOH_l"};
      break;
    case ProblemId::kWingWeight:
      c.sizes = {15, 50, 50, 50};
      c.noise_variance = 25.0;
      names = {"LMGP_s_All", "GP", "LMGP_s_l1", "LMGP_s_l2", "LMGP_s_l3"};
      break;
    case ProblemId::kBorehole:
      c.sizes = {15, 50, 50, 50};
      names = {"LMGP_s_All", "GP", "LMGP_s_l1", "LMGP_s_l2", "LMGP_s_l3"};
      break;
    case ProblemId::kRationalCalib:
      c.sizes = {3, 50, 50};
      names = {"LMGP_s_All", "LMGP_s_l1", "LMGP_s_l2", "KOH_l1", "KOH_l2"};
      break;
    case ProblemId::kBoreholeCalib:
      c.sizes = {15, 50, 50};
      names = {"LMGP_s_All", "LMGP_s_l1", "LMGP_s_l2", "KOH_l1", "KOH_l2"};
      break;
  }
  for (const auto& n : names) c.variants.push_back(parse_variant(n, problem));
  c.train.screen_factor = 10;
  c.koh.module1.screen_factor = 10;
  c.threads = env_thread_count();
  return c;
}

}  // namespace lmgp
