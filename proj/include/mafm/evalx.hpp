#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "json.hpp"

#include "mafm/error.hpp"
#include "mafm/estimate.hpp"
#include "mafm/infer.hpp"
#include "mafm/io.hpp"
#include "mafm/rng.hpp"
#include "mafm/synth.hpp"

namespace mafm {

enum class Method { mine, compas, pcompas };

inline const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::mine: return "mine";
    case Method::compas: return "compas";
    case Method::pcompas: return "pcompas";
  }
  return "?";
}

inline Method parse_method(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::erase(name, '-');
  if (name == "mine") return Method::mine;
  if (name == "compas") return Method::compas;
  if (name == "pcompas") return Method::pcompas;
  fail(ErrorKind::invalid_argument, "unknown method '" + name + "' (expected mine, compas, pcompas)");
}

/// Runs fn(0..count-1) on up to `jobs` threads. Callers write results into slots keyed
/// by index, so the outcome does not depend on scheduling.
inline void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), count);
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t k = next.fetch_add(1); k < count; k = next.fetch_add(1)) {
        try {
          fn(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace detail {

inline constexpr std::uint64_t kTagLoadings = 0x4c4f4144;  // per-cell loading draw
inline constexpr std::uint64_t kTagPanel = 0x50414e45;     // per-replicate factors and noise

// Errors that count as a failed replicate instead of aborting the experiment.
inline bool is_replicate_failure(const Error& e) {
  return e.kind() == ErrorKind::degenerate_signal || e.kind() == ErrorKind::invalid_input ||
         e.kind() == ErrorKind::ill_conditioned;
}

inline double log_distance(double d) {
  return std::log(std::max(d, std::numeric_limits<double>::min()));
}

inline std::vector<double> finite_values(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v)
    if (std::isfinite(x)) out.push_back(x);
  return out;
}

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& s, double p) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = p * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return v.empty() ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline std::string csv_prefix(Index d1, Index d2, Index n, double delta0, double delta1) {
  return std::to_string(d1) + ',' + std::to_string(d2) + ',' + std::to_string(n) + ',' +
         io::format_double(delta0) + ',' + io::format_double(delta1) + ',';
}

inline nlohmann::json json_number(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace detail

/// Kolmogorov-Smirnov distance of the finite entries of `sample` to N(0,1).
inline double ks_statistic(const std::vector<double>& sample) {
  std::vector<double> s = detail::finite_values(sample);
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(s.begin(), s.end());
  const boost::math::normal std_normal;
  const double m = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double f = boost::math::cdf(std_normal, s[k]);
    d = std::max({d, static_cast<double>(k + 1) / m - f, f - static_cast<double>(k) / m});
  }
  return d;
}

inline const char* csv_header() { return "d1,d2,n,delta0,delta1,method,mode,replicate,value"; }

// ---------------------------------------------------------------------------
// Estimation-error experiment

struct ExperimentGrid {
  std::vector<std::pair<Index, Index>> dims{{50, 50}};
  std::vector<Index> sample_sizes{200};
  std::vector<std::pair<double, double>> regimes{{0.0, 0.0}};
  Index r1 = 4;
  Index r2 = 2;
  int replicates = 100;
  std::uint64_t seed = 0;
  std::vector<Method> methods{Method::mine, Method::compas, Method::pcompas};
  double sigma_eps = 1.0;
  double eps = 1e-8;
  int max_iter = 100;

  void validate() const;
};

struct ExperimentCell {
  Index index = 0;
  Index d1 = 0, d2 = 0, n = 0;
  double delta0 = 0.0, delta1 = 0.0;
};

inline std::vector<ExperimentCell> grid_cells(const ExperimentGrid& g) {
  std::vector<ExperimentCell> out;
  for (const auto& [d1, d2] : g.dims)
    for (Index n : g.sample_sizes)
      for (const auto& [a, b] : g.regimes)
        out.push_back({static_cast<Index>(out.size()), d1, d2, n, a, b});
  return out;
}

inline SimConfig cell_config(const ExperimentGrid& g, const ExperimentCell& c) {
  SimConfig cfg;
  cfg.d1 = c.d1;
  cfg.d2 = c.d2;
  cfg.r1 = g.r1;
  cfg.r2 = g.r2;
  cfg.n = c.n;
  cfg.delta0 = c.delta0;
  cfg.delta1 = c.delta1;
  cfg.sigma_eps = g.sigma_eps;
  cfg.seed = g.seed;
  return cfg;
}

inline void ExperimentGrid::validate() const {
  require(!dims.empty(), ErrorKind::invalid_argument, "ExperimentGrid.dims: must be nonempty");
  require(!sample_sizes.empty(), ErrorKind::invalid_argument,
          "ExperimentGrid.sample_sizes: must be nonempty");
  require(!regimes.empty(), ErrorKind::invalid_argument, "ExperimentGrid.regimes: must be nonempty");
  require(!methods.empty(), ErrorKind::invalid_argument, "ExperimentGrid.methods: must be nonempty");
  require(replicates >= 1, ErrorKind::invalid_argument, "ExperimentGrid.replicates: must be >= 1");
  require(eps > 0.0, ErrorKind::invalid_argument, "ExperimentGrid.eps: must be > 0");
  require(max_iter >= 0, ErrorKind::invalid_argument, "ExperimentGrid.max_iter: must be >= 0");
  for (const ExperimentCell& c : grid_cells(*this)) cell_config(*this, c).validate();
}

/// Half of each complement, kept inside the admissible range.
inline std::pair<Index, Index> half_complement(Index d1, Index d2, Index r1, Index r2) {
  const Index s1 = std::clamp<Index>((d1 - r2) / 2, std::min(r2, d1 - r2), d1 - r2);
  const Index s2 = std::clamp<Index>((d2 - r1) / 2, std::min(r1, d2 - r1), d2 - r1);
  return {s1, s2};
}

struct ErrorRecord {
  Index cell = 0;
  Method method = Method::compas;
  Mode mode = Mode::A;
  int replicate = 0;
  double value = 0.0;  // log sine distance, NaN when the replicate failed
};

struct ErrorSummary {
  ExperimentCell cell;
  Method method = Method::compas;
  Mode mode = Mode::A;
  double mean_log_error = 0.0;
  double sd_log_error = 0.0;
  double q10 = 0.0, q50 = 0.0, q90 = 0.0;
  int successes = 0;
  int failures = 0;
};

struct ErrorTable {
  std::vector<ExperimentCell> cells;
  std::vector<ErrorRecord> records;  // ordered by cell, method, mode, replicate
  std::vector<ErrorSummary> summary; // one row per cell x method x mode
  int total_failures = 0;
  int cells_with_success = 0;

  const ErrorSummary& find(Index cell, Method m, Mode mode) const {
    for (const auto& s : summary)
      if (s.cell.index == cell && s.method == m && s.mode == mode) return s;
    fail(ErrorKind::invalid_argument, "ErrorTable: no such summary row");
  }
};

namespace detail {

struct ReplicateErrors {
  std::vector<double> values;  // method-major, then mode A, B
};

inline ReplicateErrors error_replicate(const ExperimentGrid& g, const ExperimentCell& c,
                                       const LoadingPair& loadings, int rep) {
  const SimConfig cfg = cell_config(g, c);
  Rng rng = Rng::substream(g.seed, {static_cast<std::uint64_t>(c.index),
                                    static_cast<std::uint64_t>(rep), kTagPanel});
  const SimResult sim = simulate_panel(cfg, loadings, rng, false);
  const Basis truth_a(sim.truth.U_A), truth_b(sim.truth.U_B);

  ReplicateErrors out;
  out.values.assign(g.methods.size() * 2, std::numeric_limits<double>::quiet_NaN());
  CompasOptions opt;
  opt.eps = g.eps;
  opt.max_iter = g.max_iter;
  try {
    const GramCache cache(sim.X);
    const LoadingPairEstimate init = mine_cached(cache, g.r1, g.r2);
    for (std::size_t k = 0; k < g.methods.size(); ++k) {
      try {
        LoadingPairEstimate est = init;
        if (g.methods[k] == Method::compas) {
          const MafmFit f = refine(sim.X, cache, g.r1, g.r2, c.d1 - g.r2, c.d2 - g.r1, init, opt);
          est = {f.U_A, f.U_B};
        } else if (g.methods[k] == Method::pcompas) {
          const auto [s1, s2] = half_complement(c.d1, c.d2, g.r1, g.r2);
          const MafmFit f = refine(sim.X, cache, g.r1, g.r2, s1, s2, init, opt);
          est = {f.U_A, f.U_B};
        }
        out.values[2 * k] = log_distance(subspace_distance(est.U_A, truth_a).value);
        out.values[2 * k + 1] = log_distance(subspace_distance(est.U_B, truth_b).value);
      } catch (const Error& e) {
        if (!is_replicate_failure(e)) throw;
      }
    }
  } catch (const Error& e) {
    if (!is_replicate_failure(e)) throw;
  }
  return out;
}

}  // namespace detail

/// Fixed loadings per cell, fresh factors and noise per replicate; log sine distance
/// of every method in both modes.
inline ErrorTable run_error_experiment(const ExperimentGrid& grid, int jobs = 1) {
  grid.validate();
  ErrorTable table;
  table.cells = grid_cells(grid);
  std::vector<LoadingPair> loadings;
  for (const ExperimentCell& c : table.cells) {
    Rng rng = Rng::substream(grid.seed, {static_cast<std::uint64_t>(c.index), detail::kTagLoadings});
    loadings.push_back(draw_loadings(cell_config(grid, c), rng));
  }
  const std::size_t reps = static_cast<std::size_t>(grid.replicates);
  std::vector<detail::ReplicateErrors> slots(table.cells.size() * reps);
  parallel_for(slots.size(), jobs, [&](std::size_t k) {
    const std::size_t cell = k / reps;
    slots[k] = detail::error_replicate(grid, table.cells[cell], loadings[cell],
                                       static_cast<int>(k % reps));
  });

  for (const ExperimentCell& c : table.cells) {
    bool any_success = false;
    for (std::size_t m = 0; m < grid.methods.size(); ++m)
      for (int md = 0; md < 2; ++md) {
        ErrorSummary s;
        s.cell = c;
        s.method = grid.methods[m];
        s.mode = md == 0 ? Mode::A : Mode::B;
        std::vector<double> vals;
        for (std::size_t r = 0; r < reps; ++r) {
          const double v =
              slots[static_cast<std::size_t>(c.index) * reps + r].values[2 * m + static_cast<std::size_t>(md)];
          table.records.push_back({c.index, s.method, s.mode, static_cast<int>(r), v});
          vals.push_back(v);
        }
        std::vector<double> ok = detail::finite_values(vals);
        s.successes = static_cast<int>(ok.size());
        s.failures = grid.replicates - s.successes;
        if (md == 0) table.total_failures += s.failures;
        any_success = any_success || s.successes > 0;
        std::sort(ok.begin(), ok.end());
        s.mean_log_error = detail::mean_of(ok);
        s.sd_log_error = detail::sd_of(ok);
        s.q10 = detail::quantile_sorted(ok, 0.1);
        s.q50 = detail::quantile_sorted(ok, 0.5);
        s.q90 = detail::quantile_sorted(ok, 0.9);
        table.summary.push_back(s);
      }
    if (any_success) ++table.cells_with_success;
  }
  return table;
}

inline std::string to_csv(const ErrorTable& t) {
  std::string out = std::string(csv_header()) + '\n';
  for (const ErrorRecord& r : t.records) {
    const ExperimentCell& c = t.cells[static_cast<std::size_t>(r.cell)];
    out += detail::csv_prefix(c.d1, c.d2, c.n, c.delta0, c.delta1);
    out += to_string(r.method);
    out += ',';
    out += to_string(r.mode);
    out += ',' + std::to_string(r.replicate) + ',' + io::format_double(r.value) + '\n';
  }
  return out;
}

inline nlohmann::json to_json(const ErrorTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const ErrorSummary& s : t.summary)
    rows.push_back({{"d1", s.cell.d1},
                    {"d2", s.cell.d2},
                    {"n", s.cell.n},
                    {"delta0", s.cell.delta0},
                    {"delta1", s.cell.delta1},
                    {"method", to_string(s.method)},
                    {"mode", to_string(s.mode)},
                    {"mean_log_error", detail::json_number(s.mean_log_error)},
                    {"sd_log_error", detail::json_number(s.sd_log_error)},
                    {"quantiles", {{"q10", detail::json_number(s.q10)},
                                   {"q50", detail::json_number(s.q50)},
                                   {"q90", detail::json_number(s.q90)}}},
                    {"successes", s.successes},
                    {"failures", s.failures}});
  return {{"kind", "error"},
          {"cells", t.cells.size()},
          {"cells_with_success", t.cells_with_success},
          {"failures", t.total_failures},
          {"summary", rows}};
}

// ---------------------------------------------------------------------------
// Pivot normality and interval coverage for one simulation cell

struct RowExperimentConfig {
  SimConfig sim;
  Mode mode = Mode::A;
  Index row = 0;
  Index coordinate = 0;  // pivot coordinate reported in the draw table
  int replicates = 500;
  std::uint64_t seed = 0;
  double eps = 1e-8;
  int max_iter = 100;

  void validate() const {
    sim.validate();
    require(replicates >= 1, ErrorKind::invalid_argument, "replicates: must be >= 1");
    const Index dim = mode == Mode::A ? sim.d2 : sim.d1;
    const Index rank = mode == Mode::A ? sim.r1 : sim.r2;
    require(rank >= 1, ErrorKind::invalid_argument, "row experiment: the selected mode has rank 0");
    require(row >= 0 && row < dim, ErrorKind::invalid_argument, "row: out of range for the mode");
    require(coordinate >= 0 && coordinate < rank, ErrorKind::invalid_argument,
            "coordinate: must be < the rank of the mode");
  }
};

namespace detail {

template <class Fn>
auto run_rows(const RowExperimentConfig& cfg, int jobs, Fn per_replicate) {
  cfg.validate();
  Rng lrng = Rng::substream(cfg.seed, {0, kTagLoadings});
  const LoadingPair loadings = draw_loadings(cfg.sim, lrng);
  using R = decltype(per_replicate(std::declval<const SimResult&>(), std::declval<const MafmFit&>()));
  std::vector<R> slots(static_cast<std::size_t>(cfg.replicates));
  std::vector<char> ok(slots.size(), 0);
  parallel_for(slots.size(), jobs, [&](std::size_t k) {
    Rng rng = Rng::substream(cfg.seed, {0, static_cast<std::uint64_t>(k), kTagPanel});
    const SimResult sim = simulate_panel(cfg.sim, loadings, rng, false);
    try {
      CompasOptions opt;
      opt.eps = cfg.eps;
      opt.max_iter = cfg.max_iter;
      const MafmFit fit = fit_mafm(sim.X, cfg.sim.r1, cfg.sim.r2, opt);
      slots[k] = per_replicate(sim, fit);
      ok[k] = 1;
    } catch (const Error& e) {
      if (!is_replicate_failure(e)) throw;
    }
  });
  return std::make_pair(std::move(slots), std::move(ok));
}

}  // namespace detail

struct PivotDraw {
  int replicate = 0;
  bool ok = false;
  Vector oracle;       // empty when the oracle pivot failed
  Vector data_driven;  // empty when plug-in inference failed
};

struct NormalityResult {
  RowExperimentConfig config;
  std::vector<PivotDraw> draws;
  double ks_oracle = 0.0, ks_data_driven = 0.0;
  double pooled_var_oracle = 0.0, pooled_var_data_driven = 0.0;
  int successes_oracle = 0, successes_data_driven = 0;
  int failures = 0;  // replicates where neither pivot could be formed

  std::vector<double> coordinate_values(PivotKind kind) const {
    std::vector<double> out;
    for (const PivotDraw& d : draws) {
      const Vector& v = kind == PivotKind::oracle ? d.oracle : d.data_driven;
      out.push_back(v.size() ? v(config.coordinate) : std::numeric_limits<double>::quiet_NaN());
    }
    return out;
  }
};

/// Standardized loading-row pivots, oracle and plug-in, one draw per replicate.
inline NormalityResult run_normality_experiment(const RowExperimentConfig& cfg, int jobs = 1) {
  auto per = [&](const SimResult& sim, const MafmFit& fit) {
    PivotDraw d;
    const PopulationCovs pop = population_covs(sim.truth);
    if (pop.sigma2 > 0.0) d.oracle = oracle_pivot(fit, pop, sim.X.size(), cfg.mode, cfg.row);
    try {
      d.data_driven = standardized_row(sim.X, fit, sim.truth, PivotKind::data_driven, cfg.mode, cfg.row);
    } catch (const Error& e) {
      if (!detail::is_replicate_failure(e)) throw;
    }
    return d;
  };
  auto [slots, ok] = detail::run_rows(cfg, jobs, per);
  NormalityResult res;
  res.config = cfg;
  std::vector<double> pooled_o, pooled_d;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    PivotDraw d = std::move(slots[k]);
    d.replicate = static_cast<int>(k);
    d.ok = ok[k] && (d.oracle.size() || d.data_driven.size());
    if (!d.ok) {
      d.oracle.resize(0);
      d.data_driven.resize(0);
      ++res.failures;
    }
    if (d.oracle.size()) {
      ++res.successes_oracle;
      for (Index j = 0; j < d.oracle.size(); ++j) pooled_o.push_back(d.oracle(j));
    }
    if (d.data_driven.size()) {
      ++res.successes_data_driven;
      for (Index j = 0; j < d.data_driven.size(); ++j) pooled_d.push_back(d.data_driven(j));
    }
    res.draws.push_back(std::move(d));
  }
  res.ks_oracle = ks_statistic(res.coordinate_values(PivotKind::oracle));
  res.ks_data_driven = ks_statistic(res.coordinate_values(PivotKind::data_driven));
  auto pooled_var = [](const std::vector<double>& v) {
    const double sd = detail::sd_of(v);
    return sd * sd;
  };
  res.pooled_var_oracle = pooled_var(pooled_o);
  res.pooled_var_data_driven = pooled_var(pooled_d);
  return res;
}

/// Draw table for one pivot kind; `value` is the configured coordinate.
inline std::string to_csv(const NormalityResult& r, PivotKind kind) {
  std::string out = std::string(csv_header()) + '\n';
  const auto vals = r.coordinate_values(kind);
  const SimConfig& s = r.config.sim;
  const std::string prefix = detail::csv_prefix(s.d1, s.d2, s.n, s.delta0, s.delta1) + "compas," +
                             to_string(r.config.mode) + ',';
  for (std::size_t k = 0; k < vals.size(); ++k)
    out += prefix + std::to_string(k) + ',' + io::format_double(vals[k]) + '\n';
  return out;
}

inline nlohmann::json to_json(const NormalityResult& r) {
  return {{"kind", "normality"},
          {"mode", to_string(r.config.mode)},
          {"row", r.config.row},
          {"coordinate", r.config.coordinate},
          {"replicates", r.config.replicates},
          {"failures", r.failures},
          {"oracle", {{"ks", detail::json_number(r.ks_oracle)},
                      {"pooled_variance", detail::json_number(r.pooled_var_oracle)},
                      {"successes", r.successes_oracle}}},
          {"datadriven", {{"ks", detail::json_number(r.ks_data_driven)},
                          {"pooled_variance", detail::json_number(r.pooled_var_data_driven)},
                          {"successes", r.successes_data_driven}}}};
}

struct CoverageDraw {
  int replicate = 0;
  bool ok = false;
  std::vector<int> covered;  // per coordinate, empty on failure
  bool flagged = false;
};

struct CoverageResult {
  RowExperimentConfig config;
  double level = 0.95;
  std::vector<CoverageDraw> draws;
  Vector coverage;  // per coordinate, NaN when every replicate failed
  Vector std_err;   // binomial standard error
  int successes = 0;
  int failures = 0;
  bool undefined = false;
};

/// Empirical coverage of the plug-in intervals for the rotated truth row.
inline CoverageResult run_coverage_experiment(const RowExperimentConfig& cfg, double level,
                                              int jobs = 1) {
  require(level > 0.0 && level < 1.0, ErrorKind::invalid_argument, "level: must lie in (0, 1)");
  auto per = [&](const SimResult& sim, const MafmFit& fit) {
    const LoadingInference ci = loading_row_ci(sim.X, fit, cfg.mode, cfg.row, level);
    const Matrix& truth_u = cfg.mode == Mode::A ? sim.truth.U_A : sim.truth.U_B;
    const Vector target = rotated_truth_row(fit, truth_u, cfg.mode, cfg.row);
    CoverageDraw d;
    d.flagged = ci.flagged;
    for (Index j = 0; j < target.size(); ++j)
      d.covered.push_back(ci.ci_lo(j) <= target(j) && target(j) <= ci.ci_hi(j) ? 1 : 0);
    return d;
  };
  auto [slots, ok] = detail::run_rows(cfg, jobs, per);
  CoverageResult res;
  res.config = cfg;
  res.level = level;
  const Index rank = cfg.mode == Mode::A ? cfg.sim.r1 : cfg.sim.r2;
  Vector hits = Vector::Zero(rank);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    CoverageDraw d = std::move(slots[k]);
    d.replicate = static_cast<int>(k);
    d.ok = ok[k] != 0;
    if (d.ok) {
      ++res.successes;
      for (Index j = 0; j < rank; ++j) hits(j) += d.covered[static_cast<std::size_t>(j)];
    } else {
      d.covered.clear();
      ++res.failures;
    }
    res.draws.push_back(std::move(d));
  }
  res.undefined = res.successes == 0;
  const double m = static_cast<double>(res.successes);
  res.coverage = res.undefined ? Vector::Constant(rank, std::numeric_limits<double>::quiet_NaN())
                               : Vector(hits / m);
  res.std_err = res.undefined
                    ? Vector::Constant(rank, std::numeric_limits<double>::quiet_NaN())
                    : Vector((res.coverage.array() * (1.0 - res.coverage.array()) / m).sqrt());
  return res;
}

/// Per replicate and coordinate containment indicators; the fixed header gains a
/// trailing coordinate column.
inline std::string to_csv(const CoverageResult& r) {
  std::string out = std::string(csv_header()) + ",coordinate\n";
  const SimConfig& s = r.config.sim;
  const std::string prefix = detail::csv_prefix(s.d1, s.d2, s.n, s.delta0, s.delta1) + "compas," +
                             to_string(r.config.mode) + ',';
  const Index rank = r.coverage.size();
  for (const CoverageDraw& d : r.draws)
    for (Index j = 0; j < rank; ++j) {
      const double v = d.ok ? static_cast<double>(d.covered[static_cast<std::size_t>(j)])
                            : std::numeric_limits<double>::quiet_NaN();
      out += prefix + std::to_string(d.replicate) + ',' + io::format_double(v) + ',' +
             std::to_string(j) + '\n';
    }
  return out;
}

inline nlohmann::json to_json(const CoverageResult& r) {
  nlohmann::json cov = nlohmann::json::array(), se = nlohmann::json::array();
  for (Index j = 0; j < r.coverage.size(); ++j) {
    cov.push_back(detail::json_number(r.coverage(j)));
    se.push_back(detail::json_number(r.std_err(j)));
  }
  int flagged = 0;
  for (const auto& d : r.draws) flagged += d.flagged ? 1 : 0;
  return {{"kind", "coverage"},
          {"mode", to_string(r.config.mode)},
          {"row", r.config.row},
          {"level", r.level},
          {"replicates", r.config.replicates},
          {"successes", r.successes},
          {"failures", r.failures},
          {"flagged", flagged},
          {"undefined", r.undefined},
          {"coverage", cov},
          {"stderr", se}};
}

}  // namespace mafm
