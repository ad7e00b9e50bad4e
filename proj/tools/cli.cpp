#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "mafm/estimate.hpp"
#include "mafm/evalx.hpp"
#include "mafm/infer.hpp"
#include "mafm/io.hpp"
#include "mafm/pipeline.hpp"
#include "mafm/synth.hpp"

namespace mafm::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument:
    case ErrorKind::empty_complement: return exit_config;
    case ErrorKind::io:
    case ErrorKind::invalid_data: return exit_io;
    case ErrorKind::invalid_input:
    case ErrorKind::degenerate_signal:
    case ErrorKind::degenerate_column:
    case ErrorKind::undefined_r2: return exit_degenerate;
    case ErrorKind::ill_conditioned: return exit_ill_conditioned;
  }
  return exit_config;
}

std::string config_digest(const std::string& json_text) {
  const std::string canonical = json::parse(json_text).dump();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(canonical.data(), canonical.size(), md, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorKind::io, "SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[md[k] >> 4];
    out += hex[md[k] & 0xF];
  }
  return out;
}

namespace {

std::shared_ptr<spdlog::logger> logger() {
  if (auto existing = spdlog::get("mafm")) return existing;
  auto lg = spdlog::stderr_color_mt("mafm");
  lg->set_pattern("[%l] %v");
  return lg;
}

void configure_logging() {
  auto lg = logger();
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("MAFM_LOG")) {
    const std::string v(env);
    if (v == "error") level = spdlog::level::err;
    else if (v == "warn") level = spdlog::level::warn;
    else if (v == "info") level = spdlog::level::info;
    else if (v == "debug") level = spdlog::level::debug;
    else lg->warn("ignoring MAFM_LOG='{}' (expected error, warn, info or debug)", v);
  }
  lg->set_level(level);
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  const std::string text = io::read_file(path);
  try {
    json j = json::parse(text);
    if (!j.is_object()) fail(ErrorKind::invalid_argument, path + ": config must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    fail(ErrorKind::invalid_argument, path + ":" + std::to_string(line) + ": " + e.what());
  }
}

/// Merges command-line flags over config-file keys over defaults, and records the
/// effective value of every parameter for the manifest digest.
class Params {
 public:
  Params(json config, std::string source) : config_(std::move(config)), source_(std::move(source)) {}

  template <class T>
  T get(const std::string& key, const CLI::Option* flag, const T& flag_value, const T& fallback) {
    std::optional<T> v = get_opt<T>(key, flag, flag_value);
    if (!v) {
      v = fallback;
      effective_[key] = fallback;
    }
    return *v;
  }

  template <class T>
  std::optional<T> get_opt(const std::string& key, const CLI::Option* flag, const T& flag_value) {
    used_.insert(key);
    if (flag && flag->count() > 0) {
      effective_[key] = flag_value;
      return flag_value;
    }
    if (config_.contains(key)) {
      try {
        T v = config_.at(key).get<T>();
        effective_[key] = config_.at(key);
        return v;
      } catch (const json::exception& e) {
        fail(ErrorKind::invalid_argument, source_ + ": field '" + key + "': " + e.what());
      }
    }
    return std::nullopt;
  }

  template <class T>
  T config_value(const std::string& key, const T& fallback) {
    return get<T>(key, nullptr, fallback, fallback);
  }

  void record(const std::string& key, const json& value) { effective_[key] = value; }

  void reject_unknown() const {
    for (const auto& [key, value] : config_.items())
      if (!used_.count(key)) fail(ErrorKind::invalid_argument, source_ + ": unknown field '" + key + "'");
  }

  const json& effective() const { return effective_; }

 private:
  json config_;
  std::string source_;
  json effective_ = json::object();
  std::set<std::string> used_;
};

/// Output directory bookkeeping and the run manifest.
class Run {
 public:
  Run(std::string command, fs::path out)
      : command_(std::move(command)), out_(std::move(out)), start_(std::chrono::steady_clock::now()) {}

  void write(const std::string& rel, const std::string& content) {
    io::write_file_atomic(out_ / rel, content);
    outputs_.push_back(rel);
    logger()->info("wrote {}", (out_ / rel).string());
  }

  void write_json(const std::string& rel, json j) {
    j["schema_version"] = kSchemaVersion;
    write(rel, j.dump(2) + "\n");
  }

  json& extra() { return extra_; }

  void finish(const Params& params, std::uint64_t seed) {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json m = {{"schema_version", kSchemaVersion},
              {"command", command_},
              {"config", params.effective()},
              {"config_digest", config_digest(params.effective().dump())},
              {"seed", seed},
              {"tool_version", kToolVersion},
              {"wall_time", wall},
              {"outputs", outputs_}};
    for (const auto& [k, v] : extra_.items()) m[k] = v;
    io::write_file_atomic(out_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string command_;
  fs::path out_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> outputs_;
  json extra_ = json::object();
};

struct Globals {
  std::uint64_t seed_flag = 0;
  CLI::Option* seed_opt = nullptr;
  int jobs = 1;
  std::string out = "out";
  std::string config;
};

std::uint64_t resolve_seed(const Globals& g, Params& p) {
  const std::uint64_t seed = p.get<std::uint64_t>("seed", g.seed_opt, g.seed_flag, 0);
  return seed;
}

std::string series_csv(const MatrixSeries& s) { return io::to_long_csv(s); }

std::string trace_csv(const MafmFit& fit) {
  std::string out = "iteration,change_b,change_a\n";
  for (std::size_t k = 0; k < fit.trace.size(); ++k)
    out += std::to_string(k + 1) + ',' + io::format_double(fit.trace[k].b) + ',' +
           io::format_double(fit.trace[k].a) + '\n';
  return out;
}

io::LabeledPanel load_panel(const std::string& path) {
  require(!path.empty(), ErrorKind::invalid_argument, "--data is required");
  io::LabeledPanel p = io::read_panel(path);
  logger()->info("read panel {}: d1={} d2={} n={}", path, p.X.rows(), p.X.cols(), p.X.size());
  return p;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Globals& g) {
  Params p(load_config(g.config), g.config.empty() ? "config" : g.config);
  SimConfig cfg;
  cfg.d1 = p.config_value<Index>("d1", cfg.d1);
  cfg.d2 = p.config_value<Index>("d2", cfg.d2);
  cfg.r1 = p.config_value<Index>("r1", cfg.r1);
  cfg.r2 = p.config_value<Index>("r2", cfg.r2);
  cfg.n = p.config_value<Index>("n", cfg.n);
  cfg.delta0 = p.config_value<double>("delta0", cfg.delta0);
  cfg.delta1 = p.config_value<double>("delta1", cfg.delta1);
  cfg.sigma_eps = p.config_value<double>("sigma_eps", cfg.sigma_eps);
  cfg.burn_in = p.config_value<Index>("burn_in", cfg.burn_in);
  std::vector<std::pair<double, double>> pool;
  for (const EigenPair& e : cfg.eigen_pool) pool.emplace_back(e.first, e.second);
  pool = p.config_value<std::vector<std::pair<double, double>>>("eigen_pool", pool);
  cfg.eigen_pool.clear();
  for (const auto& [a, b] : pool) cfg.eigen_pool.push_back({a, b});
  cfg.seed = resolve_seed(g, p);
  p.reject_unknown();
  cfg.validate();

  const SimResult sim = simulate(cfg);
  Run run("simulate", g.out);
  run.write("panel.csv", io::to_long_csv(sim.X));
  const SimTruth& t = sim.truth;
  run.write("truth/U_A.csv", io::to_matrix_csv(t.U_A));
  run.write("truth/U_B.csv", io::to_matrix_csv(t.U_B));
  run.write("truth/A.csv", io::to_matrix_csv(t.A));
  run.write("truth/B.csv", io::to_matrix_csv(t.B));
  run.write("truth/F.csv", series_csv(t.F));
  run.write("truth/G.csv", series_csv(t.G));
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  run.write_json("truth/truth.json", {{"lambda_A", vec(t.lambda_A)},
                                      {"lambda_B", vec(t.lambda_B)},
                                      {"sigma_eps", t.sigma_eps},
                                      {"r1", cfg.r1},
                                      {"r2", cfg.r2}});
  run.finish(p, cfg.seed);
  return exit_ok;
}

struct FitFlags {
  std::string data;
  CLI::Option* data_opt = nullptr;
  Index r1 = 0, r2 = 0;
  CLI::Option *r1_opt = nullptr, *r2_opt = nullptr;
  std::string method = "compas";
  CLI::Option* method_opt = nullptr;
  Index s1 = 0, s2 = 0;
  CLI::Option *s1_opt = nullptr, *s2_opt = nullptr;
  double eps = 1e-8;
  CLI::Option* eps_opt = nullptr;
  int max_iter = 100;
  CLI::Option* max_iter_opt = nullptr;
  std::string truth;
  CLI::Option* truth_opt = nullptr;
};

int cmd_fit(const Globals& g, const FitFlags& f) {
  Params p(load_config(g.config), g.config.empty() ? "config" : g.config);
  const std::string data = p.get<std::string>("data", f.data_opt, f.data, "");
  const auto r1 = p.get_opt<Index>("r1", f.r1_opt, f.r1);
  const auto r2 = p.get_opt<Index>("r2", f.r2_opt, f.r2);
  const Method method = parse_method(p.get<std::string>("method", f.method_opt, f.method, "compas"));
  const auto s1 = p.get_opt<Index>("s1", f.s1_opt, f.s1);
  const auto s2 = p.get_opt<Index>("s2", f.s2_opt, f.s2);
  CompasOptions opt;
  opt.eps = p.get<double>("eps", f.eps_opt, f.eps, 1e-8);
  opt.max_iter = p.get<int>("max_iter", f.max_iter_opt, f.max_iter, 100);
  const auto truth = p.get_opt<std::string>("truth", f.truth_opt, f.truth);
  const std::uint64_t seed = resolve_seed(g, p);
  p.reject_unknown();
  require(r1.has_value() && r2.has_value(), ErrorKind::invalid_argument, "fit: --r1 and --r2 are required");
  require(opt.eps > 0.0, ErrorKind::invalid_argument, "fit: --eps must be > 0");
  require(opt.max_iter >= 0, ErrorKind::invalid_argument, "fit: --max-iter must be >= 0");

  const io::LabeledPanel panel = load_panel(data);
  const MatrixSeries& x = panel.X;
  const MafmFit fit = [&] {
    switch (method) {
      case Method::mine: return fit_from_bases(x, mine(x, *r1, *r2));
      case Method::pcompas: {
        const auto half = half_complement(x.rows(), x.cols(), *r1, *r2);
        return compas_partial(x, *r1, *r2, s1.value_or(half.first), s2.value_or(half.second), mine(x, *r1, *r2),
                              opt);
      }
      case Method::compas: break;
    }
    return fit_mafm(x, *r1, *r2, opt);
  }();
  logger()->info("fit: method={} iterations={} converged={}", to_string(method), fit.iterations, fit.converged);

  Run run("fit", g.out);
  run.write("U_A.csv", io::to_matrix_csv(fit.U_A.matrix()));
  run.write("U_B.csv", io::to_matrix_csv(fit.U_B.matrix()));
  run.write("F.csv", series_csv(fit.F));
  run.write("G.csv", series_csv(fit.G));
  run.write("trace.csv", trace_csv(fit));
  const InsampleStats st = insample_stats(x, fit);
  json summary = {{"method", to_string(method)},
                  {"d1", x.rows()},
                  {"d2", x.cols()},
                  {"n", x.size()},
                  {"r1", *r1},
                  {"r2", *r2},
                  {"iterations", fit.iterations},
                  {"converged", fit.converged},
                  {"r_squared", st.r2},
                  {"fit_err", st.fit_err}};
  if (truth) {
    const fs::path dir(*truth);
    const Basis ua(io::read_matrix_csv(dir / "U_A.csv"));
    const Basis ub(io::read_matrix_csv(dir / "U_B.csv"));
    summary["distance_A"] = subspace_distance(fit.U_A, ua).value;
    summary["distance_B"] = subspace_distance(fit.U_B, ub).value;
  }
  run.write_json("fit.json", summary);
  run.finish(p, seed);
  return exit_ok;
}

struct InferFlags {
  std::string data, fit_dir, mode = "both";
  std::vector<Index> rows;
  double level = 0.95;
  CLI::Option *data_opt = nullptr, *fit_opt = nullptr, *mode_opt = nullptr, *rows_opt = nullptr,
              *level_opt = nullptr;
};

int cmd_infer(const Globals& g, const InferFlags& f) {
  Params p(load_config(g.config), g.config.empty() ? "config" : g.config);
  const std::string data = p.get<std::string>("data", f.data_opt, f.data, "");
  const std::string fit_dir = p.get<std::string>("fit", f.fit_opt, f.fit_dir, "");
  const std::string mode = p.get<std::string>("mode", f.mode_opt, f.mode, "both");
  const auto rows = p.get_opt<std::vector<Index>>("rows", f.rows_opt, f.rows);
  const double level = p.get<double>("level", f.level_opt, f.level, 0.95);
  const std::uint64_t seed = resolve_seed(g, p);
  p.reject_unknown();
  require(level > 0.0 && level < 1.0, ErrorKind::invalid_argument, "infer: --level must lie in (0, 1)");
  require(mode == "A" || mode == "B" || mode == "both", ErrorKind::invalid_argument,
          "infer: --mode must be A, B or both");
  require(!fit_dir.empty(), ErrorKind::invalid_argument, "infer: --fit is required");

  const io::LabeledPanel panel = load_panel(data);
  const Basis ua(io::read_matrix_csv(fs::path(fit_dir) / "U_A.csv"));
  const Basis ub(io::read_matrix_csv(fs::path(fit_dir) / "U_B.csv"));
  require(ua.dim() == panel.X.cols() && ub.dim() == panel.X.rows(), ErrorKind::invalid_argument,
          "infer: fitted loadings do not match the panel shape");
  const MafmFit fit = fit_from_bases(panel.X, {ua, ub});
  const PlugInInference inf(panel.X, fit);

  Run run("infer", g.out);
  json summary = {{"level", level}};
  std::vector<Mode> modes;
  if (mode != "B") modes.push_back(Mode::A);
  if (mode != "A") modes.push_back(Mode::B);
  for (Mode m : modes) {
    const Index dim = m == Mode::A ? ua.dim() : ub.dim();
    const Index r = m == Mode::A ? ua.rank() : ub.rank();
    std::vector<Index> which;
    if (rows) {
      which = *rows;
    } else {
      for (Index i = 0; i < dim; ++i) which.push_back(i);
    }
    std::string table = "row,level,flagged";
    for (Index k = 1; k <= r; ++k) table += ",lo_" + std::to_string(k);
    for (Index k = 1; k <= r; ++k) table += ",hi_" + std::to_string(k);
    table += '\n';
    std::string detail = "row,coordinate,estimate,stderr,lo,hi,repair\n";
    int flagged = 0;
    for (Index i : which) {
      require(i >= 0 && i < dim, ErrorKind::invalid_argument,
              "infer: row " + std::to_string(i) + " out of range for mode " + to_string(m));
      const LoadingInference ci = inf.confidence_interval(m, i, level);
      flagged += ci.flagged;
      if (ci.flagged) logger()->warn("mode {} row {}: PSD repair {:.3g} of trace", to_string(m), i, ci.repair);
      table += std::to_string(i) + ',' + io::format_double(level) + ',' + (ci.flagged ? "1" : "0");
      for (Index k = 0; k < r; ++k) table += ',' + io::format_double(ci.ci_lo(k));
      for (Index k = 0; k < r; ++k) table += ',' + io::format_double(ci.ci_hi(k));
      table += '\n';
      for (Index k = 0; k < r; ++k)
        detail += std::to_string(i) + ',' + std::to_string(k + 1) + ',' + io::format_double(ci.estimate(k)) +
                  ',' + io::format_double(ci.std_err(k)) + ',' + io::format_double(ci.ci_lo(k)) + ',' +
                  io::format_double(ci.ci_hi(k)) + ',' + io::format_double(ci.repair) + '\n';
    }
    const std::string tag = to_string(m);
    run.write("infer_" + tag + ".csv", table);
    run.write("infer_" + tag + "_detail.csv", detail);
    summary[tag] = {{"rows", which.size()}, {"flagged", flagged}};
  }
  run.write_json("infer.json", summary);
  run.finish(p, seed);
  return exit_ok;
}

Mode parse_mode(const std::string& s) {
  if (s == "A") return Mode::A;
  if (s == "B") return Mode::B;
  fail(ErrorKind::invalid_argument, "mode must be A or B, got '" + s + "'");
}

int cmd_experiment(const Globals& g) {
  Params p(load_config(g.config), g.config.empty() ? "config" : g.config);
  const std::string kind = p.config_value<std::string>("kind", "error");
  const std::uint64_t seed = resolve_seed(g, p);
  Run run("experiment", g.out);
  run.extra()["jobs"] = g.jobs;

  if (kind == "error") {
    ExperimentGrid grid;
    grid.seed = seed;
    grid.dims = p.config_value<std::vector<std::pair<Index, Index>>>("dims", grid.dims);
    grid.sample_sizes = p.config_value<std::vector<Index>>("sample_sizes", grid.sample_sizes);
    grid.regimes = p.config_value<std::vector<std::pair<double, double>>>("regimes", grid.regimes);
    grid.r1 = p.config_value<Index>("r1", grid.r1);
    grid.r2 = p.config_value<Index>("r2", grid.r2);
    grid.replicates = p.config_value<int>("replicates", grid.replicates);
    grid.sigma_eps = p.config_value<double>("sigma_eps", grid.sigma_eps);
    grid.eps = p.config_value<double>("eps", grid.eps);
    grid.max_iter = p.config_value<int>("max_iter", grid.max_iter);
    std::vector<std::string> names;
    for (Method m : grid.methods) names.push_back(to_string(m));
    names = p.config_value<std::vector<std::string>>("methods", names);
    grid.methods.clear();
    for (const auto& n : names) grid.methods.push_back(parse_method(n));
    p.reject_unknown();

    const ErrorTable table = run_error_experiment(grid, g.jobs);
    run.write("errors.csv", to_csv(table));
    const json summary = to_json(table);
    run.write_json("summary.json", summary);
    run.extra()["cells_with_success"] = table.cells_with_success;
    run.extra()["failures"] = table.total_failures;
    run.finish(p, seed);
    if (table.total_failures > 0) logger()->warn("{} replicate failures", table.total_failures);
    return table.cells_with_success > 0 ? exit_ok : exit_all_failed;
  }

  require(kind == "normality" || kind == "coverage", ErrorKind::invalid_argument,
          "experiment: kind must be error, normality or coverage");
  RowExperimentConfig cfg;
  cfg.seed = seed;
  cfg.sim.d1 = p.config_value<Index>("d1", cfg.sim.d1);
  cfg.sim.d2 = p.config_value<Index>("d2", cfg.sim.d2);
  cfg.sim.r1 = p.config_value<Index>("r1", cfg.sim.r1);
  cfg.sim.r2 = p.config_value<Index>("r2", cfg.sim.r2);
  cfg.sim.n = p.config_value<Index>("n", cfg.sim.n);
  cfg.sim.delta0 = p.config_value<double>("delta0", cfg.sim.delta0);
  cfg.sim.delta1 = p.config_value<double>("delta1", cfg.sim.delta1);
  cfg.sim.sigma_eps = p.config_value<double>("sigma_eps", cfg.sim.sigma_eps);
  cfg.mode = parse_mode(p.config_value<std::string>("mode", "A"));
  cfg.row = p.config_value<Index>("row", cfg.row);
  cfg.coordinate = p.config_value<Index>("coordinate", cfg.coordinate);
  cfg.replicates = p.config_value<int>("replicates", cfg.replicates);
  cfg.eps = p.config_value<double>("eps", cfg.eps);
  cfg.max_iter = p.config_value<int>("max_iter", cfg.max_iter);
  if (kind == "normality") {
    p.reject_unknown();
    const NormalityResult r = run_normality_experiment(cfg, g.jobs);
    run.write("pivots_oracle.csv", to_csv(r, PivotKind::oracle));
    run.write("pivots_datadriven.csv", to_csv(r, PivotKind::data_driven));
    run.write_json("summary.json", to_json(r));
    run.extra()["failures"] = r.failures;
    run.finish(p, seed);
    return r.successes_oracle + r.successes_data_driven > 0 ? exit_ok : exit_all_failed;
  }
  const double level = p.config_value<double>("level", 0.95);
  p.reject_unknown();
  const CoverageResult r = run_coverage_experiment(cfg, level, g.jobs);
  run.write("coverage.csv", to_csv(r));
  run.write_json("summary.json", to_json(r));
  run.extra()["failures"] = r.failures;
  run.finish(p, seed);
  return r.undefined ? exit_all_failed : exit_ok;
}

struct ForecastFlags {
  std::string data, spec;
  Index r1 = 0, r2 = 0;
  std::vector<int> horizons{5, 10};
  Index w0 = 0, min_window = 0;
  int pmax = -1;
  bool baselines = false;
  CLI::Option *data_opt = nullptr, *spec_opt = nullptr, *r1_opt = nullptr, *r2_opt = nullptr,
              *horizons_opt = nullptr, *w0_opt = nullptr, *min_window_opt = nullptr, *pmax_opt = nullptr,
              *baselines_opt = nullptr;
};

MatrixSeries prepared_panel(const io::LabeledPanel& panel, const std::optional<std::string>& spec_path) {
  if (!spec_path) return panel.X;
  const json j = load_config(*spec_path);
  PanelSpec spec = panel_spec_from_json(j, panel.X.cols());
  if (spec.col_labels.empty() && static_cast<Index>(panel.col_labels.size()) == panel.X.cols())
    spec.col_labels = panel.col_labels;
  return preprocess(panel.X, spec);
}

int cmd_forecast(const Globals& g, const ForecastFlags& f) {
  Params p(load_config(g.config), g.config.empty() ? "config" : g.config);
  const std::string data = p.get<std::string>("data", f.data_opt, f.data, "");
  const auto spec = p.get_opt<std::string>("spec", f.spec_opt, f.spec);
  const auto r1 = p.get_opt<Index>("r1", f.r1_opt, f.r1);
  const auto r2 = p.get_opt<Index>("r2", f.r2_opt, f.r2);
  ForecastOptions opt;
  opt.horizons = p.get<std::vector<int>>("horizons", f.horizons_opt, f.horizons, {5, 10});
  const auto w0 = p.get_opt<Index>("w0", f.w0_opt, f.w0);
  const auto min_window = p.get_opt<Index>("min_window", f.min_window_opt, f.min_window);
  const int pmax = p.get<int>("pmax", f.pmax_opt, f.pmax, -1);
  const bool baselines = p.get<bool>("baselines", f.baselines_opt, f.baselines, false);
  const std::uint64_t seed = resolve_seed(g, p);
  p.reject_unknown();
  require(r1.has_value() && r2.has_value(), ErrorKind::invalid_argument, "forecast: --r1 and --r2 are required");
  opt.jobs = g.jobs;
  opt.w0 = w0.value_or(-1);
  opt.min_window = min_window.value_or(-1);

  const io::LabeledPanel panel = load_panel(data);
  const MatrixSeries x = prepared_panel(panel, spec);
  const Index window = opt.min_window >= 0 ? opt.min_window : default_min_window(*r1, *r2);
  const ForecastReport rep = forecast_expanding(x, mafm_forecaster(*r1, *r2, pmax), window, opt);

  Run run("forecast", g.out);
  run.write("fe.csv", fe_csv(rep));
  json report = to_json(rep);
  report["method"] = "mafm";
  report["n"] = x.size();
  if (baselines) {
    const ForecastReport mean = forecast_expanding(x, mean_forecaster(), window, opt);
    const ForecastReport vec = forecast_expanding(x, vec_factor_forecaster(*r1 + *r2, pmax), window, opt);
    run.write("fe_mean.csv", fe_csv(mean));
    run.write("fe_vecfactor.csv", fe_csv(vec));
    report["baselines"] = {{"mean", to_json(mean)}, {"vecfactor", to_json(vec)}};
  }
  run.write_json("forecast.json", report);
  run.extra()["failed_origins"] = rep.failed.size();
  run.finish(p, seed);
  if (!rep.failed.empty()) logger()->warn("{} forecast origins failed", rep.failed.size());
  return rep.fe.empty() ? exit_degenerate : exit_ok;
}

struct RankFlags {
  std::string data, spec;
  Index rmax = 0;
  CLI::Option *data_opt = nullptr, *spec_opt = nullptr, *rmax_opt = nullptr;
};

int cmd_rank(const Globals& g, const RankFlags& f) {
  Params p(load_config(g.config), g.config.empty() ? "config" : g.config);
  const std::string data = p.get<std::string>("data", f.data_opt, f.data, "");
  const auto spec = p.get_opt<std::string>("spec", f.spec_opt, f.spec);
  const auto rmax_in = p.get_opt<Index>("rmax", f.rmax_opt, f.rmax);
  const std::uint64_t seed = resolve_seed(g, p);
  p.reject_unknown();
  const io::LabeledPanel panel = load_panel(data);
  const MatrixSeries x = prepared_panel(panel, spec);
  const Index rmax = rmax_in.value_or(std::min<Index>({8, x.rows(), x.cols()}));
  const RankDiagnostics rd = rank_diagnostics(x, rmax);
  Run run("rank", g.out);
  std::string csv = "k,row_side,col_side\n";
  for (Index k = 0; k < rmax; ++k)
    csv += std::to_string(k + 1) + ',' + io::format_double(rd.row_side(k)) + ',' +
           io::format_double(rd.col_side(k)) + '\n';
  run.write("rank.csv", csv);
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  run.write_json("rank.json", {{"rmax", rmax}, {"row_side", vec(rd.row_side)}, {"col_side", vec(rd.col_side)}});
  run.finish(p, seed);
  return exit_ok;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  configure_logging();
  CLI::App app{"Modewise additive factor model: simulation, estimation, inference, experiments, forecasting",
               "mafm"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kToolVersion);

  Globals g;
  g.seed_opt = app.add_option("--seed", g.seed_flag, "Root seed for all randomness");
  app.add_option("--jobs", g.jobs, "Worker threads for experiments and forecasting")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--config", g.config, "JSON config; command-line flags take precedence");

  auto* sim = app.add_subcommand("simulate", "Simulate a panel and write it with its truth bundle");

  FitFlags ff;
  auto* fit = app.add_subcommand("fit", "Estimate loading spaces and factors");
  ff.data_opt = fit->add_option("--data", ff.data, "Panel: long CSV or slice directory");
  ff.r1_opt = fit->add_option("--r1", ff.r1, "Rank of the row-factor loading A");
  ff.r2_opt = fit->add_option("--r2", ff.r2, "Rank of the column-factor loading B");
  ff.method_opt = fit->add_option("--method", ff.method, "mine, compas or pcompas");
  ff.s1_opt = fit->add_option("--s1", ff.s1, "pcompas: B-complement columns used in the A update");
  ff.s2_opt = fit->add_option("--s2", ff.s2, "pcompas: A-complement columns used in the B update");
  ff.eps_opt = fit->add_option("--eps", ff.eps, "Stopping tolerance");
  ff.max_iter_opt = fit->add_option("--max-iter", ff.max_iter, "Maximum refinement iterations");
  ff.truth_opt = fit->add_option("--truth", ff.truth, "Directory with true U_A.csv and U_B.csv");

  InferFlags inf;
  auto* infer = app.add_subcommand("infer", "Confidence intervals for loading rows");
  inf.data_opt = infer->add_option("--data", inf.data, "Panel used for the fit");
  inf.fit_opt = infer->add_option("--fit", inf.fit_dir, "Output directory of a previous fit");
  inf.mode_opt = infer->add_option("--mode", inf.mode, "A, B or both");
  inf.rows_opt = infer->add_option("--rows", inf.rows, "Row indices (default all)")->delimiter(',');
  inf.level_opt = infer->add_option("--level", inf.level, "Confidence level");

  auto* exp = app.add_subcommand("experiment", "Monte Carlo experiments from a grid config");

  ForecastFlags fc;
  auto* fore = app.add_subcommand("forecast", "Expanding-window one-step forecasts");
  fc.data_opt = fore->add_option("--data", fc.data, "Panel: long CSV or slice directory");
  fc.spec_opt = fore->add_option("--spec", fc.spec, "PanelSpec JSON with per-column transforms");
  fc.r1_opt = fore->add_option("--r1", fc.r1, "Rank of A");
  fc.r2_opt = fore->add_option("--r2", fc.r2, "Rank of B");
  fc.horizons_opt = fore->add_option("--horizons", fc.horizons, "Averaging horizons h")->delimiter(',');
  fc.w0_opt = fore->add_option("--w0", fc.w0, "First forecast origin");
  fc.min_window_opt = fore->add_option("--min-window", fc.min_window, "Minimum training window");
  fc.pmax_opt = fore->add_option("--pmax", fc.pmax, "Largest AR order (default min(10, n/10))");
  fc.baselines_opt = fore->add_flag("--baselines", fc.baselines, "Also score grand-mean and VecFactor forecasts");

  RankFlags rf;
  auto* rank = app.add_subcommand("rank", "Eigenvalue-proportion rank diagnostics");
  rf.data_opt = rank->add_option("--data", rf.data, "Panel: long CSV or slice directory");
  rf.spec_opt = rank->add_option("--spec", rf.spec, "PanelSpec JSON with per-column transforms");
  rf.rmax_opt = rank->add_option("--rmax", rf.rmax, "Number of eigenvalue proportions");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream out, err;
    const int code = app.exit(e, out, err);
    std::cout << out.str();
    std::cerr << err.str();
    return code == 0 ? exit_ok : exit_config;
  }

  try {
    if (sim->parsed()) return cmd_simulate(g);
    if (fit->parsed()) return cmd_fit(g, ff);
    if (infer->parsed()) return cmd_infer(g, inf);
    if (exp->parsed()) return cmd_experiment(g);
    if (fore->parsed()) return cmd_forecast(g, fc);
    if (rank->parsed()) return cmd_rank(g, rf);
  } catch (const Error& e) {
    logger()->error("{}: {}", to_string(e.kind()), e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    logger()->error("{}", e.what());
    return exit_io;
  }
  return exit_config;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int k = 1; k < argc; ++k) args.emplace_back(argv[k]);
  return run_cli(args);
}

}  // namespace mafm::cli
