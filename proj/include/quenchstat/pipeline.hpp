#pragma once

// End-to-end runs: quench experiments, spectral-flow scans and toy-model
// overlays, with their CSV/JSON outputs and run manifests.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <functional>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "quenchstat/basis.hpp"
#include "quenchstat/errors.hpp"
#include "quenchstat/io.hpp"
#include "quenchstat/operator.hpp"
#include "quenchstat/quench.hpp"
#include "quenchstat/spectral.hpp"
#include "quenchstat/statistics.hpp"
#include "quenchstat/subsystem.hpp"
#include "quenchstat/toymodel.hpp"

namespace quenchstat {

inline constexpr const char* kVersion = "0.1.0";
inline const std::vector<std::string> kObservableNames{"loschmidt", "trace_distance", "magnetization"};

/// Field values lo, lo + step, ... up to hi (inclusive within 1e-9 step);
/// a single number gives a one-point grid.
inline std::vector<double> parse_grid(const std::string& spec) {
  auto num = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size() || !std::isfinite(v)) throw ParameterError("");
      return v;
    } catch (const std::exception&) {
      throw ParameterError("invalid number '" + s + "' in grid '" + spec + "'");
    }
  };
  const auto c1 = spec.find(':');
  if (c1 == std::string::npos) return {num(spec)};
  const auto c2 = spec.find(':', c1 + 1);
  if (c2 == std::string::npos) throw ParameterError("grid must be lo:hi:step, got '" + spec + "'");
  const double lo = num(spec.substr(0, c1)), hi = num(spec.substr(c1 + 1, c2 - c1 - 1)), step = num(spec.substr(c2 + 1));
  if (!(step > 0.0) || hi < lo) throw ParameterError("grid needs step > 0 and hi >= lo, got '" + spec + "'");
  std::vector<double> g;
  for (std::size_t i = 0;; ++i) {
    const double v = lo + static_cast<double>(i) * step;
    if (v > hi + 1e-9 * step) break;
    g.push_back(v);
    if (g.size() > 100000) throw ParameterError("grid '" + spec + "' has too many points");
  }
  return g;
}

/// S^z_tot values 0, 1, 2, 3 (half-integers for odd N) that fit on the ring.
inline std::vector<double> initial_sectors(int n_sites) {
  const double base = (n_sites % 2 == 0) ? 0.0 : 0.5;
  std::vector<double> s;
  for (int i = 0; i <= 3; ++i)
    if (base + i <= 0.5 * n_sites) s.push_back(base + i);
  return s;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct QuenchConfig {
  int n = 16;
  int ns = 4;
  int offset = 0;
  double j1 = 1.0;
  double j2 = 0.0;
  double hi = 0.2;
  double hf = 0.0;
  std::size_t samples = kDefaultSamples;
  std::uint64_t seed = 42;
  std::size_t nmax = 5;
  std::size_t levels = 0;  // post-quench eigenpairs; 0 = the whole sector
  Solver solver = Solver::kAuto;
  bool renormalize = false;
  double mode_tail = 1e-10;  // weight of the smallest blocks dropped from time series
  std::vector<std::string> observables = kObservableNames;
  std::string cache_dir;  // empty: no eigendata cache

  ModelParams params(double h) const {
    ModelParams p;
    p.n_sites = n;
    p.j1 = j1;
    p.j2 = j2;
    p.h_s = h;
    p.n_subsystem = ns;
    p.subsystem_offset = offset;
    return p;
  }
  bool wants(const std::string& name) const {
    return std::find(observables.begin(), observables.end(), name) != observables.end();
  }
};

inline void validate(const QuenchConfig& c) {
  validate(QuenchSpec{c.params(c.hi), c.params(c.hf)});
  if (c.samples < 2) throw ParameterError("need at least 2 samples");
  if (c.nmax < 1) throw ParameterError("nmax must be >= 1");
  if (!(c.mode_tail >= 0.0 && c.mode_tail < 1e-2)) throw ParameterError("mode tail must lie in [0, 1e-2)");
  if (c.ns > 12) throw ParameterError("subsystem size above 12 sites is not supported");
  if (c.observables.empty()) throw ParameterError("no observables selected");
  for (const auto& o : c.observables)
    if (std::find(kObservableNames.begin(), kObservableNames.end(), o) == kObservableNames.end())
      throw ParameterError("unknown observable '" + o + "' (choose from loschmidt, trace_distance, magnetization)");
}

struct SolveRecord {
  std::shared_ptr<const EigenData> eigen;
  bool cache_hit = false;
  std::string cache_key;
  double seconds = 0.0;
};

/// Supplies post-quench eigendata for a Hamiltonian in a sector.
using EigenProvider = std::function<SolveRecord(const ModelParams&, const SectorBasis&)>;

/// Diagonalizes with the configured solver, reading and filling the cache
/// directory when one is set.
inline EigenProvider default_provider(const QuenchConfig& c) {
  return [c](const ModelParams& p, const SectorBasis& basis) {
    const std::size_t k = c.levels ? std::min(c.levels, basis.dim()) : basis.dim();
    SolveRecord r;
    const auto desc = EigenCache::describe(p, basis.n_up(), c.solver, k);
    r.cache_key = EigenCache::key(desc);
    Stopwatch sw;
    if (!c.cache_dir.empty()) {
      if (auto hit = EigenCache(c.cache_dir).load(desc)) {
        r.eigen = std::make_shared<const EigenData>(std::move(*hit));
        r.cache_hit = true;
        r.seconds = sw.seconds();
        return r;
      }
    }
    const auto op = build_hamiltonian(p, basis);
    auto e = std::make_shared<const EigenData>(diagonalize(op, k, c.solver, c.seed));
    if (!c.cache_dir.empty()) EigenCache(c.cache_dir).store(desc, *e);
    r.eigen = std::move(e);
    r.seconds = sw.seconds();
    return r;
  };
}

struct ObservableResult {
  std::string name;
  std::vector<double> series;
  Distribution distribution;
  double analytic_mean = 0.0;
};

struct QuenchResult {
  QuenchConfig config;
  QuenchSpec spec;
  GroundState initial;
  int n_up = 0;
  std::size_t dim = 0;
  SolveRecord solve;
  QuenchState state;
  SamplingPlan plan;
  ModeSet modes;
  bool identity = false;
  std::vector<std::size_t> blocks_by_weight;  // descending block weight
  std::optional<ObservableResult> le, ds, mz;
  std::optional<ReducedState> average;
  std::optional<BoundsReport> bounds;
  std::optional<Distribution> truncated_le;
  double truncated_sup_distance = 0.0;
  double seconds = 0.0;

  double block_weight(std::size_t rank) const {
    return rank < blocks_by_weight.size() ? state.block_weight[static_cast<Eigen::Index>(blocks_by_weight[rank])]
                                          : 0.0;
  }
  /// Weight of the lowest-energy block (the post-quench ground manifold).
  double ground_block_weight() const { return state.block_weight.size() ? state.block_weight[0] : 0.0; }
};

inline QuenchResult compute_quench(const QuenchConfig& cfg, const EigenProvider& provider = {}) {
  validate(cfg);
  Stopwatch sw;
  QuenchResult r;
  r.config = cfg;
  r.spec = {cfg.params(cfg.hi), cfg.params(cfg.hf)};
  r.identity = is_identity(r.spec);

  r.initial = ground_state_search(r.spec.pre, initial_sectors(cfg.n), cfg.solver, cfg.seed);
  r.n_up = n_up_for_sz(cfg.n, r.initial.sz_total);
  const SectorBasis basis(cfg.n, r.n_up);
  r.dim = basis.dim();
  r.solve = (provider ? provider : default_provider(cfg))(r.spec.post, basis);
  CoveragePolicy policy;
  policy.renormalize = cfg.renormalize;
  r.state = compute_weights(r.initial.vector, r.solve.eigen, policy);
  r.modes = select_modes(r.state, cfg.mode_tail);
  r.plan = make_plan(r.state, cfg.samples, cfg.seed);

  r.blocks_by_weight.resize(r.state.n_blocks());
  std::iota(r.blocks_by_weight.begin(), r.blocks_by_weight.end(), std::size_t{0});
  std::stable_sort(r.blocks_by_weight.begin(), r.blocks_by_weight.end(), [&](std::size_t a, std::size_t b) {
    return r.state.block_weight[static_cast<Eigen::Index>(a)] > r.state.block_weight[static_cast<Eigen::Index>(b)];
  });

  const auto times = sample_times(r.plan);
  if (cfg.wants("loschmidt")) {
    ObservableResult o{"loschmidt", loschmidt_series(r.state, times, cfg.mode_tail), {}, r.state.le_mean};
    o.distribution = histogram(o.series);
    r.le = std::move(o);
    r.truncated_le = truncated_le_distribution(r.state, cfg.nmax, r.plan);
    r.truncated_sup_distance = ecdf_sup_distance(r.le->distribution, *r.truncated_le);
  }
  std::optional<ObservableTable> mz_table;
  if (cfg.wants("magnetization")) {
    mz_table = observable_table(r.state, build_subsystem_sz(r.spec.post, basis), cfg.mode_tail);
    ObservableResult o{"magnetization", observable_series(*mz_table, times), {}, mz_table->mean};
    o.distribution = histogram(o.series);
    r.mz = std::move(o);
  }
  if (cfg.wants("trace_distance")) {
    const auto sites = field_sites(r.spec.post);
    const SubsystemLayout layout(basis.states(), sites);
    r.average = average_reduced_state(r.state, layout, cfg.mode_tail);
    const auto mirror = mirror_rows(basis, sites);
    ObservableResult o{"trace_distance",
                       trace_distance_series(r.state, layout, *r.average, times, cfg.mode_tail, 256, mirror), {}, 0.0};
    o.distribution = histogram(o.series);
    o.analytic_mean = o.distribution.moments.mean;
    r.ds = std::move(o);

    std::vector<MonitoredObservable> monitored;
    if (r.mz) monitored.push_back({"magnetization", r.mz->series, r.mz->analytic_mean, -0.5 * cfg.ns, 0.5 * cfg.ns});
    BoundsOptions bo;
    bo.tail = cfg.mode_tail;
    r.bounds = check_bounds(r.state, layout, r.ds->series, monitored,
                            r.le ? std::span<const double>(r.le->series) : std::span<const double>(), bo);
  }
  r.seconds = sw.seconds();
  return r;
}

inline json to_json(const BoundsReport& b) {
  json markov = json::array();
  for (const auto& m : b.markov_curve)
    markov.push_back({{"epsilon", m.epsilon}, {"probability", m.probability}, {"bound", m.bound}});
  json eq4 = json::array();
  for (const auto& c : b.eq4_checks)
    eq4.push_back({{"observable", c.name}, {"max_violation", c.max_violation}, {"holds", c.holds}});
  return {{"le_mean", b.le_mean},
          {"d_eff", b.d_eff},
          {"ds_mean", b.ds_mean},
          {"markov_holds", b.markov_holds},
          {"markov_curve", markov},
          {"winter",
           {{"lhs", b.winter_lhs},
            {"mid", b.winter_mid},
            {"rhs", b.winter_rhs},
            {"environment_purity", b.environment_purity},
            {"applicable", b.applicable},
            {"holds", b.winter_holds}}},
          {"eq4_checks", eq4},
          {"le_variance", b.le_variance},
          {"le_variance_holds", b.le_variance_holds},
          {"deficit_error_bar", b.deficit_error_bar}};
}

inline json run_header(const std::string& kind, const std::string& command) {
  return {{"tool", {{"name", "quenchstat"}, {"version", kVersion}}},
          {"run", kind},
          {"command", command},
          {"started_utc", utc_timestamp()}};
}

/// Density CSV for the toy D_S law on a grid that crowds toward the edge
/// singularity.
inline std::string toy_density_csv(const ToyParams& p, int points = 512) {
  const double a = toy_amplitude(p);
  CsvTable t({"x", "density"});
  for (int i = 0; i < points && a > 0.0; ++i) {
    const double x = a * std::sin(0.5 * std::numbers::pi * (i + 0.5) / points);
    t.row({x, toy_ds_density(p, x)});
  }
  return t.str();
}

/// Writes every artifact of a computed quench and returns the manifest.
inline json write_quench(const QuenchResult& r, OutputDir& out, const std::string& command = {}) {
  const auto& q = r.state;
  const auto& e = *q.eigen;

  CsvTable weights({"index", "energy", "weight", "block"});
  for (Eigen::Index n = 0; n < q.p.size(); ++n)
    weights.row({static_cast<double>(n), e.energies[n], q.p[n], static_cast<double>(e.block_of(static_cast<std::size_t>(n)))});
  out.write("spectrum_weights.csv", weights.str());

  json derived;
  auto emit = [&](const std::optional<ObservableResult>& o) {
    if (!o) return;
    out.write(o->name + "_hist.csv", distribution_csv(o->distribution));
    json side = distribution_json(o->distribution, r.plan, q.coverage);
    side["observable"] = o->name;
    side["analytic_mean"] = o->analytic_mean;
    out.write_json(o->name + "_hist.json", side);
    derived[o->name] = {{"moments", to_json(o->distribution.moments)}, {"analytic_mean", o->analytic_mean}};
  };
  emit(r.le);
  emit(r.ds);
  emit(r.mz);

  json overlays = json::object();
  const double p0 = r.block_weight(0), p1 = r.block_weight(1);
  if (r.le && p0 > 0.0 && p1 > 0.0) {
    const auto s = two_mode_support(p0, p1);
    CsvTable t({"x", "density_arcsine", "density_printed"});
    const int m = 512;
    for (int i = 0; i < m; ++i) {
      // cosine spacing concentrates points at both edges
      const double x = 0.5 * (s.x1 + s.x2) - 0.5 * (s.x2 - s.x1) * std::cos(std::numbers::pi * (i + 0.5) / m);
      t.row({x, two_mode_density(p0, p1, x, TwoModeForm::kArcsine), two_mode_density(p0, p1, x, TwoModeForm::kPrinted)});
    }
    out.write("overlay_two_mode.csv", t.str());
    overlays["two_mode"] = {{"file", "overlay_two_mode.csv"}, {"p0", p0},         {"p1", p1},
                            {"x1", s.x1},                     {"x2", s.x2},       {"le_mean_two_mode", s.le_mean},
                            {"std", two_mode_variance(p0, p1)}};
  }
  if (r.truncated_le) {
    out.write("overlay_truncated_le.csv", distribution_csv(*r.truncated_le));
    overlays["truncated_le"] = {{"file", "overlay_truncated_le.csv"},
                                {"n_max", r.config.nmax},
                                {"ecdf_sup_distance_to_full", r.truncated_sup_distance},
                                {"moments", to_json(r.truncated_le->moments)}};
  }
  if (r.ds && p0 > 0.0 && p1 > 0.0) {
    const ToyParams tp{p0, p1, 1.0, 0.0};
    out.write("overlay_toy_ds.csv", toy_density_csv(tp));
    overlays["toy_ds"] = {{"file", "overlay_toy_ds.csv"}, {"p1", p0}, {"p2", p1}, {"edge", toy_amplitude(tp)},
                          {"mean", toy_ds_mean(tp)}};
  }
  if (r.bounds) out.write_json("bounds.json", to_json(*r.bounds));

  std::size_t degenerate_blocks = 0;
  for (std::size_t b = 0; b < e.n_blocks(); ++b) degenerate_blocks += e.block_size(b) > 1;
  json per_sector = json::array();
  for (const auto& s : r.initial.per_sector)
    per_sector.push_back({{"sz_total", s.sz_total}, {"dim", s.dim}, {"energy", s.energy}, {"method", to_string(s.method)}});

  json m = run_header("quench", command);
  m["parameters"] = {{"pre", to_json(r.spec.pre)},
                     {"post", to_json(r.spec.post)},
                     {"samples", r.config.samples},
                     {"seed", r.config.seed},
                     {"nmax", r.config.nmax},
                     {"levels_requested", r.config.levels},
                     {"solver", to_string(r.config.solver)},
                     {"renormalize_truncation", r.config.renormalize},
                     {"mode_tail", r.config.mode_tail},
                     {"observables", r.config.observables}};
  m["plan"] = to_json(r.plan);
  m["initial_state"] = {{"sz_total", r.initial.sz_total},
                        {"energy", r.initial.energy},
                        {"degenerate", r.initial.degenerate},
                        {"per_sector", per_sector}};
  m["engine"] = {{"method", to_string(e.method)},
                 {"k", e.size()},
                 {"sector_dim", r.dim},
                 {"n_up", r.n_up},
                 {"coverage", q.coverage},
                 {"coverage_deficit", q.deficit()},
                 {"renormalized", q.renormalized},
                 {"le_mean", q.le_mean},
                 {"level_purity", q.level_purity},
                 {"d_eff", q.d_eff()},
                 {"n_blocks", e.n_blocks()},
                 {"degenerate_blocks", degenerate_blocks},
                 {"degeneracy_tol", e.degeneracy_tol},
                 {"max_residual", e.max_residual},
                 {"matvecs", e.matvecs},
                 {"retained_levels", r.modes.levels.size()},
                 {"retained_blocks", r.modes.blocks.size()},
                 {"discarded_weight", r.modes.discarded},
                 {"cache", {{"enabled", !r.config.cache_dir.empty()}, {"hit", r.solve.cache_hit}, {"key", r.solve.cache_key}}},
                 {"solve_seconds", r.solve.seconds}};
  derived["identity_quench"] = r.identity;
  derived["ground_block_weight"] = r.ground_block_weight();
  derived["largest_block_weights"] = {p0, p1};
  derived["p_levels"] = json::array();
  for (Eigen::Index n = 0; n < std::min<Eigen::Index>(q.p.size(), 5); ++n) derived["p_levels"].push_back(q.p[n]);
  if (r.ds) derived["ds_mean"] = r.ds->distribution.moments.mean;
  m["derived"] = derived;
  m["overlays"] = overlays;
  if (r.bounds) m["bounds"] = to_json(*r.bounds);
  m["files"] = out.files();
  m["wall_seconds"] = r.seconds;
  out.write_json("manifest.json", m);
  return m;
}

struct SpectrumConfig {
  int n = 16;
  int ns = 4;
  int offset = 0;
  double j1 = 1.0;
  std::vector<double> j2{0.0, 0.5, 1.0};
  std::vector<double> h_grid{0.0};
  std::size_t levels = 5;
  Solver solver = Solver::kAuto;
  std::uint64_t seed = 42;
};

inline std::string spectrum_file_name(double j2) { return "spectrum_j2_" + format_double(j2) + ".csv"; }

inline json run_spectrum(const SpectrumConfig& c, OutputDir& out, const std::string& command = {}) {
  if (c.j2.empty()) throw ParameterError("no J2 values given");
  if (c.levels < 1) throw ParameterError("levels must be >= 1");
  Stopwatch sw;
  json tables = json::array();
  for (double j2 : c.j2) {
    ModelParams p;
    p.n_sites = c.n;
    p.j1 = c.j1;
    p.j2 = j2;
    p.n_subsystem = c.ns;
    p.subsystem_offset = c.offset;
    const auto rows = spectrum_scan(p, c.h_grid, c.levels, c.solver, c.seed);
    std::vector<std::string> header{"h"};
    for (std::size_t i = 0; i < c.levels; ++i) header.push_back("E" + std::to_string(i));
    CsvTable t(header);
    for (const auto& row : rows) {
      std::vector<double> v{row.h};
      v.insert(v.end(), row.levels.begin(), row.levels.end());
      v.resize(header.size(), std::nan(""));
      t.row(v);
    }
    out.write(spectrum_file_name(j2), t.str());
    tables.push_back({{"j2", j2}, {"file", spectrum_file_name(j2)}});
  }
  json m = run_header("spectrum", command);
  m["parameters"] = {{"n_sites", c.n}, {"n_subsystem", c.ns}, {"subsystem_offset", c.offset}, {"j1", c.j1},
                     {"j2", c.j2},     {"h_grid", c.h_grid}, {"levels", c.levels},         {"solver", to_string(c.solver)},
                     {"seed", c.seed}};
  m["tables"] = tables;
  m["files"] = out.files();
  m["wall_seconds"] = sw.seconds();
  out.write_json("manifest.json", m);
  return m;
}

struct ToyConfig {
  ToyParams params{0.86, 0.13, 1.0, 0.0};
  std::size_t samples = kDefaultSamples;
  std::uint64_t seed = 42;
};

struct ToyResult {
  SamplingPlan plan;
  std::vector<double> series;
  Distribution distribution;
  double ecdf_sup_distance = 0.0;
};

inline ToyResult compute_toy(const ToyConfig& c) {
  validate(c.params);
  if (c.samples < 2) throw ParameterError("need at least 2 samples");
  ToyResult r;
  r.plan.n_samples = c.samples;
  r.plan.seed = c.seed;
  r.plan.delta_min = std::abs(c.params.omega);
  r.plan.t_max = kWindowFactor * 2.0 * std::numbers::pi / (r.plan.delta_min > 0.0 ? r.plan.delta_min : 1.0);
  r.series = sample_series([&](double t) { return toy_ds(c.params, t); }, r.plan);
  r.distribution = histogram(r.series);
  if (toy_amplitude(c.params) > 0.0)
    r.ecdf_sup_distance = ecdf_sup_distance(r.distribution, [&](double x) { return toy_ds_cdf(c.params, x); });
  return r;
}

inline json run_toy(const ToyConfig& c, OutputDir& out, const std::string& command = {}) {
  Stopwatch sw;
  const auto r = compute_toy(c);
  out.write("toy_ds_hist.csv", distribution_csv(r.distribution));
  const double a = toy_amplitude(c.params);
  out.write("toy_ds_density.csv", toy_density_csv(c.params));
  json side = distribution_json(r.distribution, r.plan, c.params.p1 + c.params.p2);
  side["edge"] = a;
  side["analytic_mean"] = toy_ds_mean(c.params);
  side["ecdf_sup_distance"] = r.ecdf_sup_distance;
  out.write_json("toy_ds_hist.json", side);

  json m = run_header("toy", command);
  m["parameters"] = {{"p1", c.params.p1}, {"p2", c.params.p2}, {"omega", c.params.omega},
                     {"phi", c.params.phi}, {"samples", c.samples}, {"seed", c.seed}};
  m["plan"] = to_json(r.plan);
  m["derived"] = {{"edge", a},
                  {"analytic_mean", toy_ds_mean(c.params)},
                  {"moments", to_json(r.distribution.moments)},
                  {"ecdf_sup_distance", r.ecdf_sup_distance}};
  m["files"] = out.files();
  m["wall_seconds"] = sw.seconds();
  out.write_json("manifest.json", m);
  return m;
}

}  // namespace quenchstat
