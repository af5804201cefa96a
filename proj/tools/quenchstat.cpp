#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "quenchstat/backend.hpp"
#include "quenchstat/pipeline.hpp"

namespace qs = quenchstat;

namespace {

constexpr int kExitParameter = 2;
constexpr int kExitNumerical = 3;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// `key = value` lines as `--key=value` tokens; blank lines and lines starting
/// with '#' or ';' are ignored.
std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw qs::ParameterError("cannot read config file " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  for (int no = 1; std::getline(in, line); ++no) {
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw qs::ParameterError(path + ":" + std::to_string(no) + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty() || key == "config") throw qs::ParameterError(path + ":" + std::to_string(no) + ": invalid key");
    out.emplace_back(key, value);
  }
  return out;
}

std::string flag_name(const std::string& token) {
  if (token.rfind("--", 0) != 0) return {};
  return token.substr(2, token.find('=') - 2);
}

/// Splices config-file entries in after the subcommand name. Keys that also
/// appear on the command line are taken from the command line.
std::vector<std::string> expand_config(const std::vector<std::string>& args, const std::set<std::string>& subcommands) {
  std::vector<std::string> rest;
  std::string config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw qs::ParameterError("--config needs a file name");
      config = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config.empty()) return rest;
  std::set<std::string> given;
  for (const auto& a : rest)
    if (auto n = flag_name(a); !n.empty()) given.insert(n);
  std::vector<std::string> injected;
  for (const auto& [k, v] : read_config(config))
    if (!given.count(k)) injected.push_back("--" + k + "=" + v);
  auto at = std::find_if(rest.begin(), rest.end(), [&](const std::string& a) { return subcommands.count(a) > 0; });
  if (at == rest.end()) throw qs::ParameterError("--config needs a subcommand");
  rest.insert(at + 1, injected.begin(), injected.end());
  return rest;
}

std::string join(const std::vector<std::string>& args) {
  std::string s = "quenchstat";
  for (const auto& a : args) s += " " + a;
  return s;
}

std::string brief(double x) {
  std::ostringstream s;
  s << x;
  return s.str();
}

void log(const std::string& msg) { std::cerr << "[quenchstat] " << msg << std::endl; }

const std::map<std::string, qs::Solver> kSolverNames{
    {"auto", qs::Solver::kAuto}, {"dense", qs::Solver::kDense}, {"iterative", qs::Solver::kIterative}};

}  // namespace

int main(int argc, char** argv) {
  qs::ensure_working_backend(argv);

  CLI::App app{"Exact diagonalization and statistics of local quenches on J1-J2 Heisenberg rings", "quenchstat"};
  app.set_version_flag("--version", qs::kVersion);
  app.require_subcommand(1);
  std::string config_placeholder;

  qs::QuenchConfig qc;
  std::string quench_out = "quench_out";
  auto* quench = app.add_subcommand("quench", "Quench the field on the subsystem and sample the dynamics");
  quench->add_option("--n", qc.n, "Ring length N")->capture_default_str();
  quench->add_option("--ns", qc.ns, "Subsystem size N_S")->capture_default_str();
  quench->add_option("--offset", qc.offset, "First subsystem site")->capture_default_str();
  quench->add_option("--j1", qc.j1, "Nearest-neighbour coupling")->capture_default_str();
  quench->add_option("--j2", qc.j2, "Next-nearest-neighbour coupling")->capture_default_str();
  quench->add_option("--hi", qc.hi, "Initial field on the subsystem")->capture_default_str();
  quench->add_option("--hf", qc.hf, "Field during the evolution")->capture_default_str();
  quench->add_option("--levels", qc.levels, "Post-quench eigenpairs to compute (0: whole sector)")->capture_default_str();
  quench->add_option("--samples", qc.samples, "Sampled times")->capture_default_str();
  quench->add_option("--seed", qc.seed, "Sampling seed")->capture_default_str();
  quench->add_option("--nmax", qc.nmax, "Modes kept in the truncated echo overlay")->capture_default_str();
  quench->add_option("--solver", qc.solver, "Eigensolver")
      ->transform(CLI::CheckedTransformer(kSolverNames, CLI::ignore_case))
      ->default_str("auto");
  quench->add_option("--mode-tail", qc.mode_tail, "Total weight of the smallest blocks dropped from time series")
      ->capture_default_str();
  quench->add_option("--observables", qc.observables, "Subset of loschmidt,trace_distance,magnetization")
      ->delimiter(',')
      ->default_str("loschmidt,trace_distance,magnetization");
  quench->add_flag("--renormalize-truncation", qc.renormalize, "Rescale an incomplete expansion instead of failing");
  quench->add_option("--cache", qc.cache_dir, "Eigendata cache directory");
  quench->add_option("--out", quench_out, "Output directory")->capture_default_str();
  quench->add_option("--config", config_placeholder, "File of 'key = value' lines using the flag names");

  qs::SpectrumConfig sc;
  std::string h_grid = "0:4:0.05";
  std::string spectrum_out = "spectrum_out";
  auto* spectrum = app.add_subcommand("spectrum", "Lowest levels as a function of the subsystem field");
  spectrum->add_option("--n", sc.n, "Ring length N")->capture_default_str();
  spectrum->add_option("--ns", sc.ns, "Subsystem size N_S")->capture_default_str();
  spectrum->add_option("--offset", sc.offset, "First subsystem site")->capture_default_str();
  spectrum->add_option("--j1", sc.j1, "Nearest-neighbour coupling")->capture_default_str();
  spectrum->add_option("--j2", sc.j2, "Comma-separated J2 values, one CSV each")->delimiter(',')->default_str("0,0.5,1");
  spectrum->add_option("--h-grid", h_grid, "Field grid lo:hi:step or a single value")->capture_default_str();
  spectrum->add_option("--levels", sc.levels, "Levels per field value")->capture_default_str();
  spectrum->add_option("--solver", sc.solver, "Eigensolver")
      ->transform(CLI::CheckedTransformer(kSolverNames, CLI::ignore_case))
      ->default_str("auto");
  spectrum->add_option("--seed", sc.seed, "Lanczos start-vector seed")->capture_default_str();
  spectrum->add_option("--out", spectrum_out, "Output directory")->capture_default_str();
  spectrum->add_option("--config", config_placeholder, "File of 'key = value' lines using the flag names");

  qs::ToyConfig tc;
  std::string toy_out = "toy_out";
  auto* toy = app.add_subcommand("toy", "Two-level model of the subsystem trace distance");
  toy->add_option("--p1", tc.params.p1, "Weight of the first eigenstate")->capture_default_str();
  toy->add_option("--p2", tc.params.p2, "Weight of the second eigenstate")->capture_default_str();
  toy->add_option("--omega", tc.params.omega, "Level spacing")->capture_default_str();
  toy->add_option("--phi", tc.params.phi, "Relative phase")->capture_default_str();
  toy->add_option("--samples", tc.samples, "Sampled times")->capture_default_str();
  toy->add_option("--seed", tc.seed, "Sampling seed")->capture_default_str();
  toy->add_option("--out", toy_out, "Output directory")->capture_default_str();
  toy->add_option("--config", config_placeholder, "File of 'key = value' lines using the flag names");

  const std::vector<std::string> raw(argv + 1, argv + argc);
  try {
    auto args = expand_config(raw, {"quench", "spectrum", "toy"});
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitParameter;
  } catch (const qs::ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParameter;
  }

  const std::string command = join(raw);
  try {
    if (*quench) {
      log("quench N=" + std::to_string(qc.n) + " N_S=" + std::to_string(qc.ns) + " J2=" + brief(qc.j2) + " h: " + brief(qc.hi) +
          " -> " + brief(qc.hf));
      qs::validate(qc);
      const auto r = qs::compute_quench(qc);
      qs::OutputDir out(quench_out);
      const auto m = qs::write_quench(r, out, command);
      std::cout << "manifest: " << (out.path() / "manifest.json").string() << "\n"
                << "initial sector S^z_tot = " << r.initial.sz_total << ", post-quench method "
                << qs::to_string(r.state.eigen->method) << ", k = " << r.state.size() << " of " << r.dim << "\n"
                << "coverage sum p_n = " << qs::format_double(r.state.coverage)
                << ", ground block weight = " << qs::format_double(r.ground_block_weight())
                << ", mean echo = " << qs::format_double(r.state.le_mean) << "\n";
      if (r.ds) std::cout << "mean D_S = " << qs::format_double(r.ds->distribution.moments.mean) << "\n";
      if (r.identity) std::cout << "identity quench: h_i = h_f\n";
      log("done in " + brief(r.seconds) + " s");
    } else if (*spectrum) {
      sc.h_grid = qs::parse_grid(h_grid);
      log("spectrum N=" + std::to_string(sc.n) + " over " + std::to_string(sc.h_grid.size()) + " field values");
      qs::OutputDir out(spectrum_out);
      const auto m = qs::run_spectrum(sc, out, command);
      std::cout << "manifest: " << (out.path() / "manifest.json").string() << "\n";
      for (const auto& t : m["tables"]) std::cout << t["file"].get<std::string>() << "\n";
    } else if (*toy) {
      qs::OutputDir out(toy_out);
      const auto m = qs::run_toy(tc, out, command);
      std::cout << "manifest: " << (out.path() / "manifest.json").string() << "\n"
                << "edge = " << qs::format_double(m["derived"]["edge"].get<double>())
                << ", ECDF sup-distance = " << qs::format_double(m["derived"]["ecdf_sup_distance"].get<double>())
                << "\n";
    }
  } catch (const qs::ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return kExitParameter;
  } catch (const qs::ResourceError& e) {
    std::cerr << "parameter error: " << e.what() << " (request fewer eigenpairs with --levels)\n";
    return kExitParameter;
  } catch (const qs::TruncationError& e) {
    std::cerr << "coverage failure: " << e.what()
              << " (increase --levels or pass --renormalize-truncation)\n";
    return kExitNumerical;
  } catch (const qs::ConvergenceError& e) {
    std::cerr << "convergence failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const qs::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
