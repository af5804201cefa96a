#pragma once

// CSV and JSON output with content hashes, and the on-disk eigendata cache.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unistd.h>
#include <vector>

#include "quenchstat/errors.hpp"
#include "quenchstat/operator.hpp"
#include "quenchstat/spectral.hpp"
#include "quenchstat/statistics.hpp"

namespace quenchstat {

using json = nlohmann::ordered_json;

/// Shortest-safe decimal form with 17 significant digits (round-trip exact).
inline std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ParameterError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary and renames it into place.
inline void write_file_atomic(const std::filesystem::path& p, std::string_view content) {
  const auto tmp = p.parent_path() / (p.filename().string() + ".tmp." + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ParameterError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ParameterError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

/// Comma-separated table with a header row.
class CsvTable {
 public:
  explicit CsvTable(const std::vector<std::string>& header) : columns_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) body_ += ',';
      body_ += header[i];
    }
    body_ += '\n';
  }

  void row(std::initializer_list<double> values) { row(std::vector<double>(values)); }

  void row(const std::vector<double>& values) {
    if (values.size() != columns_) throw std::logic_error("CSV row has the wrong number of columns");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) body_ += ',';
      body_ += format_double(values[i]);
    }
    body_ += '\n';
  }

  const std::string& str() const noexcept { return body_; }

 private:
  std::size_t columns_;
  std::string body_;
};

/// Output directory that records the hash and size of every file it writes.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw ParameterError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  const std::filesystem::path& path() const noexcept { return dir_; }

  void write(const std::string& name, const std::string& content) {
    write_file_atomic(dir_ / name, content);
    files_.push_back({{"path", name}, {"sha256", sha256_hex(content)}, {"bytes", content.size()}});
  }

  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  const json& files() const noexcept { return files_; }

 private:
  std::filesystem::path dir_;
  json files_ = json::array();
};

inline json to_json(const Moments& m) {
  auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  return {{"n", m.n},
          {"mean", m.mean},
          {"variance", m.variance},
          {"std", std::sqrt(m.variance)},
          {"skewness", m.skewness},
          {"excess_kurtosis", m.excess_kurtosis},
          {"min", m.min},
          {"max", m.max},
          {"signal_to_noise", num(m.signal_to_noise)}};
}

inline json to_json(const SamplingPlan& p) {
  return {{"t_max", p.t_max},
          {"n_samples", p.n_samples},
          {"seed", p.seed},
          {"generator", p.generator},
          {"delta_min", p.delta_min}};
}

inline json to_json(const ModelParams& p) {
  return {{"n_sites", p.n_sites}, {"j1", p.j1},           {"j2", p.j2},
          {"h_s", p.h_s},         {"n_subsystem", p.n_subsystem}, {"subsystem_offset", p.subsystem_offset}};
}

/// Histogram as bin_left, bin_right, density, count.
inline std::string distribution_csv(const Distribution& d) {
  CsvTable t({"bin_left", "bin_right", "density", "count"});
  for (std::size_t i = 0; i < d.n_bins(); ++i)
    t.row({d.edges[i], d.edges[i + 1], d.density[i], static_cast<double>(d.counts[i])});
  return t.str();
}

inline json distribution_json(const Distribution& d, const SamplingPlan& plan, double coverage) {
  return {{"moments", to_json(d.moments)}, {"n_bins", d.n_bins()}, {"plan", to_json(plan)},
          {"seed", plan.seed},            {"t_max", plan.t_max},  {"coverage", coverage}};
}

/// Binary eigendata store keyed by a hash of the Hamiltonian and solver
/// request. A missing, unreadable or mismatched file is a cache miss.
class EigenCache {
 public:
  explicit EigenCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  static std::string describe(const ModelParams& p, int n_up, Solver solver, std::size_t k) {
    return "quenchstat-eigen-v1;N=" + std::to_string(p.n_sites) + ";n_up=" + std::to_string(n_up) +
           ";j1=" + format_double(p.j1) + ";j2=" + format_double(p.j2) + ";h=" + format_double(p.h_s) +
           ";ns=" + std::to_string(p.n_subsystem) + ";offset=" + std::to_string(p.subsystem_offset) +
           ";solver=" + to_string(solver) + ";k=" + std::to_string(k);
  }

  static std::string key(const std::string& description) { return sha256_hex(description); }

  std::filesystem::path file(const std::string& description) const { return dir_ / (key(description) + ".eig"); }

  std::optional<EigenData> load(const std::string& description) const {
    std::ifstream in(file(description), std::ios::binary);
    if (!in) return std::nullopt;
    std::string magic(kMagic.size(), '\0');
    in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
    if (!in || magic != kMagic) return std::nullopt;
    const auto desc_len = get<std::uint64_t>(in);
    if (!in || desc_len > 4096) return std::nullopt;
    std::string desc(desc_len, '\0');
    in.read(desc.data(), static_cast<std::streamsize>(desc_len));
    if (!in || desc != description) return std::nullopt;
    EigenData e;
    const auto rows = get<std::uint64_t>(in), cols = get<std::uint64_t>(in), nblocks = get<std::uint64_t>(in);
    const auto method = get<std::uint8_t>(in);
    e.degeneracy_tol = get<double>(in);
    e.max_residual = get<double>(in);
    e.matvecs = get<std::uint64_t>(in);
    if (!in || cols > rows || rows > (std::uint64_t{1} << 24) || nblocks > cols + 1) return std::nullopt;
    e.method = method ? SolverMethod::kIterative : SolverMethod::kDense;
    e.energies.resize(static_cast<Eigen::Index>(cols));
    e.vectors.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    e.block_starts.resize(nblocks);
    in.read(reinterpret_cast<char*>(e.energies.data()), static_cast<std::streamsize>(cols * sizeof(double)));
    in.read(reinterpret_cast<char*>(e.vectors.data()), static_cast<std::streamsize>(rows * cols * sizeof(double)));
    for (auto& b : e.block_starts) b = static_cast<std::size_t>(get<std::uint64_t>(in));
    if (!in || in.peek() != std::char_traits<char>::eof()) return std::nullopt;
    return e;
  }

  void store(const std::string& description, const EigenData& e) const {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw ParameterError("cannot create cache directory " + dir_.string());
    const auto target = file(description);
    const auto tmp = target.string() + ".tmp." + std::to_string(::getpid());
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw ParameterError("cannot write cache file " + tmp);
      out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
      put<std::uint64_t>(out, description.size());
      out.write(description.data(), static_cast<std::streamsize>(description.size()));
      put<std::uint64_t>(out, static_cast<std::uint64_t>(e.vectors.rows()));
      put<std::uint64_t>(out, static_cast<std::uint64_t>(e.vectors.cols()));
      put<std::uint64_t>(out, e.block_starts.size());
      put<std::uint8_t>(out, e.method == SolverMethod::kIterative ? 1 : 0);
      put<double>(out, e.degeneracy_tol);
      put<double>(out, e.max_residual);
      put<std::uint64_t>(out, e.matvecs);
      out.write(reinterpret_cast<const char*>(e.energies.data()),
                static_cast<std::streamsize>(e.energies.size() * sizeof(double)));
      out.write(reinterpret_cast<const char*>(e.vectors.data()),
                static_cast<std::streamsize>(e.vectors.size() * sizeof(double)));
      for (auto b : e.block_starts) put<std::uint64_t>(out, b);
      if (!out) throw ParameterError("write failed for cache file " + tmp);
    }
    std::filesystem::rename(tmp, target);
  }

 private:
  static constexpr std::string_view kMagic = "QSEIGv1\n";

  template <typename T>
  static T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  template <typename T>
  static void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }

  std::filesystem::path dir_;
};

}  // namespace quenchstat
