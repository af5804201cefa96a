#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <sstream>

#include "quenchstat/basis.hpp"
#include "quenchstat/io.hpp"
#include "quenchstat/operator.hpp"
#include "quenchstat/spectral.hpp"

using namespace quenchstat;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("quenchstat_test_io_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Io, FormatDoubleRoundTrips) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 10000; ++i) {
    const double x = u(rng) * std::pow(10.0, (i % 41) - 20);
    EXPECT_EQ(std::stod(format_double(x)), x);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(-3.0), "-3");
}

TEST(Io, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Io, CsvTableStructure) {
  CsvTable t({"a", "b", "c"});
  t.row({1.0, 0.25, -2.0});
  t.row(std::vector<double>{3.0, 4.0, 5.5});
  const auto l = lines(t.str());
  ASSERT_EQ(l.size(), 3u);
  EXPECT_EQ(l[0], "a,b,c");
  EXPECT_EQ(l[1], "1,0.25,-2");
  EXPECT_EQ(l[2], "3,4,5.5");
  EXPECT_THROW(t.row({1.0, 2.0}), std::logic_error);
}

TEST(Io, OutputDirRecordsHashes) {
  const auto dir = scratch("out");
  OutputDir out(dir / "nested");
  out.write("x.csv", "h\n1\n");
  out.write_json("y.json", json{{"k", 1}});
  ASSERT_EQ(out.files().size(), 2u);
  for (const auto& f : out.files()) {
    const auto content = read_file(dir / "nested" / f["path"].get<std::string>());
    EXPECT_EQ(f["sha256"].get<std::string>(), sha256_hex(content));
    EXPECT_EQ(f["bytes"].get<std::size_t>(), content.size());
  }
  EXPECT_EQ(json::parse(read_file(dir / "nested" / "y.json"))["k"], 1);
  for (const auto& e : fs::directory_iterator(dir / "nested"))
    EXPECT_EQ(e.path().string().find(".tmp."), std::string::npos);
  fs::remove_all(dir);
}

TEST(Io, MomentsJsonMapsNonFiniteToNull) {
  Moments m;
  m.n = 3;
  m.signal_to_noise = std::numeric_limits<double>::infinity();
  const auto j = to_json(m);
  EXPECT_TRUE(j["signal_to_noise"].is_null());
  EXPECT_EQ(j["n"], 3);
  EXPECT_NO_THROW(json::parse(j.dump()));
}

TEST(Io, DistributionCsvMatchesHistogram) {
  std::vector<double> x;
  for (int i = 0; i < 1000; ++i) x.push_back(std::sin(0.37 * i));
  const auto d = histogram(x, 20);
  const auto l = lines(distribution_csv(d));
  ASSERT_EQ(l.size(), 21u);
  EXPECT_EQ(l[0], "bin_left,bin_right,density,count");
  double total = 0.0;
  for (std::size_t i = 1; i < l.size(); ++i) {
    std::istringstream in(l[i]);
    std::string a, b, c, n;
    std::getline(in, a, ',');
    std::getline(in, b, ',');
    std::getline(in, c, ',');
    std::getline(in, n, ',');
    EXPECT_EQ(std::stod(a), d.edges[i - 1]);
    EXPECT_EQ(std::stod(b), d.edges[i]);
    total += std::stod(c) * (std::stod(b) - std::stod(a));
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Io, EigenCacheRoundTripAndMisses) {
  const auto dir = scratch("cache");
  ModelParams p;
  p.n_sites = 8;
  p.j2 = 0.5;
  p.h_s = 0.3;
  const SectorBasis basis(8, 4);
  const auto e = diagonalize(build_hamiltonian(p, basis), basis.dim(), Solver::kDense);
  const EigenCache cache(dir);
  const auto desc = EigenCache::describe(p, 4, Solver::kDense, basis.dim());
  EXPECT_FALSE(cache.load(desc).has_value());
  cache.store(desc, e);
  const auto back = cache.load(desc);
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(back->energies, e.energies);
  EXPECT_EQ(back->vectors, e.vectors);
  EXPECT_EQ(back->block_starts, e.block_starts);
  EXPECT_EQ(back->method, e.method);
  EXPECT_EQ(back->max_residual, e.max_residual);

  ModelParams shifted = p;
  shifted.subsystem_offset = 2;
  EXPECT_NE(EigenCache::describe(shifted, 4, Solver::kDense, basis.dim()), desc);
  EXPECT_FALSE(cache.load(EigenCache::describe(shifted, 4, Solver::kDense, basis.dim())).has_value());

  // a file whose stored description differs from its name is a miss
  const auto other = EigenCache::describe(shifted, 4, Solver::kDense, basis.dim());
  fs::copy_file(cache.file(desc), cache.file(other));
  EXPECT_FALSE(cache.load(other).has_value());

  // truncation is a miss
  const auto bytes = read_file(cache.file(desc));
  write_file_atomic(cache.file(desc), std::string_view(bytes).substr(0, bytes.size() - 5));
  EXPECT_FALSE(cache.load(desc).has_value());
  fs::remove_all(dir);
}
