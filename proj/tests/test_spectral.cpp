#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "quenchstat/spectral.hpp"

using namespace quenchstat;

namespace {

ModelParams ring(int n, double j2, double h, int ns = 4, int offset = 0) {
  ModelParams p;
  p.n_sites = n;
  p.j2 = j2;
  p.h_s = h;
  p.n_subsystem = ns;
  p.subsystem_offset = offset;
  return p;
}

void expect_invariants(const SparseOperator& op, const EigenData& e) {
  const auto k = static_cast<Eigen::Index>(e.size());
  const Eigen::MatrixXd gram = e.vectors.transpose() * e.vectors;
  EXPECT_LT((gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff(), 1e-10);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double r = (apply(op, Eigen::VectorXd(e.vectors.col(i))) - e.energies[i] * e.vectors.col(i)).norm();
    EXPECT_LE(r, 1e-8 * std::max(1.0, std::abs(e.energies[i])));
    if (i > 0) EXPECT_LE(e.energies[i - 1], e.energies[i]);
  }
  EXPECT_LE(e.max_residual, 1e-8);
  // blocks partition the levels and respect the tolerance
  ASSERT_EQ(e.block_starts.front(), 0u);
  ASSERT_EQ(e.block_starts.back(), e.size());
  for (std::size_t b = 0; b < e.n_blocks(); ++b) {
    const auto lo = static_cast<Eigen::Index>(e.block_begin(b));
    const auto hi = static_cast<Eigen::Index>(e.block_end(b)) - 1;
    EXPECT_LE(e.energies[hi] - e.energies[lo], e.degeneracy_tol);
    if (b + 1 < e.n_blocks()) EXPECT_GT(e.energies[hi + 1] - e.energies[lo], e.degeneracy_tol);
  }
}

/// Projector onto the span of the first `count` levels.
Eigen::MatrixXd projector(const EigenData& e, std::size_t count) {
  const auto v = e.vectors.leftCols(static_cast<Eigen::Index>(count));
  return v * v.transpose();
}

}  // namespace

TEST(Dense, DiagonalOperator) {
  Eigen::VectorXd d(3);
  d << 3, 1, 2;
  const auto e = dense_diagonalize(diagonal_operator(d));
  EXPECT_EQ(e.energies, Eigen::Vector3d(1, 2, 3));
  const Eigen::MatrixXd perm = e.vectors.cwiseAbs();
  EXPECT_EQ(perm(1, 0), 1.0);
  EXPECT_EQ(perm(2, 1), 1.0);
  EXPECT_EQ(perm(0, 2), 1.0);
  EXPECT_EQ(e.method, SolverMethod::kDense);
}

TEST(Dense, MajumdarGhoshDegeneracy) {
  const auto op = build_hamiltonian(ring(8, 0.5, 0.0), enumerate_sector(8, 4));
  const auto e = dense_diagonalize(op);
  EXPECT_LE(e.energies[1] - e.energies[0], 1e-10);
  EXPECT_NEAR(e.energies[0], -3.0, 1e-10);
  EXPECT_EQ(e.block_size(0), 2u);
  expect_invariants(op, e);
}

TEST(Dense, MatchesFullSpaceOracle) {
  const int n = 10;
  const auto p = ring(n, 0.0, 0.0);
  const auto op = build_hamiltonian(p, enumerate_sector(n, 5));
  const auto e = dense_diagonalize(op);
  expect_invariants(op, e);

  const auto full = oracle::full_hamiltonian(n, 1.0, 0.0, 0.0, {});
  const Eigen::VectorXd sector_ref =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(oracle::restrict(full, oracle::sector_indices(n, 5)),
                                                     Eigen::EigenvaluesOnly)
          .eigenvalues();
  EXPECT_LT((e.energies - sector_ref).cwiseAbs().maxCoeff(), 1e-10);

  // every sector level is a level of the full 2^N problem
  const Eigen::VectorXd all = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(full, Eigen::EigenvaluesOnly).eigenvalues();
  for (Eigen::Index i = 0; i < e.energies.size(); ++i)
    EXPECT_LT((all.array() - e.energies[i]).abs().minCoeff(), 1e-10);
}

TEST(Dense, ResourceGuard) {
  const auto op = build_hamiltonian(ring(8, 0.0, 0.0), enumerate_sector(8, 4));
  EXPECT_THROW(dense_diagonalize(op, 10), ResourceError);
}

TEST(Lapack, BackendSelfTestAndProbe) {
  EXPECT_TRUE(lapack::backend_self_test());
  Eigen::MatrixXd q = Eigen::MatrixXd::Identity(50, 10);
  EXPECT_LT(lapack::orthonormality_probe(q), 1e-15);
  q(3, 2) = 0.5;
  EXPECT_GT(lapack::orthonormality_probe(q), 1e-3);
}

TEST(Lapack, PartialSpectrum) {
  Eigen::VectorXd d(6);
  d << 4, -1, 3, 0, 2, 1;
  Eigen::MatrixXd a = d.asDiagonal();
  const auto e = lapack::lowest_eigenpairs(a, 3);
  ASSERT_EQ(e.values.size(), 3);
  EXPECT_EQ(e.values, Eigen::Vector3d(-1, 0, 1));
  EXPECT_EQ(e.vectors.cols(), 3);
}

TEST(Lanczos, SmallDiagonal) {
  Eigen::VectorXd d(3);
  d << 5, -2, 7;
  const auto e = lanczos_lowest_k(diagonal_operator(d), 1, 7);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_NEAR(e.energies[0], -2.0, 1e-12);
  EXPECT_EQ(e.method, SolverMethod::kIterative);
}

TEST(Lanczos, FullSectorMatchesDense) {
  for (double j2 : {0.0, 0.5, 1.0}) {
    for (double h : {0.0, 0.2}) {
      const auto op = build_hamiltonian(ring(8, j2, h), enumerate_sector(8, 4));
      const auto dense = dense_diagonalize(op);
      const auto lz = lanczos_lowest_k(op, op.dim(), 3);
      ASSERT_EQ(lz.size(), op.dim());
      EXPECT_LT((lz.energies - dense.energies).cwiseAbs().maxCoeff(), 1e-8) << "j2=" << j2 << " h=" << h;
      expect_invariants(op, lz);
    }
  }
}

TEST(Lanczos, LowestLevelsOfDegenerateSpectra) {
  // zero field: translation and reflection produce two-fold levels
  for (int n : {10, 12}) {
    for (double j2 : {0.0, 0.5}) {
      const auto op = build_hamiltonian(ring(n, j2, 0.0), enumerate_sector(n, n / 2));
      const auto dense = dense_diagonalize(op);
      const std::size_t k = 30;
      const auto lz = lanczos_lowest_k(op, k, 5);
      ASSERT_EQ(lz.size(), k);
      EXPECT_LT((lz.energies - dense.energies.head(k)).cwiseAbs().maxCoeff(), 1e-8) << "n=" << n << " j2=" << j2;
      expect_invariants(op, lz);
      // projectors onto complete degenerate blocks agree across solvers, whatever the gauge
      const std::size_t closed = lz.block_begin(lz.n_blocks() - 1);
      EXPECT_LT((projector(lz, closed) - projector(dense, closed)).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(Lanczos, DeterministicForFixedSeed) {
  const auto op = build_hamiltonian(ring(10, 1.0, 0.3), enumerate_sector(10, 5));
  const auto a = lanczos_lowest_k(op, 6, 42);
  const auto b = lanczos_lowest_k(op, 6, 42);
  EXPECT_EQ(a.energies, b.energies);
  EXPECT_EQ(a.vectors, b.vectors);
}

TEST(Lanczos, RejectsBadK) {
  const auto op = build_hamiltonian(ring(6, 0.0, 0.0, 2), enumerate_sector(6, 3));
  EXPECT_THROW(lanczos_lowest_k(op, 0, 1), ParameterError);
  EXPECT_THROW(lanczos_lowest_k(op, op.dim() + 1, 1), ParameterError);
}

TEST(Lanczos, ReportsNonConvergence) {
  const auto op = build_hamiltonian(ring(12, 0.5, 0.1), enumerate_sector(12, 6));
  LanczosOptions opt;
  opt.max_applications = 8;
  try {
    lanczos_lowest_k(op, 4, 1, opt);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_FALSE(e.residuals().empty());
  }
}

TEST(GroundState, HeisenbergFourSites) {
  const auto gs = ground_state_search(ring(4, 0.0, 0.0, 2), {0, 1, 2});
  EXPECT_EQ(gs.sz_total, 0.0);
  EXPECT_NEAR(gs.energy, -2.0, 1e-12);
  EXPECT_FALSE(gs.degenerate);
  EXPECT_EQ(gs.per_sector.size(), 3u);
}

TEST(GroundState, SingleSectorPassthrough) {
  const auto p = ring(8, 1.0, 0.2);
  const auto gs = ground_state_search(p, {0});
  const auto e = dense_diagonalize(build_hamiltonian(p, enumerate_sector(8, 4)));
  EXPECT_NEAR(gs.energy, e.energies[0], 1e-12);
  EXPECT_NEAR(std::abs(gs.vector.dot(e.vectors.col(0))), 1.0, 1e-12);
}

TEST(GroundState, FlagsDegeneracy) {
  const auto gs = ground_state_search(ring(8, 0.5, 0.0), {0, 1});
  EXPECT_EQ(gs.sz_total, 0.0);
  EXPECT_TRUE(gs.degenerate);
  // large field polarizes the subsystem and moves the ground state out of S^z = 0
  const auto polarized = ground_state_search(ring(8, 0.0, 4.0), {0, 1, 2, 3});
  EXPECT_GT(polarized.sz_total, 0.0);
}

TEST(GroundState, SmallFieldStaysInZeroSector) {
  const auto gs = ground_state_search(ring(12, 1.0, 0.2), {0, 1, 2, 3});
  EXPECT_EQ(gs.sz_total, 0.0);
}

TEST(SpectrumScan, MajumdarGhoshAndTranslationInvariance) {
  const auto rows = spectrum_scan(ring(8, 0.5, 0.0), {0.0}, 5);
  ASSERT_EQ(rows.size(), 1u);
  ASSERT_EQ(rows[0].levels.size(), 5u);
  EXPECT_LE(rows[0].levels[1] - rows[0].levels[0], 1e-10);

  const auto shifted = spectrum_scan(ring(8, 0.5, 0.0, 4, 3), {0.0}, 5);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(rows[0].levels[i], shifted[0].levels[i], 1e-10);
}

TEST(SpectrumScan, ZeemanSlope) {
  const auto rows = spectrum_scan(ring(8, 0.0, 0.0), {3.5, 3.6}, 1);
  const double slope = (rows[1].levels[0] - rows[0].levels[0]) / 0.1;
  EXPECT_NEAR(slope, -2.0, 0.04);
}

TEST(SpectrumScan, Errors) {
  EXPECT_THROW(spectrum_scan(ring(8, 0.0, 0.0), {}, 3), ParameterError);
  EXPECT_THROW(spectrum_scan(ring(8, 0.0, 0.0), {0.0}, 0), ParameterError);
}
