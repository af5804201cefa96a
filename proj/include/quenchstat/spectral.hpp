#pragma once

// Eigensolvers (dense MRRR and block Lanczos), degeneracy grouping, ground
// state search over magnetization sectors and field scans of the low spectrum.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "quenchstat/basis.hpp"
#include "quenchstat/errors.hpp"
#include "quenchstat/lapack.hpp"
#include "quenchstat/operator.hpp"

namespace quenchstat {

enum class SolverMethod { kDense, kIterative };

inline const char* to_string(SolverMethod m) { return m == SolverMethod::kDense ? "dense" : "iterative"; }

/// Degenerate levels are grouped when |E_n - E_m| <= this factor times
/// max(1, spectral range of the computed levels).
inline constexpr double kDegeneracyRelTol = 1e-9;
inline constexpr std::size_t kDenseDimGuard = 20000;

struct EigenData {
  Eigen::VectorXd energies;  // ascending
  Eigen::MatrixXd vectors;   // one column per energy, orthonormal
  SolverMethod method = SolverMethod::kDense;
  double degeneracy_tol = 0.0;
  /// block_starts[b] is the first index of block b; a final sentinel equals size().
  std::vector<std::size_t> block_starts;
  double max_residual = 0.0;
  std::size_t matvecs = 0;  // operator applications (iterative solver)

  std::size_t size() const noexcept { return static_cast<std::size_t>(energies.size()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(vectors.rows()); }
  std::size_t n_blocks() const noexcept { return block_starts.empty() ? 0 : block_starts.size() - 1; }
  std::size_t block_begin(std::size_t b) const { return block_starts[b]; }
  std::size_t block_end(std::size_t b) const { return block_starts[b + 1]; }
  std::size_t block_size(std::size_t b) const { return block_end(b) - block_begin(b); }
  /// Block index containing level n.
  std::size_t block_of(std::size_t n) const {
    auto it = std::upper_bound(block_starts.begin(), block_starts.end(), n);
    return static_cast<std::size_t>(it - block_starts.begin()) - 1;
  }
};

/// Partitions sorted energies into blocks: a level joins the current block
/// when it lies within `tol` of the block's first level.
inline std::vector<std::size_t> group_degeneracies(const Eigen::VectorXd& energies, double tol) {
  std::vector<std::size_t> starts;
  const auto n = static_cast<std::size_t>(energies.size());
  if (n == 0) return {0};
  starts.push_back(0);
  for (std::size_t i = 1; i < n; ++i)
    if (energies[static_cast<Eigen::Index>(i)] - energies[static_cast<Eigen::Index>(starts.back())] > tol)
      starts.push_back(i);
  starts.push_back(n);
  return starts;
}

inline double degeneracy_tolerance(const Eigen::VectorXd& energies) {
  if (energies.size() == 0) return kDegeneracyRelTol;
  return kDegeneracyRelTol * std::max(1.0, energies.maxCoeff() - energies.minCoeff());
}

namespace detail {

inline double max_residual(const SparseOperator& op, const Eigen::VectorXd& e, const Eigen::MatrixXd& v) {
  double worst = 0.0;
  constexpr Eigen::Index kChunk = 64;
  for (Eigen::Index c0 = 0; c0 < v.cols(); c0 += kChunk) {
    const Eigen::Index nc = std::min(kChunk, v.cols() - c0);
    Eigen::MatrixXd hv(v.rows(), nc);
    op.apply_into(v.middleCols(c0, nc), hv);
    for (Eigen::Index c = 0; c < nc; ++c) {
      const double r = (hv.col(c) - e[c0 + c] * v.col(c0 + c)).norm() / std::max(1.0, std::abs(e[c0 + c]));
      worst = std::max(worst, r);
    }
  }
  return worst;
}

inline EigenData finish(Eigen::VectorXd energies, Eigen::MatrixXd vectors, SolverMethod method, double residual) {
  EigenData out;
  out.energies = std::move(energies);
  out.vectors = std::move(vectors);
  out.method = method;
  out.degeneracy_tol = degeneracy_tolerance(out.energies);
  out.block_starts = group_degeneracies(out.energies, out.degeneracy_tol);
  out.max_residual = residual;
  return out;
}

}  // namespace detail

/// All eigenpairs by dense diagonalization. Throws ResourceError above the
/// dimension guard.
inline EigenData dense_diagonalize(const SparseOperator& op, std::size_t guard = kDenseDimGuard) {
  if (op.dim() > guard)
    throw ResourceError("dense diagonalization of dimension " + std::to_string(op.dim()) + " exceeds guard " +
                        std::to_string(guard));
  Eigen::MatrixXd a = op.to_dense();
  auto eig = lapack::lowest_eigenpairs(a, 0);
  a.resize(0, 0);
  const double res = detail::max_residual(op, eig.values, eig.vectors);
  return detail::finish(std::move(eig.values), std::move(eig.vectors), SolverMethod::kDense, res);
}

struct LanczosOptions {
  Eigen::Index block_size = 0;  // 0: clamp(k / 32, 4, 16); must cover the largest degeneracy to be resolved
  double tol = 1e-10;           // relative Ritz residual target
  std::size_t max_applications = 0;  // 0: max(10 k, 400)
};

namespace detail {

class BlockLanczos {
 public:
  BlockLanczos(const SparseOperator& op, std::size_t k, std::uint64_t seed, const LanczosOptions& opt)
      : op_(op), n_(static_cast<Eigen::Index>(op.dim())), k_(static_cast<Eigen::Index>(k)), opt_(opt), rng_(seed) {
    cap_ = opt.max_applications ? opt.max_applications : std::max<std::size_t>(10 * k, 400);
    if (opt_.block_size <= 0) opt_.block_size = std::clamp<Eigen::Index>((k_ + 31) / 32, 4, 16);
    const Eigen::Index b = std::min(opt_.block_size, n_);
    const Eigen::Index max_cols = std::min<Eigen::Index>(n_, static_cast<Eigen::Index>(cap_) + b);
    q_.resize(n_, max_cols);
  }

  EigenData run() {
    const Eigen::Index b0 = std::min(opt_.block_size, n_);
    add_random_columns(b0);
    sizes_.push_back(b0);

    Eigen::Index last_check = 0;
    std::vector<double> residuals;
    for (std::size_t j = 0;; ++j) {
      const Eigen::Index start = offset(j);
      const Eigen::Index bj = sizes_[j];
      Eigen::MatrixXd w(n_, bj);
      op_.apply_into(q_.middleCols(start, bj), w);
      applications_ += static_cast<std::size_t>(bj);
      if (j > 0) w.noalias() -= q_.middleCols(offset(j - 1), sizes_[j - 1]) * b_.back().transpose();
      Eigen::MatrixXd a = q_.middleCols(start, bj).transpose() * w;
      a = 0.5 * (a + a.transpose()).eval();
      a_.push_back(a);
      w.noalias() -= q_.middleCols(start, bj) * a;
      m_ = start + bj;
      reorthogonalize(w);
      norm_est_ = std::max(norm_est_, a.norm());

      const bool exhausted = m_ >= n_ || m_ >= q_.cols();
      Eigen::MatrixXd bnext;
      if (!exhausted) {
        const Eigen::Index bn = std::min({bj, n_ - m_, q_.cols() - m_});
        bnext = orthonormalize_into(w.leftCols(bn), w.cols() > bn ? w.rightCols(w.cols() - bn) : Eigen::MatrixXd());
        norm_est_ = std::max(norm_est_, bnext.norm());
      }

      const bool budget_spent = applications_ >= cap_;
      const bool due = m_ >= k_ && (m_ - last_check >= std::max<Eigen::Index>(2 * bj, m_ / 4) || exhausted ||
                                    budget_spent || m_ >= n_);
      if (due) {
        last_check = m_;
        auto ritz = rayleigh_ritz(exhausted ? Eigen::MatrixXd() : bnext);
        residuals = ritz.residuals;
        if (ritz.converged || m_ >= n_) return assemble(ritz);
      }
      if (exhausted)
        throw ConvergenceError("Lanczos basis capacity exhausted before convergence", residuals);
      if (budget_spent)
        throw ConvergenceError("Lanczos did not converge within " + std::to_string(cap_) + " matrix applications",
                               residuals);
      b_.push_back(bnext);
      sizes_.push_back(bnext.rows());
    }
  }

 private:
  struct Ritz {
    Eigen::VectorXd values;
    Eigen::MatrixXd coeffs;
    std::vector<double> residuals;
    bool converged = false;
  };

  Eigen::Index offset(std::size_t j) const {
    Eigen::Index o = 0;
    for (std::size_t i = 0; i < j; ++i) o += sizes_[i];
    return o;
  }

  void reorthogonalize(Eigen::MatrixXd& w) const {
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::MatrixXd proj = q_.leftCols(m_).transpose() * w;
      w.noalias() -= q_.leftCols(m_) * proj;
    }
  }

  Eigen::VectorXd random_vector() {
    std::normal_distribution<double> g;
    Eigen::VectorXd v(n_);
    for (Eigen::Index i = 0; i < n_; ++i) v[i] = g(rng_);
    return v;
  }

  /// Orthonormalizes a random vector against q_[:, :limit]; used for the start
  /// block and to replace deflated directions.
  Eigen::VectorXd fresh_direction(Eigen::Index limit) {
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::VectorXd v = random_vector();
      for (int pass = 0; pass < 2; ++pass) v -= q_.leftCols(limit) * (q_.leftCols(limit).transpose() * v);
      const double nv = v.norm();
      if (nv > 1e-8 * std::sqrt(static_cast<double>(n_))) return v / nv;
    }
    throw ConvergenceError("could not generate a direction orthogonal to the Lanczos basis", {});
  }

  void add_random_columns(Eigen::Index count) {
    for (Eigen::Index c = 0; c < count; ++c) q_.col(c) = fresh_direction(c);
  }

  /// QR of the residual block with deflation; writes the new block at m_ and
  /// returns its coupling matrix B (rows: new columns, cols: previous block).
  Eigen::MatrixXd orthonormalize_into(const Eigen::MatrixXd& w, const Eigen::MatrixXd& dropped) {
    const Eigen::Index bn = w.cols();
    const Eigen::Index prev = bn + dropped.cols();
    Eigen::MatrixXd coupling = Eigen::MatrixXd::Zero(bn, prev);
    const double deflate = 1e-10 * std::max(1.0, norm_est_);
    // Columns beyond the new block size (last partial block) are folded into
    // the kept ones via projection; their remainder lies outside the space.
    Eigen::MatrixXd all(n_, prev);
    all.leftCols(bn) = w;
    if (prev > bn) all.rightCols(prev - bn) = dropped;
    for (Eigen::Index c = 0; c < bn; ++c) {
      Eigen::VectorXd v = all.col(c);
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index i = 0; i < c; ++i) {
          const double r = q_.col(m_ + i).dot(v);
          if (pass == 0) coupling(i, c) = r; else coupling(i, c) += r;
          v -= r * q_.col(m_ + i);
        }
      }
      const double nv = v.norm();
      if (nv > deflate) {
        coupling(c, c) = nv;
        q_.col(m_ + c) = v / nv;
      } else {
        coupling(c, c) = 0.0;
        q_.col(m_ + c) = fresh_direction(m_ + c);
      }
    }
    for (Eigen::Index c = bn; c < prev; ++c)
      for (Eigen::Index i = 0; i < bn; ++i) coupling(i, c) = q_.col(m_ + i).dot(all.col(c));
    return coupling;
  }

  Eigen::MatrixXd projected_matrix() const {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m_, m_);
    Eigen::Index o = 0;
    for (std::size_t j = 0; j < a_.size(); ++j) {
      const Eigen::Index bj = sizes_[j];
      t.block(o, o, bj, bj) = a_[j];
      if (j + 1 < a_.size()) {
        const auto& bl = b_[j];  // couples block j+1 (rows) to block j (cols)
        t.block(o + bj, o, bl.rows(), bl.cols()) = bl;
        t.block(o, o + bj, bl.cols(), bl.rows()) = bl.transpose();
      }
      o += bj;
    }
    return t;
  }

  Ritz rayleigh_ritz(const Eigen::MatrixXd& bnext) {
    Eigen::MatrixXd t = projected_matrix();
    const Eigen::Index want = std::min(k_, m_);
    auto eig = lapack::lowest_eigenpairs(t, want);
    Ritz r;
    r.values = eig.values;
    r.coeffs = eig.vectors;
    r.converged = true;
    const Eigen::Index blast = sizes_.back();
    for (Eigen::Index i = 0; i < r.values.size(); ++i) {
      double res = 0.0;
      if (bnext.size() > 0) res = (bnext * r.coeffs.col(i).tail(blast)).norm();
      res /= std::max(1.0, std::abs(r.values[i]));
      r.residuals.push_back(res);
      if (res > opt_.tol) r.converged = false;
    }
    if (r.values.size() < k_) r.converged = false;
    return r;
  }

  EigenData assemble(const Ritz& r) {
    Eigen::MatrixXd v = q_.leftCols(m_) * r.coeffs;
    const double res = max_residual(op_, r.values, v);
    auto out = finish(r.values, std::move(v), SolverMethod::kIterative, res);
    out.matvecs = applications_;
    return out;
  }

  const SparseOperator& op_;
  Eigen::Index n_;
  Eigen::Index k_;
  LanczosOptions opt_;
  std::mt19937_64 rng_;
  std::size_t cap_ = 0;
  std::size_t applications_ = 0;
  Eigen::MatrixXd q_;
  Eigen::Index m_ = 0;
  double norm_est_ = 0.0;
  std::vector<Eigen::Index> sizes_;
  std::vector<Eigen::MatrixXd> a_;
  std::vector<Eigen::MatrixXd> b_;
};

}  // namespace detail

/// Lowest k eigenpairs by block Lanczos with full reorthogonalization.
/// Deterministic for a fixed seed; retries once from a second seeded start
/// block before reporting non-convergence.
inline EigenData lanczos_lowest_k(const SparseOperator& op, std::size_t k, std::uint64_t seed,
                                  const LanczosOptions& opt = {}) {
  if (k < 1 || k > op.dim())
    throw ParameterError("lanczos_lowest_k: k must lie in [1, dim], got k = " + std::to_string(k));
  try {
    return detail::BlockLanczos(op, k, seed, opt).run();
  } catch (const ConvergenceError&) {
    return detail::BlockLanczos(op, k, seed ^ 0x9e3779b97f4a7c15ULL, opt).run();
  }
}

enum class Solver { kAuto, kDense, kIterative };

inline Solver parse_solver(const std::string& s) {
  if (s == "auto") return Solver::kAuto;
  if (s == "dense") return Solver::kDense;
  if (s == "iterative" || s == "lanczos") return Solver::kIterative;
  throw ParameterError("unknown solver '" + s + "' (expected auto, dense or iterative)");
}

inline const char* to_string(Solver s) {
  switch (s) {
    case Solver::kDense: return "dense";
    case Solver::kIterative: return "iterative";
    default: return "auto";
  }
}

/// Dimension up to which `auto` prefers dense diagonalization.
inline constexpr std::size_t kAutoDenseDim = 4000;

/// Lowest k eigenpairs with the requested solver; `auto` runs dense for small
/// sectors or when k is a sizeable fraction of the sector.
inline EigenData diagonalize(const SparseOperator& op, std::size_t k, Solver solver, std::uint64_t seed = 1,
                             const LanczosOptions& opt = {}) {
  k = std::min(k, op.dim());
  bool dense = solver == Solver::kDense;
  if (solver == Solver::kAuto) dense = op.dim() <= kAutoDenseDim || (op.dim() <= kDenseDimGuard && 4 * k >= op.dim());
  if (!dense) return lanczos_lowest_k(op, k, seed, opt);
  EigenData all = dense_diagonalize(op);
  if (k >= all.size()) return all;
  return detail::finish(all.energies.head(static_cast<Eigen::Index>(k)),
                        all.vectors.leftCols(static_cast<Eigen::Index>(k)), SolverMethod::kDense, all.max_residual);
}

struct SectorMinimum {
  double sz_total = 0.0;
  std::size_t dim = 0;
  double energy = 0.0;
  SolverMethod method = SolverMethod::kDense;
};

struct GroundState {
  double sz_total = 0.0;
  Eigen::VectorXd vector;
  double energy = 0.0;
  bool degenerate = false;
  std::vector<SectorMinimum> per_sector;
};

/// Ground state of `params` over the listed S^z_tot sectors.
inline GroundState ground_state_search(const ModelParams& params, const std::vector<double>& sectors,
                                       Solver solver = Solver::kAuto, std::uint64_t seed = 1) {
  if (sectors.empty()) throw ParameterError("ground_state_search: no sectors given");
  validate(params);
  struct Candidate {
    double sz;
    EigenData eig;
  };
  std::vector<Candidate> found;
  GroundState out;
  for (double sz : sectors) {
    SectorBasis basis(params.n_sites, n_up_for_sz(params.n_sites, sz));
    const auto h = build_hamiltonian(params, basis);
    auto eig = diagonalize(h, std::min<std::size_t>(2, basis.dim()), solver, seed);
    out.per_sector.push_back({sz, basis.dim(), eig.energies[0], eig.method});
    found.push_back({sz, std::move(eig)});
  }
  double emin = std::numeric_limits<double>::infinity();
  double emax = -emin;
  for (const auto& c : found) {
    emin = std::min(emin, c.eig.energies[0]);
    emax = std::max(emax, c.eig.energies[0]);
  }
  const double tol = kDegeneracyRelTol * std::max(1.0, emax - emin);
  std::vector<std::size_t> winners;
  for (std::size_t i = 0; i < found.size(); ++i)
    if (found[i].eig.energies[0] - emin <= std::max(tol, found[i].eig.degeneracy_tol)) winners.push_back(i);
  std::size_t pick = winners.front();
  for (auto i : winners)
    if (found[i].sz == 0.0) pick = i;
  const auto& w = found[pick].eig;
  out.sz_total = found[pick].sz;
  out.energy = w.energies[0];
  out.vector = w.vectors.col(0);
  out.degenerate = winners.size() > 1 || (w.size() > 1 && w.block_size(0) > 1);
  return out;
}

struct ScanRow {
  double h = 0.0;
  std::vector<double> levels;
};

/// Lowest n_levels energies at each field value, over S^z_tot = 0, +-1, +-2, +-3
/// (those realizable on the ring).
inline std::vector<ScanRow> spectrum_scan(const ModelParams& tmpl, const std::vector<double>& h_grid,
                                          std::size_t n_levels, Solver solver = Solver::kAuto,
                                          std::uint64_t seed = 1) {
  if (h_grid.empty()) throw ParameterError("spectrum_scan: empty field grid");
  if (n_levels < 1) throw ParameterError("spectrum_scan: n_levels must be >= 1");
  validate(tmpl);
  const double base = (tmpl.n_sites % 2 == 0) ? 0.0 : 0.5;
  std::vector<double> sectors;
  for (int s = 0; s <= 3; ++s) {
    const double sz = base + s;
    if (sz + 0.5 * tmpl.n_sites > tmpl.n_sites) break;
    sectors.push_back(sz);
    if (sz != 0.0) sectors.push_back(-sz);
  }
  std::vector<ScanRow> table;
  for (double h : h_grid) {
    ModelParams p = tmpl;
    p.h_s = h;
    std::vector<double> levels;
    for (double sz : sectors) {
      SectorBasis basis(p.n_sites, n_up_for_sz(p.n_sites, sz));
      const auto op = build_hamiltonian(p, basis);
      const auto eig = diagonalize(op, std::min(n_levels, basis.dim()), solver, seed);
      for (Eigen::Index i = 0; i < eig.energies.size(); ++i) levels.push_back(eig.energies[i]);
    }
    std::sort(levels.begin(), levels.end());
    levels.resize(std::min(levels.size(), n_levels));
    table.push_back({h, std::move(levels)});
  }
  return table;
}

}  // namespace quenchstat
