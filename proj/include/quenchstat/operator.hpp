#pragma once

// J1-J2 Heisenberg ring with a field on a contiguous block of sites, and
// related operators, stored row-compressed in a sector basis.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "quenchstat/basis.hpp"
#include "quenchstat/errors.hpp"

namespace quenchstat {

struct ModelParams {
  int n_sites = 16;
  double j1 = 1.0;
  double j2 = 0.0;
  double h_s = 0.0;
  /// Field region: sites offset, offset+1, ..., offset+n_subsystem-1 (mod N).
  int n_subsystem = 4;
  int subsystem_offset = 0;

  bool operator==(const ModelParams&) const = default;
};

/// Throws ParameterError for unusable parameters; returns warnings for
/// accepted-but-unusual ones.
inline std::vector<std::string> validate(const ModelParams& p) {
  if (p.n_sites < 4 || p.n_sites > kMaxSites)
    throw ParameterError("ring needs 4 <= N <= " + std::to_string(kMaxSites) + " sites, got " +
                         std::to_string(p.n_sites));
  if (p.n_subsystem < 1 || p.n_subsystem > p.n_sites)
    throw ParameterError("subsystem size must lie in [1, N], got " + std::to_string(p.n_subsystem));
  if (p.subsystem_offset < 0 || p.subsystem_offset >= p.n_sites)
    throw ParameterError("subsystem offset must lie in [0, N)");
  if (!std::isfinite(p.j1) || !std::isfinite(p.j2) || !std::isfinite(p.h_s))
    throw ParameterError("couplings and field must be finite");
  std::vector<std::string> warnings;
  if (p.j1 <= 0.0) warnings.push_back("j1 <= 0: nearest-neighbour coupling is not antiferromagnetic");
  return warnings;
}

inline std::vector<int> field_sites(const ModelParams& p) {
  std::vector<int> sites;
  for (int j = 0; j < p.n_subsystem; ++j) sites.push_back((p.subsystem_offset + j) % p.n_sites);
  return sites;
}

/// Real symmetric operator in CSR form with sorted column indices per row.
class SparseOperator {
 public:
  SparseOperator() = default;
  SparseOperator(std::size_t dim, std::vector<std::size_t> row_ptr, std::vector<std::uint32_t> cols,
                 std::vector<double> values, std::uint64_t basis_tag)
      : dim_(dim),
        row_ptr_(std::move(row_ptr)),
        cols_(std::move(cols)),
        values_(std::move(values)),
        basis_tag_(basis_tag) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t nnz() const noexcept { return values_.size(); }
  std::uint64_t basis_tag() const noexcept { return basis_tag_; }

  const std::vector<std::size_t>& row_ptr() const noexcept { return row_ptr_; }
  const std::vector<std::uint32_t>& cols() const noexcept { return cols_; }
  const std::vector<double>& values() const noexcept { return values_; }

  /// Entry (i, j); zero when not stored.
  double coeff(std::size_t i, std::size_t j) const {
    auto b = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
    auto e = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
    auto it = std::lower_bound(b, e, static_cast<std::uint32_t>(j));
    if (it == e || *it != j) return 0.0;
    return values_[static_cast<std::size_t>(it - cols_.begin())];
  }

  Eigen::VectorXd diagonal() const {
    Eigen::VectorXd d(static_cast<Eigen::Index>(dim_));
    for (std::size_t i = 0; i < dim_; ++i) d[static_cast<Eigen::Index>(i)] = coeff(i, i);
    return d;
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(dim_));
    for (std::size_t i = 0; i < dim_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
        m(static_cast<Eigen::Index>(i), cols_[k]) = values_[k];
    return m;
  }

  /// out = this * in, column by column. `in` and `out` must not alias.
  template <typename In, typename Out>
  void apply_into(const Eigen::MatrixBase<In>& in, Eigen::MatrixBase<Out>& out) const {
    const Eigen::Index ncols = in.cols();
    for (std::size_t i = 0; i < dim_; ++i) {
      for (Eigen::Index c = 0; c < ncols; ++c) {
        double acc = 0.0;
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) acc += values_[k] * in(cols_[k], c);
        out(static_cast<Eigen::Index>(i), c) = acc;
      }
    }
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::uint32_t> cols_;
  std::vector<double> values_;
  std::uint64_t basis_tag_ = 0;
};

inline Eigen::VectorXd apply(const SparseOperator& op, const Eigen::VectorXd& v) {
  if (static_cast<std::size_t>(v.size()) != op.dim())
    throw ParameterError("apply: vector length " + std::to_string(v.size()) + " does not match operator dimension " +
                         std::to_string(op.dim()));
  Eigen::VectorXd out(v.size());
  op.apply_into(v, out);
  return out;
}

inline Eigen::MatrixXd apply_block(const SparseOperator& op, const Eigen::MatrixXd& block) {
  if (static_cast<std::size_t>(block.rows()) != op.dim())
    throw ParameterError("apply: block row count does not match operator dimension");
  Eigen::MatrixXd out(block.rows(), block.cols());
  op.apply_into(block, out);
  return out;
}

namespace detail {

inline void check_basis(const ModelParams& p, const SectorBasis& basis) {
  validate(p);
  if (basis.n_sites() != p.n_sites)
    throw ParameterError("basis has " + std::to_string(basis.n_sites()) + " sites but model has " +
                         std::to_string(p.n_sites));
}

/// Sum_{j in region} (bit_j - 1/2) for each mask, i.e. S^z restricted to the region.
inline double region_sz(Mask m, const std::vector<int>& sites) {
  double s = 0.0;
  for (int j : sites) s += ((m >> j) & 1u) ? 0.5 : -0.5;
  return s;
}

/// Assembles CSR from per-row (column, value) lists, merging duplicates.
inline SparseOperator assemble(std::vector<std::vector<std::pair<std::uint32_t, double>>> rows, std::uint64_t tag) {
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> cols;
  std::vector<double> values;
  row_ptr.reserve(rows.size() + 1);
  for (auto& row : rows) {
    std::stable_sort(row.begin(), row.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t k = 0; k < row.size();) {
      const auto col = row[k].first;
      double v = 0.0;
      for (; k < row.size() && row[k].first == col; ++k) v += row[k].second;
      cols.push_back(col);
      values.push_back(v);
    }
    row_ptr.push_back(cols.size());
  }
  return SparseOperator(rows.size(), std::move(row_ptr), std::move(cols), std::move(values), tag);
}

}  // namespace detail

/// H = sum_j [J1 S_j.S_{j+1} + J2 S_j.S_{j+2}] - h_S sum_{j in S} S^z_j on a ring.
///
/// S_a.S_b = S^z_a S^z_b + (S^+_a S^-_b + S^-_a S^+_b)/2 with S^z = +-1/2, so a
/// flip-flop bond contributes J/2 off the diagonal. For N = 4 the J2 sum visits
/// every next-nearest pair twice, which is what the ring sum literally says.
inline SparseOperator build_hamiltonian(const ModelParams& p, const SectorBasis& basis) {
  detail::check_basis(p, basis);
  const int n = p.n_sites;
  const auto sites = field_sites(p);
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(basis.dim());

  for (std::size_t i = 0; i < basis.dim(); ++i) {
    const Mask m = basis.state(i);
    double diag = 0.0;
    auto& row = rows[i];
    for (int range = 1; range <= 2; ++range) {
      const double coupling = range == 1 ? p.j1 : p.j2;
      if (coupling == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        const int k = (j + range) % n;
        const bool bj = (m >> j) & 1u;
        const bool bk = (m >> k) & 1u;
        diag += bj == bk ? 0.25 * coupling : -0.25 * coupling;
        if (bj != bk) {
          const Mask flipped = m ^ (Mask{1} << j) ^ (Mask{1} << k);
          // Flip-flops conserve the number of up spins, so the target is always in the sector.
          const auto target = *basis.lookup(flipped);
          row.emplace_back(static_cast<std::uint32_t>(target), 0.5 * coupling);
        }
      }
    }
    diag += -p.h_s * detail::region_sz(m, sites);
    row.emplace_back(static_cast<std::uint32_t>(i), diag);
  }
  return detail::assemble(std::move(rows), basis.tag());
}

/// Diagonal operator S^z_S = sum over the field region of S^z_j.
inline SparseOperator build_subsystem_sz(const ModelParams& p, const SectorBasis& basis) {
  detail::check_basis(p, basis);
  const auto sites = field_sites(p);
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(basis.dim());
  for (std::size_t i = 0; i < basis.dim(); ++i)
    rows[i].emplace_back(static_cast<std::uint32_t>(i), detail::region_sz(basis.state(i), sites));
  return detail::assemble(std::move(rows), basis.tag());
}

/// Diagonal operator from explicit values (identity, test fixtures).
inline SparseOperator diagonal_operator(const Eigen::VectorXd& d, std::uint64_t tag = 0) {
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(static_cast<std::size_t>(d.size()));
  for (Eigen::Index i = 0; i < d.size(); ++i)
    rows[static_cast<std::size_t>(i)].emplace_back(static_cast<std::uint32_t>(i), d[i]);
  return detail::assemble(std::move(rows), tag);
}

}  // namespace quenchstat
