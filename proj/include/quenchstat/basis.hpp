#pragma once

// Fixed-magnetization sector of a spin-1/2 chain in the S^z product basis.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "quenchstat/errors.hpp"

namespace quenchstat {

/// Bit j set means spin j points up. Sites are numbered 0..N-1.
using Mask = std::uint32_t;

inline constexpr int kMaxSites = 30;

/// Number of ways to choose k of n; exact for n <= kMaxSites.
inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

class SectorBasis {
 public:
  SectorBasis(int n_sites, int n_up) : n_sites_(n_sites), n_up_(n_up) {
    if (n_sites < 1 || n_sites > kMaxSites)
      throw ParameterError("n_sites must lie in [1, " + std::to_string(kMaxSites) + "], got " +
                           std::to_string(n_sites));
    if (n_up < 0 || n_up > n_sites)
      throw ParameterError("n_up must lie in [0, n_sites], got " + std::to_string(n_up));

    const auto count = binomial(n_sites, n_up);
    states_.reserve(count);
    if (n_up == 0) {
      states_.push_back(0);
      return;
    }
    // Gosper's hack walks all masks with n_up bits in ascending order.
    const std::uint64_t limit = std::uint64_t{1} << n_sites;
    std::uint64_t m = (std::uint64_t{1} << n_up) - 1;
    while (m < limit) {
      states_.push_back(static_cast<Mask>(m));
      const std::uint64_t c = m & (~m + 1);
      const std::uint64_t r = m + c;
      m = (((r ^ m) >> 2) / c) | r;
    }
  }

  int n_sites() const noexcept { return n_sites_; }
  int n_up() const noexcept { return n_up_; }
  std::size_t dim() const noexcept { return states_.size(); }

  /// Total magnetization S^z_tot = n_up - N/2.
  double sz_total() const noexcept { return n_up_ - 0.5 * n_sites_; }

  std::span<const Mask> states() const noexcept { return states_; }
  Mask state(std::size_t i) const { return states_.at(i); }

  /// Ordinal of `mask`, or nullopt if the mask is not a member of this sector.
  std::optional<std::size_t> lookup(Mask mask) const noexcept {
    auto it = std::lower_bound(states_.begin(), states_.end(), mask);
    if (it == states_.end() || *it != mask) return std::nullopt;
    return static_cast<std::size_t>(it - states_.begin());
  }

  /// Identifies the (N, n_up) pair; operators built on this basis carry it.
  std::uint64_t tag() const noexcept {
    return (static_cast<std::uint64_t>(n_sites_) << 32) | static_cast<std::uint64_t>(n_up_);
  }

 private:
  int n_sites_;
  int n_up_;
  std::vector<Mask> states_;
};

inline SectorBasis enumerate_sector(int n_sites, int n_up) { return SectorBasis(n_sites, n_up); }

inline std::optional<std::size_t> lookup(const SectorBasis& basis, Mask mask) {
  return basis.lookup(mask);
}

/// n_up for a given S^z_tot; throws if the value is not realizable on N sites.
inline int n_up_for_sz(int n_sites, double sz_total) {
  const double n_up = sz_total + 0.5 * n_sites;
  const double rounded = static_cast<double>(static_cast<long>(n_up >= 0 ? n_up + 0.5 : n_up - 0.5));
  if (std::abs(n_up - rounded) > 1e-12 || rounded < 0 || rounded > n_sites)
    throw ParameterError("S^z_tot = " + std::to_string(sz_total) + " is not a sector of a " +
                         std::to_string(n_sites) + "-site chain");
  return static_cast<int>(rounded);
}

}  // namespace quenchstat
