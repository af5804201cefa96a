#pragma once

// Reduced states of a block of sites, the dephased reduced state, trace
// distance and the subsystem equilibration bounds.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "quenchstat/basis.hpp"
#include "quenchstat/errors.hpp"
#include "quenchstat/quench.hpp"
#include "quenchstat/statistics.hpp"

namespace quenchstat {

/// Index bookkeeping for tracing out everything but `sites`. Bit k of a
/// subsystem configuration is the spin on sites[k]. For every pair of
/// subsystem configurations (a, b) sharing at least one environment
/// configuration, `rows_a[i]` and `rows_b[i]` are the basis ordinals of the
/// masks (a, env_i) and (b, env_i).
class SubsystemLayout {
 public:
  struct Pair {
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::vector<std::uint32_t> rows_a;
    std::vector<std::uint32_t> rows_b;
  };

  SubsystemLayout(std::span<const Mask> states, std::vector<int> sites) : sites_(std::move(sites)) {
    if (sites_.empty() || sites_.size() > 12) throw ParameterError("subsystem must contain 1 to 12 sites");
    Mask sub_mask = 0;
    for (int s : sites_) {
      if (s < 0 || s >= kMaxSites) throw ParameterError("subsystem site out of range");
      if (sub_mask & (Mask{1} << s)) throw ParameterError("subsystem sites must be distinct");
      sub_mask |= Mask{1} << s;
    }
    dim_states_ = states.size();
    const std::size_t ds = std::size_t{1} << sites_.size();
    // per subsystem configuration: (environment bits, ordinal), sorted by environment
    std::vector<std::vector<std::pair<Mask, std::uint32_t>>> by_config(ds);
    for (std::size_t i = 0; i < states.size(); ++i) {
      const Mask m = states[i];
      std::uint32_t a = 0;
      for (std::size_t k = 0; k < sites_.size(); ++k) a |= ((m >> sites_[k]) & 1u) << k;
      by_config[a].emplace_back(m & ~sub_mask, static_cast<std::uint32_t>(i));
    }
    for (auto& v : by_config) std::sort(v.begin(), v.end());
    for (std::uint32_t a = 0; a < ds; ++a) {
      for (std::uint32_t b = a; b < ds; ++b) {
        Pair p;
        p.a = a;
        p.b = b;
        const auto& va = by_config[a];
        const auto& vb = by_config[b];
        for (std::size_t i = 0, j = 0; i < va.size() && j < vb.size();) {
          if (va[i].first < vb[j].first) {
            ++i;
          } else if (vb[j].first < va[i].first) {
            ++j;
          } else {
            p.rows_a.push_back(va[i].second);
            p.rows_b.push_back(vb[j].second);
            ++i;
            ++j;
          }
        }
        if (!p.rows_a.empty()) pairs_.push_back(std::move(p));
      }
    }
  }

  const std::vector<int>& sites() const noexcept { return sites_; }
  Eigen::Index dim_s() const noexcept { return Eigen::Index{1} << sites_.size(); }
  std::size_t dim_states() const noexcept { return dim_states_; }
  const std::vector<Pair>& pairs() const noexcept { return pairs_; }

 private:
  std::vector<int> sites_;
  std::size_t dim_states_ = 0;
  std::vector<Pair> pairs_;
};

inline std::vector<int> leading_sites(int n_subsystem) {
  std::vector<int> s(static_cast<std::size_t>(std::max(0, n_subsystem)));
  for (int k = 0; k < n_subsystem; ++k) s[static_cast<std::size_t>(k)] = k;
  return s;
}

struct ReducedState {
  Eigen::MatrixXcd matrix;
  Eigen::Index dim() const noexcept { return matrix.rows(); }
};

/// rho_S[a, b] = sum_env psi(a, env) conj(psi(b, env)).
template <typename Derived>
ReducedState partial_trace(const Eigen::MatrixBase<Derived>& psi, const SubsystemLayout& layout) {
  if (static_cast<std::size_t>(psi.size()) != layout.dim_states())
    throw ParameterError("partial_trace: state length does not match the basis");
  ReducedState r;
  r.matrix = Eigen::MatrixXcd::Zero(layout.dim_s(), layout.dim_s());
  for (const auto& p : layout.pairs()) {
    cplx s = 0.0;
    for (std::size_t i = 0; i < p.rows_a.size(); ++i)
      s += cplx(psi[p.rows_a[i]]) * std::conj(cplx(psi[p.rows_b[i]]));
    r.matrix(p.a, p.b) = s;
    r.matrix(p.b, p.a) = std::conj(s);
  }
  return r;
}

/// Reduced state of sites 0..n_subsystem-1.
template <typename Derived>
ReducedState partial_trace(const Eigen::MatrixBase<Derived>& psi, const SectorBasis& basis, int n_subsystem) {
  if (n_subsystem < 1 || n_subsystem > basis.n_sites())
    throw ParameterError("partial_trace: subsystem size must lie in [1, N]");
  return partial_trace(psi, SubsystemLayout(basis.states(), leading_sites(n_subsystem)));
}

/// Dephased reduced state: sum over blocks of Tr_env |phi_b><phi_b|, which keeps
/// coherences inside degenerate blocks and drops them across blocks.
inline ReducedState average_reduced_state(const QuenchState& q, const SubsystemLayout& layout, double tail = 0.0) {
  if (q.eigen->dim() != layout.dim_states())
    throw ParameterError("average_reduced_state: layout does not match the eigenbasis");
  const auto modes = select_modes(q, tail);
  const Eigen::MatrixXd phi = block_amplitudes(q, modes);
  ReducedState r;
  r.matrix = Eigen::MatrixXcd::Zero(layout.dim_s(), layout.dim_s());
  for (const auto& p : layout.pairs()) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < phi.cols(); ++j)
      for (std::size_t i = 0; i < p.rows_a.size(); ++i) s += phi(p.rows_a[i], j) * phi(p.rows_b[i], j);
    r.matrix(p.a, p.b) = s;
    r.matrix(p.b, p.a) = s;
  }
  return r;
}

inline ReducedState average_reduced_state(const QuenchState& q, const SectorBasis& basis, int n_subsystem) {
  return average_reduced_state(q, SubsystemLayout(basis.states(), leading_sites(n_subsystem)));
}

/// Purity of the dephased state restricted to the environment,
/// sum_{b,b'} || M_b^T M_b' ||_F^2 with M_b[env, a] = phi_b(a, env).
inline double environment_purity(const QuenchState& q, const SubsystemLayout& layout, double tail = 0.0) {
  const auto modes = select_modes(q, tail);
  const Eigen::MatrixXd phi = block_amplitudes(q, modes);
  double total = 0.0;
  for (const auto& p : layout.pairs()) {
    const auto len = static_cast<Eigen::Index>(p.rows_a.size());
    Eigen::MatrixXd pa(len, phi.cols()), pb(len, phi.cols());
    for (Eigen::Index i = 0; i < len; ++i) {
      pa.row(i) = phi.row(p.rows_a[static_cast<std::size_t>(i)]);
      pb.row(i) = phi.row(p.rows_b[static_cast<std::size_t>(i)]);
    }
    const double g = (pa.transpose() * pb).squaredNorm();
    total += (p.a == p.b) ? g : 2.0 * g;
  }
  return total;
}

/// Half the sum of absolute eigenvalues of a - b.
inline double trace_distance(const ReducedState& a, const ReducedState& b) {
  if (a.dim() != b.dim()) throw ParameterError("trace_distance: dimension mismatch");
  const Eigen::MatrixXcd d = a.matrix - b.matrix;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(d, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

/// Basis ordinal of the image of every state under the ring reflection that
/// reverses `sites` (j -> sites.front() + sites.back() - j mod N).
inline std::vector<std::uint32_t> mirror_rows(const SectorBasis& basis, const std::vector<int>& sites) {
  if (sites.empty()) throw ParameterError("mirror_rows: empty site list");
  const int n = basis.n_sites();
  const int c = sites.front() + sites.back();
  std::vector<std::uint32_t> out(basis.dim());
  for (std::size_t i = 0; i < basis.dim(); ++i) {
    const Mask m = basis.states()[i];
    Mask r = 0;
    for (int j = 0; j < n; ++j)
      if ((m >> j) & 1u) r |= Mask{1} << (((c - j) % n + n) % n);
    const auto k = basis.lookup(r);
    if (!k) throw ParameterError("mirror_rows: reflected state is outside the sector");
    out[i] = static_cast<std::uint32_t>(*k);
  }
  return out;
}

/// +1 or -1 when every column of phi is even or odd under the row map
/// `mirror` to within `rel_tol` of its largest entry, 0 otherwise.
inline int mirror_parity(const Eigen::MatrixXd& phi, std::span<const std::uint32_t> mirror, double rel_tol = 1e-10) {
  if (mirror.size() != static_cast<std::size_t>(phi.rows()) || phi.size() == 0) return 0;
  const double tol = rel_tol * phi.cwiseAbs().maxCoeff();
  for (int sign : {1, -1}) {
    bool ok = true;
    for (Eigen::Index j = 0; j < phi.cols() && ok; ++j)
      for (Eigen::Index i = 0; i < phi.rows() && ok; ++i)
        ok = std::abs(phi(mirror[static_cast<std::size_t>(i)], j) - sign * phi(i, j)) <= tol;
    if (ok) return sign;
  }
  return 0;
}

/// D_S(t) at many times from the retained modes, evolving the state in
/// batches: psi = Phi (x + i y) over the retained block vectors. With a row
/// map under which the block vectors have a common parity, only one row of
/// each mirror pair is evolved.
inline std::vector<double> trace_distance_series(const QuenchState& q, const SubsystemLayout& layout,
                                                 const ReducedState& average, std::span<const double> times,
                                                 double tail = 0.0, std::size_t batch = 256,
                                                 std::span<const std::uint32_t> mirror = {}) {
  const auto modes = select_modes(q, tail);
  Eigen::MatrixXd phi = block_amplitudes(q, modes);
  const Eigen::VectorXd energies = block_energies(q, modes);
  const Eigen::Index dim = phi.rows();

  // row i of the evolved state is sign[i] times row slot[i] of the reduced product
  std::vector<Eigen::Index> slot(static_cast<std::size_t>(dim));
  std::vector<double> sign(static_cast<std::size_t>(dim), 1.0);
  const int parity = mirror_parity(phi, mirror);
  if (parity != 0) {
    std::vector<Eigen::Index> reps;
    for (Eigen::Index i = 0; i < dim; ++i) {
      const auto m = static_cast<Eigen::Index>(mirror[static_cast<std::size_t>(i)]);
      if (m >= i) {
        slot[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(reps.size());
        reps.push_back(i);
      } else {
        slot[static_cast<std::size_t>(i)] = slot[static_cast<std::size_t>(m)];
        sign[static_cast<std::size_t>(i)] = parity;
      }
    }
    Eigen::MatrixXd reduced(static_cast<Eigen::Index>(reps.size()), phi.cols());
    for (std::size_t k = 0; k < reps.size(); ++k) reduced.row(static_cast<Eigen::Index>(k)) = phi.row(reps[k]);
    phi = std::move(reduced);
  } else {
    for (Eigen::Index i = 0; i < dim; ++i) slot[static_cast<std::size_t>(i)] = i;
  }

  std::vector<double> out(times.size());
  Eigen::MatrixXd x, y, re_r, im_r, re(dim, 0), im(dim, 0);
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(layout.dim_s(), layout.dim_s());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(layout.dim_s());
  for (std::size_t s0 = 0; s0 < times.size(); s0 += batch) {
    const std::size_t nt = std::min(batch, times.size() - s0);
    phase_batch(energies, times.subspan(s0, nt), x, y);
    re_r.noalias() = phi * x;
    im_r.noalias() = phi * y;
    if (parity != 0) {
      re.resize(dim, re_r.cols());
      im.resize(dim, im_r.cols());
      for (Eigen::Index j = 0; j < re_r.cols(); ++j)
        for (Eigen::Index i = 0; i < dim; ++i) {
          const auto u = static_cast<std::size_t>(i);
          re(i, j) = sign[u] * re_r(slot[u], j);
          im(i, j) = sign[u] * im_r(slot[u], j);
        }
    } else {
      re.swap(re_r);
      im.swap(im_r);
    }
    for (std::size_t j = 0; j < nt; ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      for (const auto& p : layout.pairs()) {
        double sr = 0.0, si = 0.0;
        for (std::size_t i = 0; i < p.rows_a.size(); ++i) {
          const double ar = re(p.rows_a[i], col), ai = im(p.rows_a[i], col);
          const double br = re(p.rows_b[i], col), bi = im(p.rows_b[i], col);
          sr += ar * br + ai * bi;
          si += ai * br - ar * bi;
        }
        rho(p.a, p.b) = cplx(sr, si);
        rho(p.b, p.a) = cplx(sr, -si);
      }
      es.compute(rho - average.matrix, Eigen::EigenvaluesOnly);
      out[s0 + j] = 0.5 * es.eigenvalues().cwiseAbs().sum();
    }
  }
  return out;
}

/// Sampled observable with its time average and spectral range, for the
/// pointwise bound |O(t) - mean| <= (o_max - o_min) D_S(t).
struct MonitoredObservable {
  std::string name;
  std::span<const double> series;
  double mean = 0.0;
  double o_min = 0.0;
  double o_max = 0.0;
};

struct MarkovPoint {
  double epsilon = 0.0;
  double probability = 0.0;  // empirical Prob[D_S >= epsilon]
  double bound = 0.0;        // mean(D_S) / epsilon
};

struct TraceBoundCheck {
  std::string name;
  double max_violation = 0.0;  // max over samples of |O(t) - mean| - (o_max - o_min) D_S(t)
  bool holds = true;
};

struct BoundsReport {
  double le_mean = 0.0;
  double d_eff = 0.0;
  double ds_mean = 0.0;
  std::vector<MarkovPoint> markov_curve;
  bool markov_holds = true;
  double winter_lhs = 0.0;  // mean D_S
  double winter_mid = 0.0;  // sqrt(d_S / d_eff(env)) / 2
  double winter_rhs = 0.0;  // sqrt(d_S^2 / d_eff) / 2
  double environment_purity = 0.0;
  bool applicable = true;  // false when the post-quench ground level is degenerate
  bool winter_holds = true;
  std::vector<TraceBoundCheck> eq4_checks;
  double le_variance = 0.0;
  bool le_variance_holds = true;  // Var(L) <= mean(L)^2 within tolerance
  double deficit_error_bar = 0.0;  // 2 (1 - coverage)
};

struct BoundsOptions {
  double eq4_tol = 1e-9;
  double markov_tol = 1e-12;
  double variance_tol = 1e-3;
  std::size_t markov_points = 64;
  double tail = 0.0;  // mode truncation used for the environment purity
};

inline BoundsReport check_bounds(const QuenchState& q, const SubsystemLayout& layout, std::span<const double> ds_series,
                                 std::span<const MonitoredObservable> observables,
                                 std::span<const double> le_series = {}, const BoundsOptions& opt = {}) {
  if (ds_series.empty()) throw ParameterError("check_bounds: empty D_S series");
  BoundsReport r;
  r.le_mean = q.le_mean;
  r.d_eff = q.d_eff();
  r.deficit_error_bar = 2.0 * std::max(0.0, 1.0 - q.coverage);

  double sum = 0.0, dmax = 0.0;
  for (double d : ds_series) {
    sum += d;
    dmax = std::max(dmax, d);
  }
  r.ds_mean = sum / static_cast<double>(ds_series.size());

  std::vector<double> sorted(ds_series.begin(), ds_series.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 1; i <= opt.markov_points && dmax > 0.0; ++i) {
    MarkovPoint m;
    m.epsilon = dmax * static_cast<double>(i) / static_cast<double>(opt.markov_points);
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), m.epsilon) - sorted.begin();
    m.probability = (n - static_cast<double>(below)) / n;
    m.bound = r.ds_mean / m.epsilon;
    if (m.probability > m.bound + opt.markov_tol) r.markov_holds = false;
    r.markov_curve.push_back(m);
  }

  const double ds = static_cast<double>(layout.dim_s());
  r.environment_purity = environment_purity(q, layout, opt.tail);
  r.winter_lhs = r.ds_mean;
  r.winter_mid = 0.5 * std::sqrt(ds * r.environment_purity);
  r.winter_rhs = 0.5 * std::sqrt(ds * ds * q.le_mean);
  r.applicable = q.eigen->n_blocks() > 0 && q.eigen->block_size(0) == 1;
  r.winter_holds = r.winter_lhs <= r.winter_mid && r.winter_mid <= r.winter_rhs;

  for (const auto& o : observables) {
    if (o.series.size() != ds_series.size())
      throw ParameterError("check_bounds: observable series '" + o.name + "' has a different length");
    TraceBoundCheck c;
    c.name = o.name;
    c.max_violation = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ds_series.size(); ++i)
      c.max_violation = std::max(c.max_violation, std::abs(o.series[i] - o.mean) - (o.o_max - o.o_min) * ds_series[i]);
    c.holds = c.max_violation <= opt.eq4_tol;
    r.eq4_checks.push_back(c);
  }

  if (!le_series.empty()) {
    r.le_variance = compute_moments(le_series).variance;
    r.le_variance_holds = r.le_variance <= q.le_mean * q.le_mean + opt.variance_tol;
  }
  return r;
}

}  // namespace quenchstat
