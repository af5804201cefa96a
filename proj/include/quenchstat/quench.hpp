#pragma once

// Post-quench spectral expansion of the initial state, unitary evolution,
// Loschmidt echo and observable expectations.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "quenchstat/errors.hpp"
#include "quenchstat/operator.hpp"
#include "quenchstat/spectral.hpp"

namespace quenchstat {

using cplx = std::complex<double>;

struct QuenchSpec {
  ModelParams pre;   // h_s = initial field
  ModelParams post;  // h_s = evolution field
};

/// Throws ParameterError unless pre and post differ at most in h_s.
inline void validate(const QuenchSpec& s) {
  validate(s.pre);
  validate(s.post);
  ModelParams a = s.pre;
  a.h_s = s.post.h_s;
  if (!(a == s.post)) throw ParameterError("pre- and post-quench parameters may differ only in the field h_s");
}

inline bool is_identity(const QuenchSpec& s) { return s.pre.h_s == s.post.h_s; }

inline constexpr double kCoverageGate = 1e-4;

struct CoveragePolicy {
  double gate = kCoverageGate;  // fail when 1 - sum p_n exceeds this
  bool renormalize = false;     // rescale the truncated expansion instead of failing
};

struct QuenchState {
  std::shared_ptr<const EigenData> eigen;
  Eigen::VectorXd psi0;
  Eigen::VectorXd c;  // <n|psi0>, rescaled when renormalized
  Eigen::VectorXd p;  // c_n^2
  double coverage = 0.0;  // sum p_n before any rescaling
  bool renormalized = false;
  Eigen::VectorXd block_weight;  // P_b = sum of p_n over degeneracy block b
  Eigen::VectorXd block_energy;  // mean energy of block b
  double le_mean = 0.0;  // sum_b P_b^2, the time-averaged echo
  double level_purity = 0.0;  // sum_n p_n^2 over individual levels

  std::size_t size() const { return static_cast<std::size_t>(c.size()); }
  std::size_t n_blocks() const { return static_cast<std::size_t>(block_weight.size()); }
  double deficit() const { return 1.0 - coverage; }
  double d_eff() const { return 1.0 / le_mean; }
};

/// Expansion of psi0 in the computed eigenpairs. Throws TruncationError when
/// the covered norm falls short of the gate, unless the policy renormalizes.
inline QuenchState compute_weights(const Eigen::VectorXd& psi0, std::shared_ptr<const EigenData> eigen,
                                   const CoveragePolicy& policy = {}) {
  if (!eigen) throw ParameterError("compute_weights: no eigendata");
  if (static_cast<std::size_t>(psi0.size()) != eigen->dim())
    throw ParameterError("compute_weights: initial state has length " + std::to_string(psi0.size()) +
                         " but eigenvectors have length " + std::to_string(eigen->dim()));
  if (std::abs(psi0.norm() - 1.0) > 1e-10) throw ParameterError("compute_weights: initial state is not normalized");

  QuenchState q;
  q.eigen = eigen;
  q.psi0 = psi0;
  q.c = eigen->vectors.transpose() * psi0;
  q.p = q.c.array().square();
  q.coverage = q.p.sum();
  if (q.coverage < 1.0 - policy.gate) {
    if (!policy.renormalize)
      throw TruncationError("spectral coverage sum p_n = " + std::to_string(q.coverage) + " is below 1 - " +
                                std::to_string(policy.gate) + "; compute more eigenpairs or renormalize",
                            q.coverage);
    q.renormalized = true;
    q.c /= std::sqrt(q.coverage);
    q.p /= q.coverage;
  }
  const std::size_t nb = eigen->n_blocks();
  q.block_weight.resize(static_cast<Eigen::Index>(nb));
  q.block_energy.resize(static_cast<Eigen::Index>(nb));
  for (std::size_t b = 0; b < nb; ++b) {
    const auto lo = static_cast<Eigen::Index>(eigen->block_begin(b));
    const auto len = static_cast<Eigen::Index>(eigen->block_size(b));
    q.block_weight[static_cast<Eigen::Index>(b)] = q.p.segment(lo, len).sum();
    q.block_energy[static_cast<Eigen::Index>(b)] = eigen->energies.segment(lo, len).mean();
  }
  q.le_mean = q.block_weight.squaredNorm();
  q.level_purity = q.p.squaredNorm();
  return q;
}

/// |psi(t)> = sum_n c_n exp(-i E_n t) |n> in the sector basis.
inline Eigen::VectorXcd evolve_state(const QuenchState& q, double t) {
  const auto& e = q.eigen->energies;
  Eigen::VectorXcd a(q.c.size());
  for (Eigen::Index n = 0; n < a.size(); ++n) a[n] = q.c[n] * std::polar(1.0, -e[n] * t);
  return q.eigen->vectors.cast<cplx>() * a;
}

/// |sum_b P_b exp(-i E_b t)|^2; levels inside a degeneracy block share one phase.
inline double loschmidt_echo(const QuenchState& q, double t) {
  cplx s = 0.0;
  for (Eigen::Index b = 0; b < q.block_weight.size(); ++b) s += q.block_weight[b] * std::polar(1.0, -q.block_energy[b] * t);
  return std::norm(s);
}

/// Eigen levels retained for time series: whole degeneracy blocks in
/// ascending level order, chosen by descending block weight until the
/// discarded weight is at most `tail`.
struct ModeSet {
  std::vector<std::size_t> blocks;
  std::vector<std::size_t> levels;
  double discarded = 0.0;
};

inline ModeSet select_modes(const QuenchState& q, double tail = 0.0) {
  const std::size_t nb = q.n_blocks();
  std::vector<std::size_t> order(nb);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return q.block_weight[static_cast<Eigen::Index>(x)] < q.block_weight[static_cast<Eigen::Index>(y)];
  });
  ModeSet m;
  std::size_t drop = 0;
  double acc = 0.0;
  for (; drop < nb; ++drop) {
    const double w = q.block_weight[static_cast<Eigen::Index>(order[drop])];
    if (w > 0.0 && acc + w > tail) break;
    acc += w;
  }
  m.discarded = acc;
  m.blocks.assign(order.begin() + static_cast<std::ptrdiff_t>(drop), order.end());
  std::sort(m.blocks.begin(), m.blocks.end());
  for (auto b : m.blocks)
    for (std::size_t n = q.eigen->block_begin(b); n < q.eigen->block_end(b); ++n) m.levels.push_back(n);
  return m;
}

/// Echo at many times over the retained blocks.
inline std::vector<double> loschmidt_series(const QuenchState& q, std::span<const double> times, double tail = 0.0) {
  const auto modes = select_modes(q, tail);
  std::vector<double> w, e;
  for (auto b : modes.blocks) {
    w.push_back(q.block_weight[static_cast<Eigen::Index>(b)]);
    e.push_back(q.block_energy[static_cast<Eigen::Index>(b)]);
  }
  std::vector<double> out(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    double re = 0.0, im = 0.0;
    for (std::size_t b = 0; b < w.size(); ++b) {
      re += w[b] * std::cos(e[b] * times[i]);
      im -= w[b] * std::sin(e[b] * times[i]);
    }
    out[i] = re * re + im * im;
  }
  return out;
}

/// Block amplitude vectors phi_b = sum_{n in b} c_n |n>, one column per
/// retained block; every level of a block carries the phase exp(-i E_b t).
inline Eigen::MatrixXd block_amplitudes(const QuenchState& q, const ModeSet& modes) {
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q.eigen->dim()),
                                              static_cast<Eigen::Index>(modes.blocks.size()));
  for (std::size_t j = 0; j < modes.blocks.size(); ++j) {
    const auto b = modes.blocks[j];
    for (std::size_t n = q.eigen->block_begin(b); n < q.eigen->block_end(b); ++n)
      phi.col(static_cast<Eigen::Index>(j)) += q.c[static_cast<Eigen::Index>(n)] *
                                               q.eigen->vectors.col(static_cast<Eigen::Index>(n));
  }
  return phi;
}

inline Eigen::VectorXd block_energies(const QuenchState& q, const ModeSet& modes) {
  Eigen::VectorXd e(static_cast<Eigen::Index>(modes.blocks.size()));
  for (std::size_t j = 0; j < modes.blocks.size(); ++j)
    e[static_cast<Eigen::Index>(j)] = q.block_energy[static_cast<Eigen::Index>(modes.blocks[j])];
  return e;
}

/// Phases for a batch of times: x = cos(E t), y = -sin(E t), one column per time.
inline void phase_batch(const Eigen::VectorXd& energies, std::span<const double> times, Eigen::MatrixXd& x,
                        Eigen::MatrixXd& y) {
  x.resize(energies.size(), static_cast<Eigen::Index>(times.size()));
  y.resize(energies.size(), static_cast<Eigen::Index>(times.size()));
  for (std::size_t j = 0; j < times.size(); ++j)
    for (Eigen::Index i = 0; i < energies.size(); ++i) {
      const double ph = energies[i] * times[j];
      x(i, static_cast<Eigen::Index>(j)) = std::cos(ph);
      y(i, static_cast<Eigen::Index>(j)) = -std::sin(ph);
    }
}

/// Matrix elements of an observable between retained block vectors.
struct ObservableTable {
  ModeSet modes;
  Eigen::MatrixXd elements;  // phi_b^T O phi_b'
  Eigen::VectorXd energies;  // block energies
  double mean = 0.0;         // time average, with coherences inside degenerate blocks
  double discarded = 0.0;
};

inline ObservableTable observable_table(const QuenchState& q, const SparseOperator& op, double tail = 0.0,
                                        Eigen::Index chunk = 256) {
  if (op.dim() != q.eigen->dim())
    throw ParameterError("observable_table: operator dimension does not match the eigenbasis");
  ObservableTable t;
  t.modes = select_modes(q, tail);
  t.discarded = t.modes.discarded;
  t.energies = block_energies(q, t.modes);
  const Eigen::MatrixXd phi = block_amplitudes(q, t.modes);
  const auto k = phi.cols();
  t.elements.resize(k, k);
  Eigen::MatrixXd ophi;
  for (Eigen::Index j0 = 0; j0 < k; j0 += chunk) {
    const auto w = std::min(chunk, k - j0);
    ophi.resize(phi.rows(), w);
    op.apply_into(phi.middleCols(j0, w), ophi);
    t.elements.middleCols(j0, w).noalias() = phi.transpose() * ophi;
  }
  t.elements = 0.5 * (t.elements + t.elements.transpose()).eval();
  t.mean = t.elements.trace();
  return t;
}

/// <psi(t)|O|psi(t)> = x^T M x + y^T M y with x = cos(E t), y = -sin(E t).
inline double observable_expectation(const ObservableTable& t, double time) {
  Eigen::MatrixXd x, y;
  phase_batch(t.energies, std::span<const double>(&time, 1), x, y);
  return x.col(0).dot(t.elements * x.col(0)) + y.col(0).dot(t.elements * y.col(0));
}

/// Single evaluation; builds the element table, so prefer the table overload
/// for series.
inline double observable_expectation(const QuenchState& q, const SparseOperator& op, double time) {
  return observable_expectation(observable_table(q, op), time);
}

inline std::vector<double> observable_series(const ObservableTable& t, std::span<const double> times,
                                             std::size_t batch = 512) {
  std::vector<double> out(times.size());
  Eigen::MatrixXd x, y, ox, oy;
  for (std::size_t s0 = 0; s0 < times.size(); s0 += batch) {
    const std::size_t nt = std::min(batch, times.size() - s0);
    phase_batch(t.energies, times.subspan(s0, nt), x, y);
    ox.noalias() = t.elements * x;
    oy.noalias() = t.elements * y;
    const Eigen::VectorXd v = (x.cwiseProduct(ox) + y.cwiseProduct(oy)).colwise().sum().transpose();
    for (std::size_t j = 0; j < nt; ++j) out[s0 + j] = v[static_cast<Eigen::Index>(j)];
  }
  return out;
}

}  // namespace quenchstat
