#pragma once

// Two entangled eigenstates of a subsystem qubit and an environment qubit:
// closed-form D_S(t), its distribution, and an explicit realization that runs
// through the general reduced-state machinery.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <memory>
#include <numbers>

#include "quenchstat/errors.hpp"
#include "quenchstat/quench.hpp"
#include "quenchstat/subsystem.hpp"

namespace quenchstat {

struct ToyParams {
  double p1 = 0.5;
  double p2 = 0.5;
  double omega = 1.0;  // E_2 - E_1
  double phi = 0.0;    // arg(c_1 conj(c_2))
};

/// Weights must lie in [0, 1] with p1 + p2 <= 1 (a sum below one models the
/// leading pair of a wider weight distribution).
inline void validate(const ToyParams& p) {
  constexpr double tol = 1e-12;
  if (!std::isfinite(p.p1) || !std::isfinite(p.p2) || !std::isfinite(p.omega) || !std::isfinite(p.phi))
    throw ParameterError("toy parameters must be finite");
  if (p.p1 < 0.0 || p.p2 < 0.0 || p.p1 > 1.0 || p.p2 > 1.0)
    throw ParameterError("toy weights must lie in [0, 1]");
  if (p.p1 + p.p2 > 1.0 + tol) throw ParameterError("toy weights must satisfy p1 + p2 <= 1");
}

inline double toy_amplitude(const ToyParams& p) { return std::sqrt(p.p1 * p.p2); }

/// sqrt(p1 p2) |cos(omega t + phi)|.
inline double toy_ds(const ToyParams& p, double t) { return toy_amplitude(p) * std::abs(std::cos(p.omega * t + p.phi)); }

/// (2/pi) / sqrt(p1 p2 - x^2) on [0, sqrt(p1 p2)); zero elsewhere.
inline double toy_ds_density(const ToyParams& p, double x) {
  const double a = toy_amplitude(p);
  if (!(x >= 0.0 && x < a)) return 0.0;
  return (2.0 / std::numbers::pi) / std::sqrt(a * a - x * x);
}

inline double toy_ds_cdf(const ToyParams& p, double x) {
  const double a = toy_amplitude(p);
  if (x < 0.0) return 0.0;
  if (x >= a) return 1.0;
  return (2.0 / std::numbers::pi) * std::asin(x / a);
}

/// Time average (2/pi) sqrt(p1 p2).
inline double toy_ds_mean(const ToyParams& p) { return 2.0 / std::numbers::pi * toy_amplitude(p); }

/// |1> = (|a,alpha> + |b,beta>)/sqrt 2 and |2> = (|a,alpha> - |b,beta>)/sqrt 2
/// on masks {0, 1, 2, 3}: bit 0 is the subsystem qubit (a = 0, b = 1), bit 1
/// the environment qubit (alpha = 0, beta = 1).
class ToyRealization {
 public:
  explicit ToyRealization(const ToyParams& p)
      : params_(p), layout_(std::span<const Mask>(kStates), std::vector<int>{0}) {
    validate(p);
    const double s = 1.0 / std::sqrt(2.0);
    states_ = Eigen::MatrixXd::Zero(4, 2);
    states_(0, 0) = s;
    states_(3, 0) = s;
    states_(0, 1) = s;
    states_(3, 1) = -s;
    c1_ = std::sqrt(p.p1);
    c2_ = std::polar(std::sqrt(p.p2), -p.phi);
  }

  const SubsystemLayout& layout() const noexcept { return layout_; }
  const Eigen::MatrixXd& eigenstates() const noexcept { return states_; }

  /// c_1 e^{-i E_1 t}|1> + c_2 e^{-i E_2 t}|2> with E_1 = 0, E_2 = omega.
  Eigen::VectorXcd state(double t) const {
    return c1_ * states_.col(0).cast<cplx>() + c2_ * std::polar(1.0, -params_.omega * t) * states_.col(1).cast<cplx>();
  }

  /// p1 Tr_E|1><1| + p2 Tr_E|2><2|.
  ReducedState average() const {
    ReducedState r = partial_trace(Eigen::VectorXd(states_.col(0)), layout_);
    r.matrix *= params_.p1;
    r.matrix += params_.p2 * partial_trace(Eigen::VectorXd(states_.col(1)), layout_).matrix;
    return r;
  }

  double ds(double t) const { return trace_distance(partial_trace(state(t), layout_), average()); }

  /// The same system as a QuenchState, for p1 + p2 = 1 and phi = 0.
  QuenchState quench_state() const {
    if (!(params_.omega > 0.0) || params_.phi != 0.0)
      throw ParameterError("toy quench state needs omega > 0 and phi = 0");
    if (std::abs(params_.p1 + params_.p2 - 1.0) > 1e-12)
      throw ParameterError("toy quench state needs p1 + p2 = 1");
    auto e = std::make_shared<EigenData>();
    e->energies = Eigen::Vector2d(0.0, params_.omega);
    e->vectors = states_;
    e->block_starts = {0, 1, 2};
    const Eigen::VectorXd psi0 = c1_ * states_.col(0) + c2_.real() * states_.col(1);
    return compute_weights(psi0, std::shared_ptr<const EigenData>(e));
  }

 private:
  static constexpr std::array<Mask, 4> kStates{0, 1, 2, 3};
  ToyParams params_;
  SubsystemLayout layout_;
  Eigen::MatrixXd states_;
  double c1_ = 0.0;
  cplx c2_;
};

}  // namespace quenchstat
