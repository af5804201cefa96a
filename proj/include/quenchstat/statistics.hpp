#pragma once

// Long-time sampling of scalar time series, histograms and ECDFs with
// compensated moments, and the analytic distribution overlays.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "quenchstat/errors.hpp"
#include "quenchstat/quench.hpp"

namespace quenchstat {

inline constexpr std::size_t kDefaultSamples = 400000;
inline constexpr double kWeightFloor = 1e-8;
inline constexpr double kWindowFactor = 100.0;

struct SamplingPlan {
  double t_max = 1.0;
  std::size_t n_samples = kDefaultSamples;
  std::uint64_t seed = 42;
  double delta_min = 0.0;
  std::string generator = "mt19937_64";
};

/// Smallest gap between distinct energies whose block weight exceeds `floor`;
/// zero when fewer than two blocks qualify.
inline double smallest_populated_gap(const QuenchState& q, double floor = kWeightFloor) {
  std::vector<double> e;
  for (Eigen::Index b = 0; b < q.block_weight.size(); ++b)
    if (q.block_weight[b] > floor) e.push_back(q.block_energy[b]);
  std::sort(e.begin(), e.end());
  double gap = 0.0;
  for (std::size_t i = 1; i < e.size(); ++i) {
    const double d = e[i] - e[i - 1];
    if (d > 0.0 && (gap == 0.0 || d < gap)) gap = d;
  }
  return gap;
}

/// Window T_max = 100 * 2 pi / delta_min; a single populated level gets
/// T_max = 100 * 2 pi.
inline SamplingPlan make_plan(const QuenchState& q, std::size_t n_samples = kDefaultSamples, std::uint64_t seed = 42,
                              double floor = kWeightFloor) {
  if (n_samples < 1) throw ParameterError("sampling plan needs at least one sample");
  SamplingPlan plan;
  plan.n_samples = n_samples;
  plan.seed = seed;
  plan.delta_min = smallest_populated_gap(q, floor);
  const double period = plan.delta_min > 0.0 ? 2.0 * std::numbers::pi / plan.delta_min : 2.0 * std::numbers::pi;
  plan.t_max = kWindowFactor * period;
  return plan;
}

/// I.i.d. uniform times in [0, t_max) from the seeded 64-bit Mersenne twister,
/// using the top 53 bits of each draw.
inline std::vector<double> sample_times(const SamplingPlan& plan) {
  if (!(plan.t_max > 0.0) || !std::isfinite(plan.t_max)) throw ParameterError("sampling window must be positive");
  std::mt19937_64 rng(plan.seed);
  std::vector<double> t(plan.n_samples);
  for (auto& x : t) x = static_cast<double>(rng() >> 11) * 0x1.0p-53 * plan.t_max;
  return t;
}

inline std::vector<double> sample_series(const std::function<double(double)>& f, const SamplingPlan& plan) {
  const auto times = sample_times(plan);
  std::vector<double> out(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) out[i] = f(times[i]);
  return out;
}

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  void merge(const CompensatedSum& o) {
    add(o.sum_);
    add(o.comp_);
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  // population variance
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  double min = 0.0;
  double max = 0.0;
  double signal_to_noise = 0.0;  // mean / sqrt(variance); infinite for a constant series
};

/// Mergeable accumulator of compensated power sums of (x - shift).
class MomentAccumulator {
 public:
  explicit MomentAccumulator(double shift = 0.0) : shift_(shift) {}

  void add(double x) {
    const double d = x - shift_;
    const double d2 = d * d;
    s1_.add(d);
    s2_.add(d2);
    s3_.add(d2 * d);
    s4_.add(d2 * d2);
    min_ = std::min(min_, x);
    max_ = std::max(max_, x);
    ++n_;
  }

  void add(std::span<const double> xs) {
    for (double x : xs) add(x);
  }

  void merge(const MomentAccumulator& o) {
    if (o.shift_ != shift_) throw ParameterError("cannot merge moment accumulators with different shifts");
    s1_.merge(o.s1_);
    s2_.merge(o.s2_);
    s3_.merge(o.s3_);
    s4_.merge(o.s4_);
    min_ = std::min(min_, o.min_);
    max_ = std::max(max_, o.max_);
    n_ += o.n_;
  }

  std::size_t count() const { return n_; }

  Moments moments() const {
    Moments m;
    m.n = n_;
    if (n_ == 0) return m;
    const double n = static_cast<double>(n_);
    const double a1 = s1_.value() / n, a2 = s2_.value() / n, a3 = s3_.value() / n, a4 = s4_.value() / n;
    m.mean = shift_ + a1;
    m.variance = std::max(0.0, a2 - a1 * a1);
    const double c3 = a3 - 3.0 * a1 * a2 + 2.0 * a1 * a1 * a1;
    const double c4 = a4 - 4.0 * a1 * a3 + 6.0 * a1 * a1 * a2 - 3.0 * a1 * a1 * a1 * a1;
    if (m.variance > 0.0) {
      m.skewness = c3 / std::pow(m.variance, 1.5);
      m.excess_kurtosis = c4 / (m.variance * m.variance) - 3.0;
      m.signal_to_noise = m.mean / std::sqrt(m.variance);
    } else {
      m.signal_to_noise = std::numeric_limits<double>::infinity();
    }
    m.min = min_;
    m.max = max_;
    return m;
  }

 private:
  double shift_;
  CompensatedSum s1_, s2_, s3_, s4_;
  double min_ = std::numeric_limits<double>::infinity();
  double max_ = -std::numeric_limits<double>::infinity();
  std::size_t n_ = 0;
};

inline Moments compute_moments(std::span<const double> xs) {
  MomentAccumulator acc(xs.empty() ? 0.0 : xs.front());
  acc.add(xs);
  return acc.moments();
}

struct Distribution {
  std::vector<double> edges;     // n_bins + 1, ascending
  std::vector<double> density;   // per bin, integrates to 1
  std::vector<std::size_t> counts;
  std::vector<double> sorted;    // ECDF support
  Moments moments;

  std::size_t n_bins() const { return counts.size(); }
  double bin_center(std::size_t i) const { return 0.5 * (edges[i] + edges[i + 1]); }
  double bin_width(std::size_t i) const { return edges[i + 1] - edges[i]; }
  /// Fraction of samples <= x.
  double ecdf(double x) const {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), x);
    return static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
  }
};

inline constexpr std::size_t kMinAutoBins = 50;
inline constexpr std::size_t kMaxAutoBins = 2000;

/// Freedman-Diaconis bin count clamped to [50, 2000].
inline std::size_t auto_bin_count(std::span<const double> sorted) {
  const std::size_t n = sorted.size();
  const double range = sorted.back() - sorted.front();
  auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, n - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  if (!(iqr > 0.0) || !(range > 0.0)) return kMinAutoBins;
  const double h = 2.0 * iqr / std::cbrt(static_cast<double>(n));
  const double bins = std::ceil(range / h);
  return static_cast<std::size_t>(std::clamp(bins, static_cast<double>(kMinAutoBins), static_cast<double>(kMaxAutoBins)));
}

/// Equal-width histogram over [min, max] (last bin closed). A constant sample
/// set yields one bin of width 1e-9 max(1, |x|) centered on the value.
inline Distribution histogram(std::span<const double> samples, std::size_t n_bins = 0) {
  if (samples.size() < 2) throw ParameterError("histogram needs at least two samples");
  Distribution d;
  d.sorted.assign(samples.begin(), samples.end());
  std::sort(d.sorted.begin(), d.sorted.end());
  if (!std::isfinite(d.sorted.front()) || !std::isfinite(d.sorted.back()))
    throw ParameterError("histogram: samples must be finite");
  d.moments = compute_moments(samples);
  const double lo = d.sorted.front(), hi = d.sorted.back();
  const double n = static_cast<double>(samples.size());
  if (hi == lo) {
    const double w = 1e-9 * std::max(1.0, std::abs(lo));
    d.edges = {lo - 0.5 * w, lo + 0.5 * w};
    d.counts = {samples.size()};
    d.density = {1.0 / (d.edges[1] - d.edges[0])};
    return d;
  }
  const std::size_t nb = n_bins ? n_bins : auto_bin_count(d.sorted);
  const double width = (hi - lo) / static_cast<double>(nb);
  d.edges.resize(nb + 1);
  for (std::size_t i = 0; i <= nb; ++i) d.edges[i] = lo + width * static_cast<double>(i);
  d.edges.back() = hi;
  d.counts.assign(nb, 0);
  for (double x : samples) {
    auto i = static_cast<std::size_t>((x - lo) / width);
    d.counts[std::min(i, nb - 1)]++;
  }
  d.density.resize(nb);
  for (std::size_t i = 0; i < nb; ++i) d.density[i] = static_cast<double>(d.counts[i]) / (n * d.bin_width(i));
  return d;
}

/// Two-sample Kolmogorov distance between empirical CDFs.
inline double ecdf_sup_distance(const Distribution& a, const Distribution& b) {
  const auto& x = a.sorted;
  const auto& y = b.sorted;
  const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double best = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= v) ++i;
    while (j < y.size() && y[j] <= v) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
  }
  return best;
}

/// One-sample Kolmogorov distance to a continuous CDF.
inline double ecdf_sup_distance(const Distribution& a, const std::function<double(double)>& cdf) {
  const double n = static_cast<double>(a.sorted.size());
  double best = 0.0;
  for (std::size_t i = 0; i < a.sorted.size(); ++i) {
    const double f = cdf(a.sorted[i]);
    best = std::max({best, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return best;
}

struct Peak {
  double position = 0.0;
  double height = 0.0;
  double prominence = 0.0;
};

/// Local maxima of the density whose topographic prominence is at least
/// `min_prominence` times the largest density, sorted by height.
inline std::vector<Peak> find_peaks(const Distribution& d, double min_prominence = 0.1) {
  const auto& y = d.density;
  const std::size_t n = y.size();
  std::vector<Peak> peaks;
  if (n == 0) return peaks;
  const double top = *std::max_element(y.begin(), y.end());
  for (std::size_t i = 0; i < n; ++i) {
    const bool left_ok = i == 0 || y[i] > y[i - 1];
    const bool right_ok = i + 1 == n || y[i] >= y[i + 1];
    if (!left_ok || !right_ok) continue;
    // walk outwards until a higher bin, tracking the lowest point on each side
    double left_min = y[i], right_min = y[i];
    bool left_higher = false, right_higher = false;
    for (std::size_t j = i; j-- > 0;) {
      if (y[j] > y[i]) {
        left_higher = true;
        break;
      }
      left_min = std::min(left_min, y[j]);
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      if (y[j] > y[i]) {
        right_higher = true;
        break;
      }
      right_min = std::min(right_min, y[j]);
    }
    double base;
    if (left_higher && right_higher)
      base = std::max(left_min, right_min);
    else if (left_higher)
      base = left_min;
    else if (right_higher)
      base = right_min;
    else
      base = std::min(left_min, right_min);
    const double prom = (!left_higher && !right_higher) ? y[i] : y[i] - base;
    if (prom >= min_prominence * top) peaks.push_back({d.bin_center(i), y[i], prom});
  }
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.height > b.height; });
  return peaks;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

/// Least-squares fit of log(density) against bin center over bins holding at
/// least `min_count` samples.
inline LinearFit log_linear_fit(const Distribution& d, std::size_t min_count = 20) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < d.n_bins(); ++i)
    if (d.counts[i] >= min_count && d.density[i] > 0.0) {
      x.push_back(d.bin_center(i));
      y.push_back(std::log(d.density[i]));
    }
  LinearFit f;
  f.points = x.size();
  if (x.size() < 3) return f;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

enum class TwoModeForm {
  kPrinted,  // L + [1 - L (x2 - x1)] / (pi sqrt((x - x1)(x2 - x)))
  kArcsine,  // 1 / (pi sqrt((x - x1)(x2 - x)))
};

struct TwoModeSupport {
  double le_mean = 0.0;  // p0^2 + p1^2
  double x1 = 0.0;
  double x2 = 0.0;
};

inline TwoModeSupport two_mode_support(double p0, double p1) {
  TwoModeSupport s;
  s.le_mean = p0 * p0 + p1 * p1;
  s.x1 = s.le_mean - 2.0 * p0 * p1;
  s.x2 = s.le_mean + 2.0 * p0 * p1;
  return s;
}

/// Density of L(t) = p0^2 + p1^2 + 2 p0 p1 cos(w t); zero outside (x1, x2).
inline double two_mode_density(double p0, double p1, double x, TwoModeForm form = TwoModeForm::kArcsine) {
  if (!(p0 > 0.0) || !(p1 > 0.0)) throw ParameterError("two_mode_density: weights must be positive");
  const auto s = two_mode_support(p0, p1);
  if (!(x > s.x1 && x < s.x2)) return 0.0;
  const double arcsine = 1.0 / (std::numbers::pi * std::sqrt((x - s.x1) * (s.x2 - x)));
  if (form == TwoModeForm::kArcsine) return arcsine;
  return s.le_mean + (1.0 - s.le_mean * (s.x2 - s.x1)) * arcsine;
}

/// CDF of the arcsine form.
inline double two_mode_cdf(double p0, double p1, double x) {
  const auto s = two_mode_support(p0, p1);
  if (x <= s.x1) return 0.0;
  if (x >= s.x2) return 1.0;
  return 0.5 + std::asin((2.0 * x - s.x1 - s.x2) / (s.x2 - s.x1)) / std::numbers::pi;
}

/// Standard deviation of the two-mode echo, (x2 - x1) / sqrt(8).
inline double two_mode_variance(double p0, double p1) { return 4.0 * p0 * p1 / std::sqrt(8.0); }

/// c + sum_k a_k cos(w_k t).
struct CosineSeries {
  double constant = 0.0;
  std::vector<double> amplitude;
  std::vector<double> frequency;

  double operator()(double t) const {
    double s = constant;
    for (std::size_t k = 0; k < amplitude.size(); ++k) s += amplitude[k] * std::cos(frequency[k] * t);
    return s;
  }
};

/// Echo expansion L = Lbar + 2 sum_{i<j} W_ij cos((E_j - E_i) t) over block
/// pairs, keeping the n_max largest W_ij = P_i P_j (ties by ascending (i, j)).
/// Pairs with zero weight never contribute.
inline CosineSeries truncated_le_series(const QuenchState& q, std::size_t n_max) {
  if (n_max < 1) throw ParameterError("truncated_le_series: n_max must be >= 1");
  const auto nb = static_cast<std::size_t>(q.block_weight.size());
  std::vector<std::size_t> order;
  for (std::size_t b = 0; b < nb; ++b)
    if (q.block_weight[static_cast<Eigen::Index>(b)] > 0.0) order.push_back(b);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return q.block_weight[static_cast<Eigen::Index>(x)] > q.block_weight[static_cast<Eigen::Index>(y)];
  });
  // The n_max heaviest pairs lie among the n_max + 1 heaviest blocks, plus any ties with the last of them.
  std::size_t cut = std::min(order.size(), n_max + 1);
  if (cut > 0)
    while (cut < order.size() && q.block_weight[static_cast<Eigen::Index>(order[cut])] ==
                                     q.block_weight[static_cast<Eigen::Index>(order[cut - 1])])
      ++cut;
  std::vector<std::size_t> cand(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
  std::sort(cand.begin(), cand.end());
  struct PairW {
    double w;
    std::size_t i, j;
  };
  std::vector<PairW> pairs;
  for (std::size_t a = 0; a < cand.size(); ++a)
    for (std::size_t b = a + 1; b < cand.size(); ++b)
      pairs.push_back({q.block_weight[static_cast<Eigen::Index>(cand[a])] *
                           q.block_weight[static_cast<Eigen::Index>(cand[b])],
                       cand[a], cand[b]});
  std::sort(pairs.begin(), pairs.end(), [](const PairW& x, const PairW& y) {
    if (x.w != y.w) return x.w > y.w;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });
  if (pairs.size() > n_max) pairs.resize(n_max);
  CosineSeries s;
  s.constant = q.le_mean;
  for (const auto& p : pairs) {
    s.amplitude.push_back(2.0 * p.w);
    s.frequency.push_back(q.block_energy[static_cast<Eigen::Index>(p.j)] -
                          q.block_energy[static_cast<Eigen::Index>(p.i)]);
  }
  return s;
}

inline std::size_t populated_pair_count(const QuenchState& q) {
  std::size_t n = 0;
  for (Eigen::Index b = 0; b < q.block_weight.size(); ++b) n += q.block_weight[b] > 0.0;
  return n * (n - 1) / 2;
}

inline Distribution truncated_le_distribution(const QuenchState& q, std::size_t n_max, const SamplingPlan& plan,
                                              std::size_t n_bins = 0) {
  const auto series = truncated_le_series(q, n_max);
  return histogram(sample_series(std::cref(series), plan), n_bins);
}

}  // namespace quenchstat
