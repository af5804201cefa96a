#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "quenchstat/statistics.hpp"

using namespace quenchstat;

namespace {

/// Synthetic quench state with prescribed nondegenerate levels and weights.
QuenchState synthetic(const std::vector<double>& energies, const std::vector<double>& weights) {
  const auto n = static_cast<Eigen::Index>(energies.size());
  auto e = std::make_shared<EigenData>();
  e->energies = Eigen::Map<const Eigen::VectorXd>(energies.data(), n);
  e->vectors = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i <= n; ++i) e->block_starts.push_back(static_cast<std::size_t>(i));
  Eigen::VectorXd psi(n);
  for (Eigen::Index i = 0; i < n; ++i) psi[i] = std::sqrt(weights[static_cast<std::size_t>(i)]);
  psi.normalize();
  return compute_weights(psi, std::shared_ptr<const EigenData>(e));
}

double integral(const Distribution& d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d.n_bins(); ++i) s += d.density[i] * d.bin_width(i);
  return s;
}

}  // namespace

TEST(Sampling, DeterministicAndInWindow) {
  SamplingPlan plan;
  plan.t_max = 12.5;
  plan.n_samples = 1000;
  plan.seed = 77;
  const auto a = sample_times(plan);
  const auto b = sample_times(plan);
  EXPECT_EQ(a, b);
  for (double t : a) {
    EXPECT_GE(t, 0.0);
    EXPECT_LT(t, plan.t_max);
  }
  plan.seed = 78;
  EXPECT_NE(a, sample_times(plan));
}

TEST(Sampling, ConstantAndCosine) {
  SamplingPlan plan;
  plan.t_max = 1000.0;
  const auto c = sample_series([](double) { return 0.25; }, plan);
  for (double x : c) EXPECT_EQ(x, 0.25);
  const auto s = sample_series([](double t) { return std::cos(1.3 * t); }, plan);
  EXPECT_LT(std::abs(compute_moments(s).mean), 3.0 * std::sqrt(0.5 / static_cast<double>(s.size())));
}

TEST(Sampling, PlanWindowFromSmallestPopulatedGap) {
  // level 2 is unpopulated and must not set the gap
  const auto q = synthetic({0.0, 0.5, 0.5001, 2.0}, {0.6, 0.3, 0.0, 0.1});
  const auto plan = make_plan(q);
  EXPECT_NEAR(plan.delta_min, 0.5, 1e-12);
  EXPECT_NEAR(plan.t_max, 100.0 * 2.0 * std::numbers::pi / 0.5, 1e-9);
  EXPECT_EQ(plan.n_samples, kDefaultSamples);
  const auto single = synthetic({0.0, 1.0}, {1.0, 0.0});
  EXPECT_EQ(make_plan(single).delta_min, 0.0);
  EXPECT_GT(make_plan(single).t_max, 0.0);
}

TEST(Moments, MatchNaiveOnBenignData) {
  std::mt19937_64 rng(3);
  std::gamma_distribution<double> g(2.0, 1.0);
  std::vector<double> x(50000);
  for (auto& v : x) v = g(rng);
  const auto m = compute_moments(x);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double c2 = 0.0, c3 = 0.0, c4 = 0.0;
  for (double v : x) {
    const double d = v - mean;
    c2 += d * d;
    c3 += d * d * d;
    c4 += d * d * d * d;
  }
  const double n = static_cast<double>(x.size());
  c2 /= n;
  c3 /= n;
  c4 /= n;
  EXPECT_NEAR(m.mean, mean, 1e-12);
  EXPECT_NEAR(m.variance, c2, 1e-10);
  EXPECT_NEAR(m.skewness, c3 / std::pow(c2, 1.5), 1e-9);
  EXPECT_NEAR(m.excess_kurtosis, c4 / (c2 * c2) - 3.0, 1e-9);
  EXPECT_NEAR(m.signal_to_noise, mean / std::sqrt(c2), 1e-10);
  // gamma(2) has skewness sqrt 2 and excess kurtosis 3
  EXPECT_NEAR(m.skewness, std::sqrt(2.0), 0.1);
}

TEST(Moments, MergeOfHalvesReproducesFullRun) {
  SamplingPlan plan;
  plan.t_max = 500.0;
  const auto s = sample_series([](double t) { return 0.7 + 0.2 * std::cos(t) + 0.05 * std::sin(3.1 * t); }, plan);
  const double shift = s.front();
  MomentAccumulator full(shift), first(shift), second(shift);
  full.add(s);
  const std::size_t half = s.size() / 2;
  first.add(std::span<const double>(s).first(half));
  second.add(std::span<const double>(s).subspan(half));
  first.merge(second);
  const auto a = full.moments(), b = first.moments();
  EXPECT_EQ(a.n, b.n);
  EXPECT_NEAR(a.mean, b.mean, 1e-12);
  EXPECT_NEAR(a.variance, b.variance, 1e-12);
  EXPECT_NEAR(a.skewness, b.skewness, 1e-12);
  EXPECT_NEAR(a.excess_kurtosis, b.excess_kurtosis, 1e-12);
  EXPECT_EQ(a.min, b.min);
  EXPECT_EQ(a.max, b.max);
  MomentAccumulator other(shift + 1.0);
  EXPECT_THROW(first.merge(other), ParameterError);
}

TEST(Histogram, InvariantsAndErrors) {
  EXPECT_THROW(histogram(std::vector<double>{}), ParameterError);
  EXPECT_THROW(histogram(std::vector<double>{1.0}), ParameterError);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(kDefaultSamples);
  for (auto& v : x) v = u(rng);
  const auto d = histogram(x);
  EXPECT_GE(d.n_bins(), kMinAutoBins);
  EXPECT_LE(d.n_bins(), kMaxAutoBins);
  EXPECT_NEAR(integral(d), 1.0, 1e-12);
  for (double v : d.density) {
    EXPECT_GE(v, 0.0);
    EXPECT_NEAR(v, 1.0, 0.05);
  }
  EXPECT_EQ(d.ecdf(-1.0), 0.0);
  EXPECT_EQ(d.ecdf(2.0), 1.0);
  double prev = 0.0;
  for (double t = 0.0; t <= 1.0; t += 0.01) {
    EXPECT_GE(d.ecdf(t), prev);
    prev = d.ecdf(t);
  }
}

TEST(Histogram, TwoValuesAndConstant) {
  std::vector<double> x;
  for (int i = 0; i < 300; ++i) x.push_back(1.0);
  for (int i = 0; i < 100; ++i) x.push_back(3.0);
  const auto d = histogram(x);
  std::vector<std::size_t> occupied;
  for (std::size_t i = 0; i < d.n_bins(); ++i)
    if (d.counts[i] > 0) occupied.push_back(i);
  ASSERT_EQ(occupied.size(), 2u);
  EXPECT_NEAR(d.density[occupied[0]] / d.density[occupied[1]], 3.0, 1e-12);

  const auto c = histogram(std::vector<double>(10, 0.5));
  ASSERT_EQ(c.n_bins(), 1u);
  EXPECT_EQ(c.counts[0], 10u);
  EXPECT_NEAR(integral(c), 1.0, 1e-12);
  EXPECT_TRUE(std::isinf(c.moments.signal_to_noise));
}

TEST(Histogram, FixedBinCount) {
  const std::vector<double> x{0.0, 0.1, 0.2, 0.9, 1.0};
  const auto d = histogram(x, 4);
  ASSERT_EQ(d.n_bins(), 4u);
  EXPECT_EQ(d.counts[0], 3u);
  EXPECT_EQ(d.counts[3], 2u);
  EXPECT_EQ(d.edges.front(), 0.0);
  EXPECT_EQ(d.edges.back(), 1.0);
}

TEST(Ecdf, ArcsineLawMatchesClosedForm) {
  const double p0 = 0.86, p1 = 0.13;
  const auto s = two_mode_support(p0, p1);
  SamplingPlan plan;
  plan.t_max = 1e4;
  const auto x = sample_series([&](double t) { return s.le_mean + 2.0 * p0 * p1 * std::cos(0.77 * t); }, plan);
  const auto d = histogram(x);
  EXPECT_LT(ecdf_sup_distance(d, [&](double v) { return two_mode_cdf(p0, p1, v); }), 0.01);
  const auto m = d.moments;
  EXPECT_NEAR(std::sqrt(m.variance), two_mode_variance(p0, p1), 1e-3);
  EXPECT_NEAR(m.variance, (s.x2 - s.x1) * (s.x2 - s.x1) / 8.0, 1e-3);
}

TEST(Ecdf, TwoSampleDistance) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  std::vector<double> a(20000), b(20000), c(20000);
  for (auto& v : a) v = g(rng);
  for (auto& v : b) v = g(rng);
  for (auto& v : c) v = g(rng) + 1.0;
  const auto da = histogram(a), db = histogram(b), dc = histogram(c);
  EXPECT_LT(ecdf_sup_distance(da, db), 0.02);
  EXPECT_NEAR(ecdf_sup_distance(da, dc), 0.383, 0.03);  // 2 Phi(1/2) - 1
  EXPECT_EQ(ecdf_sup_distance(da, da), 0.0);
}

TEST(TwoMode, SupportAndNormalization) {
  const double p0 = 0.86, p1 = 0.13;
  const auto s = two_mode_support(p0, p1);
  EXPECT_NEAR(s.x1, p0 * p0 + p1 * p1 - 2 * p0 * p1, 1e-15);
  EXPECT_NEAR(s.x2, p0 * p0 + p1 * p1 + 2 * p0 * p1, 1e-15);
  EXPECT_EQ(two_mode_density(p0, p1, s.x1 - 0.01), 0.0);
  EXPECT_EQ(two_mode_density(p0, p1, s.x2 + 0.01, TwoModeForm::kPrinted), 0.0);
  // substitution x = mid + half cos(theta) removes the endpoint singularities
  auto integrate = [&](TwoModeForm f) {
    const double mid = 0.5 * (s.x1 + s.x2), half = 0.5 * (s.x2 - s.x1);
    const int n = 200000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const double th = std::numbers::pi * (i + 0.5) / n;
      acc += two_mode_density(p0, p1, mid + half * std::cos(th), f) * half * std::sin(th);
    }
    return acc * std::numbers::pi / n;
  };
  EXPECT_NEAR(integrate(TwoModeForm::kArcsine), 1.0, 1e-9);
  EXPECT_NEAR(integrate(TwoModeForm::kPrinted), 1.0, 1e-9);
  EXPECT_NEAR(two_mode_variance(p0, p1), 4.0 * 0.86 * 0.13 / std::sqrt(8.0), 1e-15);
  EXPECT_NEAR(two_mode_variance(p0, p1), 0.158, 1e-3);
  EXPECT_EQ(two_mode_variance(0.5, 0.0), 0.0);
  EXPECT_THROW(two_mode_density(0.0, 0.5, 0.1), ParameterError);
}

TEST(TwoMode, SymmetricForEqualWeights) {
  const double p = 0.5;
  const auto s = two_mode_support(p, p);
  EXPECT_NEAR(s.x1, 0.0, 1e-15);
  const double mid = 0.5 * (s.x1 + s.x2);
  for (double d : {0.05, 0.2, 0.4})
    EXPECT_NEAR(two_mode_density(p, p, mid - d), two_mode_density(p, p, mid + d), 1e-12);
}

TEST(TruncatedEcho, FullPairCountReproducesEcho) {
  const auto q = synthetic({0.0, 0.7, 1.9, 2.3, 4.1}, {0.5, 0.2, 0.15, 0.1, 0.05});
  const auto all = truncated_le_series(q, populated_pair_count(q));
  for (double t : {0.0, 0.3, 7.7, 123.4}) EXPECT_NEAR(all(t), loschmidt_echo(q, t), 1e-14);
  SamplingPlan plan = make_plan(q, 50000, 9);
  const auto full = histogram(loschmidt_series(q, sample_times(plan)));
  const auto trunc = truncated_le_distribution(q, 1000, plan);
  EXPECT_LT(ecdf_sup_distance(full, trunc), 1e-3);
  EXPECT_THROW(truncated_le_series(q, 0), ParameterError);
}

TEST(TruncatedEcho, KeepsLargestPairsWithTies) {
  // weights 0.4, 0.2, 0.2, 0.2: pair (0,1), (0,2), (0,3) tie at 0.08
  const auto q = synthetic({0.0, 1.0, 2.0, 3.5}, {0.4, 0.2, 0.2, 0.2});
  const auto s = truncated_le_series(q, 2);
  ASSERT_EQ(s.amplitude.size(), 2u);
  EXPECT_NEAR(s.amplitude[0], 2.0 * 0.08, 1e-15);
  EXPECT_NEAR(s.frequency[0], 1.0, 1e-15);
  EXPECT_NEAR(s.frequency[1], 2.0, 1e-15);
  EXPECT_NEAR(s.constant, q.le_mean, 1e-15);
  // an unpopulated level contributes no pair
  const auto z = synthetic({0.0, 1.0, 2.0}, {0.7, 0.0, 0.3});
  EXPECT_EQ(populated_pair_count(z), 1u);
  EXPECT_EQ(truncated_le_series(z, 10).amplitude.size(), 1u);
}

TEST(Peaks, BimodalAndUnimodal) {
  SamplingPlan plan;
  plan.t_max = 1e4;
  const auto arc = histogram(sample_series([](double t) { return std::cos(t); }, plan));
  const auto peaks = find_peaks(arc);
  ASSERT_GE(peaks.size(), 2u);
  EXPECT_NEAR(std::min(peaks[0].position, peaks[1].position), -1.0, 0.02);
  EXPECT_NEAR(std::max(peaks[0].position, peaks[1].position), 1.0, 0.02);

  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  std::vector<double> x(kDefaultSamples);
  for (auto& v : x) v = g(rng);
  const auto gauss = histogram(x);
  EXPECT_EQ(find_peaks(gauss).size(), 1u);
  EXPECT_LT(std::abs(gauss.moments.skewness), 0.05);
  EXPECT_LT(std::abs(gauss.moments.excess_kurtosis), 0.05);
}

TEST(Fits, LogLinearRecoversExponential) {
  std::mt19937_64 rng(4);
  std::exponential_distribution<double> ex(40.0);
  std::vector<double> x(kDefaultSamples);
  for (auto& v : x) v = ex(rng);
  const auto fit = log_linear_fit(histogram(x));
  EXPECT_GT(fit.r2, 0.98);
  EXPECT_NEAR(fit.slope, -40.0, 2.0);
}

TEST(Sampling, EchoMeanMatchesBlockPurity) {
  const auto q = synthetic({0.0, 0.7, 1.9, 2.3, 4.1}, {0.5, 0.2, 0.15, 0.1, 0.05});
  const auto le = loschmidt_series(q, sample_times(make_plan(q, kDefaultSamples, 42)));
  const auto m = compute_moments(le);
  EXPECT_LT(std::abs(m.mean - q.le_mean), 5.0 * std::sqrt(m.variance) / std::sqrt(static_cast<double>(le.size())));
  EXPECT_LE(m.variance, q.le_mean * q.le_mean + 1e-3);
}

TEST(Sampling, ManyComparableCosinesAreGaussian) {
  std::vector<double> e, w;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int i = 0; i < 60; ++i) {
    e.push_back(u(rng));
    w.push_back(1.0);
  }
  std::sort(e.begin(), e.end());
  const auto q = synthetic(e, w);
  const auto s = truncated_le_series(q, 60);  // 60 pair cosines of equal amplitude
  SamplingPlan plan;
  plan.t_max = 1e5;
  const auto m = compute_moments(sample_series(std::cref(s), plan));
  EXPECT_LT(std::abs(m.excess_kurtosis), 0.5);
}
