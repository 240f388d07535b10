#include <gtest/gtest.h>

#include <algorithm>

#include "artist/eval/metrics.hpp"
#include "artist/trajectory.hpp"
#include "support.hpp"

using namespace artist;
using artist::testing::default_schedule;
using artist::testing::throws_code;
using artist::testing::toy_latent;

namespace {

/// Coefficient of eps_k in x_0, found by pushing a unit perturbation at step k alone through the sampler.
std::vector<double> propagated_weights(const NoiseSchedule& s) {
  const int T = s.steps();
  std::vector<double> w;
  for (int k = 1; k <= T; ++k) {
    Tensor x({1});
    for (int t = T; t >= 1; --t) x = ddim_step(x, Tensor({1}, std::vector<double>{t == k ? 1.0 : 0.0}), t, s);
    w.push_back(x[0]);
  }
  return w;
}

TrajectoryCurves sweep_seed(const Denoiser& be, const NoiseSchedule& s, std::uint64_t seed, const std::string& prompt,
                            const std::vector<int>& taus) {
  const InversionRecord rec = invert(toy_latent(seed), "", s, be, seed);
  const FeatureStyleMetric style(be, s);
  return empirical_sweep(rec, prompt, taus, s, be, structure_distance, style, {7.5, seed});
}

}  // namespace

TEST(Theoretical, ZeroAtTauZero) {
  const auto c = theoretical_curves(default_schedule(), {0});
  EXPECT_EQ(c.style_mass[0], 0.0);
  EXPECT_EQ(c.content_mass[0], 0.0);
}

TEST(Theoretical, NonDecreasingAndFinite) {
  for (auto kind : {ScheduleKind::scaled_linear, ScheduleKind::cosine, ScheduleKind::geometric}) {
    for (auto agg : {Aggregation::quadrature, Aggregation::linear}) {
      const auto c = theoretical_curves(make_schedule(kind, 50), {}, agg);
      ASSERT_EQ(c.taus.size(), 51u);
      for (std::size_t i = 1; i < c.taus.size(); ++i) {
        EXPECT_GE(c.style_mass[i], c.style_mass[i - 1]);
        EXPECT_GE(c.content_mass[i], c.content_mass[i - 1]);
        EXPECT_TRUE(std::isfinite(c.style_mass[i]) && std::isfinite(c.content_mass[i]));
      }
    }
  }
}

TEST(Theoretical, MatchesBasisPropagation) {
  const auto s = default_schedule();
  const std::vector<double> w = propagated_weights(s);
  const auto quad = theoretical_curves(s);
  const auto lin = theoretical_curves(s, {}, Aggregation::linear);
  double abs_sum = 0.0, sq_sum = 0.0;
  for (int tau = 1; tau <= 50; ++tau) {
    abs_sum += std::abs(w[std::size_t(tau - 1)]);
    sq_sum += w[std::size_t(tau - 1)] * w[std::size_t(tau - 1)];
    EXPECT_NEAR(quad.style_mass[std::size_t(tau)], abs_sum, 1e-9 * abs_sum) << tau;
    EXPECT_NEAR(quad.content_mass[std::size_t(tau)], std::sqrt(sq_sum), 1e-9 * std::sqrt(sq_sum)) << tau;
    EXPECT_NEAR(lin.content_mass[std::size_t(tau)], abs_sum, 1e-9 * abs_sum) << tau;
  }
}

TEST(Theoretical, StyleGrowsFasterOverUpperRange) {
  const auto s = default_schedule();
  std::vector<int> taus;
  for (int t = 10; t <= 50; ++t) taus.push_back(t);
  const auto c = theoretical_curves(s, taus);
  const GrowthFit fs = fit_growth_exponent(c.taus, c.style_mass);
  const GrowthFit fc = fit_growth_exponent(c.taus, c.content_mass);
  EXPECT_GT(fs.exponent, fc.exponent);
}

TEST(Theoretical, PureFunctionOfSchedule) {
  const auto a = theoretical_curves(default_schedule());
  const auto b = theoretical_curves(default_schedule());
  EXPECT_EQ(a.style_mass, b.style_mass);
  EXPECT_EQ(a.content_mass, b.content_mass);
  EXPECT_TRUE(throws_code([] { theoretical_curves(default_schedule(), {51}); }, ErrorCode::out_of_range));
}

TEST(TauGrid, TenEvenValues) {
  EXPECT_EQ(default_tau_grid(50), (std::vector<int>{5, 10, 15, 20, 25, 30, 35, 40, 45, 50}));
  EXPECT_EQ(default_tau_grid(3), (std::vector<int>{1, 2, 3}));
}

TEST(Fit, RecoversPowerLaws) {
  std::vector<double> taus, id, sq;
  for (int t = 5; t <= 50; t += 5) {
    taus.push_back(t);
    id.push_back(t);
    sq.push_back(double(t) * t);
  }
  const GrowthFit f1 = fit_growth_exponent(taus, id), f2 = fit_growth_exponent(taus, sq);
  EXPECT_NEAR(f1.exponent, 1.0, 1e-9);
  EXPECT_NEAR(f1.r2, 1.0, 1e-12);
  EXPECT_NEAR(f2.exponent, 2.0, 1e-9);
  EXPECT_NEAR(f2.r2, 1.0, 1e-12);
  std::vector<double> scaled;
  for (double t : taus) scaled.push_back(3.5 * std::pow(t, 1.7));
  const GrowthFit f3 = fit_growth_exponent(taus, scaled);
  EXPECT_NEAR(f3.exponent, 1.7, 1e-9);
  EXPECT_NEAR(std::exp(f3.intercept), 3.5, 1e-9);
}

TEST(Fit, DropsNonPositiveWithWarning) {
  const GrowthFit f = fit_growth_exponent(std::vector<double>{0, 1, 2, 3, 4, 5}, std::vector<double>{0, 1, -4, 9, 16, 25});
  EXPECT_EQ(f.used, 4u);
  EXPECT_EQ(f.warnings.size(), 2u);
  EXPECT_NEAR(f.exponent, 2.0, 1e-9);
}

TEST(Fit, RejectsDegenerateInput) {
  EXPECT_TRUE(throws_code([] { fit_growth_exponent(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}); },
                          ErrorCode::invalid_argument));
  EXPECT_TRUE(throws_code([] { fit_growth_exponent(std::vector<double>{2, 2, 2, 2}, std::vector<double>{1, 2, 3, 4}); },
                          ErrorCode::invalid_argument));
  EXPECT_TRUE(throws_code([] { fit_growth_exponent(std::vector<double>{1, 2}, std::vector<double>{1}); },
                          ErrorCode::invalid_argument));
}

TEST(Distances, StructureDistanceIgnoresChannelAffine) {
  const Tensor a = randn({4, 16, 16}, 1);
  Tensor b = a;
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = 3.0 * b[i] + double(i / 256);
  EXPECT_LT(structure_distance(a, b), 1e-9);
  EXPECT_GT(structure_distance(a, randn({4, 16, 16}, 2)), 0.5);
}

TEST(Distances, FeatureStyleMetricBasics) {
  const auto be = make_toy_backend(0);
  const FeatureStyleMetric m(*be, default_schedule());
  const Tensor a = randn(be->latent_shape(), 1), b = randn(be->latent_shape(), 2, 2.0);
  EXPECT_EQ(m(a, a), 0.0);
  EXPECT_GT(m(a, b), 0.0);
  EXPECT_NEAR(m(a, b), m(b, a), 1e-15);
  EXPECT_EQ(m.stats(a).size(), 18u);
}

TEST(Empirical, TauZeroIsReconstruction) {
  const auto be = make_toy_backend(0);
  const auto s = default_schedule(10);
  const auto c = sweep_seed(*be, s, 0, "pixel art", {0});
  EXPECT_EQ(c.empirical_content[0], 0.0);
  EXPECT_EQ(c.empirical_style[0], 0.0);
}

TEST(Empirical, FullTauIsFarthestFromReconstruction) {
  const auto be = make_toy_backend(0);
  const auto s = default_schedule();
  const auto taus = default_tau_grid(50);
  const auto c = sweep_seed(*be, s, 0, "an oil painting", taus);
  const auto peak = std::max_element(c.empirical_content.begin(), c.empirical_content.end());
  EXPECT_EQ(peak - c.empirical_content.begin(), std::ptrdiff_t(taus.size() - 1));
}

TEST(Empirical, TauAtTIsPlainSampling) {
  const auto be = make_toy_backend(0);
  const auto s = default_schedule(8);
  const InversionRecord rec = invert(toy_latent(1), "", s, *be);
  const Tensor pure = sample_ddim(rec.latents.back(), 8, "pixel art", 7.5, s, *be);
  const auto c = empirical_sweep(rec, "pixel art", {8}, s, *be, rms_diff, FeatureStyleMetric(*be, s));
  EXPECT_DOUBLE_EQ(c.empirical_content[0], rms_diff(pure, replay_reconstruct(rec, s)));
}

TEST(Empirical, ContentCurveMonotoneOverSixteenSeeds) {
  const auto be = make_toy_backend(0);
  const auto s = default_schedule(20);
  const auto taus = default_tau_grid(20);
  const auto& styles = eval::default_style_set();
  std::vector<TrajectoryCurves> runs;
  for (std::uint64_t seed = 0; seed < 16; ++seed) runs.push_back(sweep_seed(*be, s, seed, styles[seed % styles.size()], taus));
  const auto mean = average_curves(runs);
  const auto [lo, hi] = std::minmax_element(mean.empirical_content.begin(), mean.empirical_content.end());
  const double band = 0.1 * (*hi - *lo);
  for (std::size_t i = 1; i < taus.size(); ++i)
    EXPECT_GE(mean.empirical_content[i], mean.empirical_content[i - 1] - band) << taus[i];
  EXPECT_GT(mean.empirical_content.back(), mean.empirical_content.front());
  EXPECT_GT(mean.empirical_style.back(), mean.empirical_style.front());
}

TEST(Empirical, RejectsTauOutOfRange) {
  const auto be = make_toy_backend(0);
  const auto s = default_schedule(4);
  const InversionRecord rec = invert(toy_latent(0), "", s, *be);
  EXPECT_TRUE(throws_code([&] { empirical_sweep(rec, "x", {5}, s, *be, rms_diff, rms_diff); }, ErrorCode::out_of_range));
}

TEST(Average, RequiresSharedGrid) {
  TrajectoryCurves a, b;
  a.taus = {1, 2};
  a.empirical_content = {1, 2};
  a.empirical_style = {3, 4};
  b = a;
  b.empirical_content = {3, 6};
  const auto m = average_curves({a, b});
  EXPECT_EQ(m.empirical_content, (std::vector<double>{2, 4}));
  EXPECT_EQ(m.empirical_style, (std::vector<double>{3, 4}));
  b.taus = {1, 3};
  EXPECT_TRUE(throws_code([&] { average_curves({a, b}); }, ErrorCode::invalid_argument));
  EXPECT_TRUE(throws_code([] { average_curves({}); }, ErrorCode::invalid_argument));
}
