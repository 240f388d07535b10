#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "artist/schedule.hpp"

using namespace artist;

namespace {

// Straight transcription of the DDIM reverse step, kept independent of the library code.
double eq1(double x_t, double eps, double a_t, double a_prev) {
  return std::sqrt(a_prev) * ((x_t - std::sqrt(1.0 - a_t) * eps) / std::sqrt(a_t)) + std::sqrt(1.0 - a_prev) * eps;
}

NoiseSchedule random_schedule(std::mt19937_64& gen, int T) {
  std::uniform_real_distribution<double> u(0.02, 0.3);
  std::vector<double> alphas;
  double a = 1.0;
  for (int t = 1; t <= T; ++t) {
    a *= 1.0 - u(gen) * 0.5;
    alphas.push_back(a);
  }
  return NoiseSchedule::from_alphas(alphas);
}

Tensor random_tensor(std::mt19937_64& gen, Shape shape) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t) v = n(gen);
  return t;
}

}  // namespace

TEST(MakeSchedule, GeometricHalving) {
  ScheduleParams p;
  p.ratio = 0.5;
  const auto s = make_schedule(ScheduleKind::geometric, 2, p);
  EXPECT_EQ(s.alphas(), (std::vector<double>{1.0, 0.5, 0.25}));
}

TEST(MakeSchedule, ConstantAlphaRejected) {
  ScheduleParams p;
  p.alpha = 0.5;
  try {
    make_schedule(ScheduleKind::constant_alpha, 3, p);
    FAIL() << "expected a monotonicity error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_schedule);
  }
}

TEST(MakeSchedule, ScaledLinearMatchesDirectProduct) {
  // Oracle: beta_i = (linspace(sqrt(0.00085), sqrt(0.012), 1000)_i)^2; the T=50 grid takes
  // training indices 1, 21, ..., 981 (0-based), so alpha_50 = prod_{i<=981} (1 - beta_i).
  const double lo = std::sqrt(0.00085), hi = std::sqrt(0.012);
  long double prod = 1.0L;
  for (int i = 0; i <= 981; ++i) {
    const long double s = lo + (hi - lo) * (long double)i / 999.0L;
    prod *= 1.0L - s * s;
  }
  const auto s = make_schedule(ScheduleKind::scaled_linear, 50);
  EXPECT_NEAR(s.alpha(50), double(prod), 1e-12);
  EXPECT_NEAR(s.alpha(50), 0.0057755, 5e-7);
  long double first = 1.0L;
  for (int i = 0; i <= 1; ++i) {
    const long double v = lo + (hi - lo) * (long double)i / 999.0L;
    first *= 1.0L - v * v;
  }
  EXPECT_NEAR(s.alpha(1), double(first), 1e-15);
}

TEST(MakeSchedule, AllFamiliesSatisfyInvariants) {
  for (auto kind : {ScheduleKind::scaled_linear, ScheduleKind::constant_beta, ScheduleKind::geometric, ScheduleKind::cosine}) {
    for (int T : {1, 2, 10, 50, 100}) {
      const auto s = make_schedule(kind, T);
      ASSERT_EQ(s.steps(), T);
      EXPECT_EQ(s.alpha(0), 1.0);
      for (int t = 1; t <= T; ++t) EXPECT_LT(s.alpha(t), s.alpha(t - 1)) << to_string(kind) << " T=" << T;
      EXPECT_GT(s.alpha(T), 0.0);
    }
  }
}

TEST(MakeSchedule, InvalidInputs) {
  EXPECT_THROW(make_schedule(ScheduleKind::scaled_linear, 0), Error);
  EXPECT_THROW(parse_schedule_kind("linear-ish"), Error);
  EXPECT_THROW(NoiseSchedule::from_alphas({0.9, 0.0}), Error);
  EXPECT_THROW(NoiseSchedule::from_alphas({}), Error);
}

TEST(MakeSchedule, JsonRoundTrip) {
  const auto s = make_schedule(ScheduleKind::cosine, 20);
  EXPECT_EQ(schedule_from_json(s.describe()), s);
}

TEST(Coefficients, IdentityStep) {
  const auto c = coefficients_from_alphas(0.7, 0.7);
  EXPECT_DOUBLE_EQ(c.A, 1.0);
  EXPECT_NEAR(c.B, 0.0, 1e-16);
}

TEST(Coefficients, FinalStepIsX0Predictor) {
  const auto s = NoiseSchedule::from_alphas({0.6, 0.3});
  const auto c = coefficients(s, 1);
  EXPECT_DOUBLE_EQ(c.A, 1.0 / std::sqrt(0.6));
  EXPECT_DOUBLE_EQ(c.B, -std::sqrt(0.4) / std::sqrt(0.6));
}

TEST(Coefficients, EightTenthsOverHalf) {
  // Oracle: evaluate the reverse step at (x=1, eps=0) and (x=0, eps=1).
  const double A = eq1(1.0, 0.0, 0.5, 0.8), B = eq1(0.0, 1.0, 0.5, 0.8);
  const auto c = coefficients_from_alphas(0.8, 0.5);
  EXPECT_NEAR(c.A, A, 1e-15);
  EXPECT_NEAR(c.B, B, 1e-15);
  EXPECT_NEAR(c.A, 1.264911, 1e-6);
  EXPECT_NEAR(c.B, -0.447214, 1e-6);
}

TEST(Coefficients, OutOfRange) {
  const auto s = make_schedule(ScheduleKind::geometric, 3);
  EXPECT_THROW(coefficients(s, 0), Error);
  EXPECT_THROW(coefficients(s, 4), Error);
}

TEST(DdimStep, EqualAlphasGiveIdentityCoefficients) {
  const auto c = coefficients_from_alphas(0.5, 0.5);
  EXPECT_EQ(c.A, 1.0);
  EXPECT_NEAR(c.B, 0.0, 1e-15);
}

TEST(DdimStep, MatchesIndependentEvaluatorAtStep25) {
  std::mt19937_64 gen(25);
  const auto s = make_schedule(ScheduleKind::scaled_linear, 50);
  const Tensor x = random_tensor(gen, {4, 8, 8}), e = random_tensor(gen, {4, 8, 8});
  const Tensor y = ddim_step(x, e, 25, s);
  Tensor ref(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) ref[i] = eq1(x[i], e[i], s.alpha(25), s.alpha(24));
  EXPECT_LE(relative_error(y, ref), 1e-12);
}

TEST(DdimStep, ShapeAndRangeErrors) {
  const auto s = make_schedule(ScheduleKind::geometric, 3);
  EXPECT_THROW(ddim_step(Tensor({3}), Tensor({4}), 1, s), Error);
  EXPECT_THROW(ddim_step(Tensor({3}), Tensor({3}), 0, s), Error);
  EXPECT_THROW(ddim_inverse_step(Tensor({3}), Tensor({3}), 4, s), Error);
}

TEST(DdimStep, AlgebraicIdentityRandomCases) {
  std::mt19937_64 gen(1);
  for (int i = 0; i < 1000; ++i) {
    const int T = 1 + int(gen() % 60);
    const auto s = random_schedule(gen, T);
    const int t = 1 + int(gen() % std::uint64_t(T));
    const Tensor x = random_tensor(gen, {16}), e = random_tensor(gen, {16});
    const auto c = coefficients(s, t);
    ASSERT_GT(c.A, 0.0);
    ASSERT_LE(relative_error(ddim_step(x, e, t, s), linear_combination(c.A, x, c.B, e)), 1e-6) << "case " << i;
  }
}

TEST(DdimInverse, ZeroNoiseAndRoundTrip) {
  std::mt19937_64 gen(2);
  const auto s = make_schedule(ScheduleKind::scaled_linear, 50);
  for (int t = 1; t <= 50; ++t) {
    const Tensor x = random_tensor(gen, {32}), e = random_tensor(gen, {32});
    EXPECT_LE(relative_error(ddim_step(ddim_inverse_step(x, e, t, s), e, t, s), x), 1e-6);
  }
  const auto c = coefficients_from_alphas(0.4, 0.4);
  EXPECT_DOUBLE_EQ(c.A, 1.0);
}

TEST(DdimInverse, FiftyStepChainReturnsToStart) {
  // Oracle: composing inverse steps is the inverse of the composed forward map, whose
  // closed form is x_0 = prod(A) x_50 + sum w_k eps_k.
  std::mt19937_64 gen(3);
  const auto s = make_schedule(ScheduleKind::scaled_linear, 50);
  std::vector<Tensor> eps;
  for (int t = 1; t <= 50; ++t) eps.push_back(random_tensor(gen, {64}));
  const Tensor x0 = random_tensor(gen, {64});
  Tensor x = x0;
  for (int t = 1; t <= 50; ++t) x = ddim_inverse_step(x, eps[std::size_t(t - 1)], t, s);
  const Tensor closed = apply_unrolled(unroll_weights(s, 50), x, eps);
  EXPECT_LT(max_abs_diff(closed, x0), 1e-4);
  for (int t = 50; t >= 1; --t) x = ddim_step(x, eps[std::size_t(t - 1)], t, s);
  EXPECT_LT(max_abs_diff(x, x0), 1e-4);
}

TEST(Unroll, TauZeroTagsEverythingContent) {
  const auto u = unroll_weights(make_schedule(ScheduleKind::scaled_linear, 10), 0);
  for (int k = 1; k <= 10; ++k) EXPECT_EQ(u.segment(k), Segment::content);
  const auto v = unroll_weights(make_schedule(ScheduleKind::scaled_linear, 10), 4);
  for (int k = 1; k <= 10; ++k) EXPECT_EQ(v.segment(k), k <= 4 ? Segment::style : Segment::content);
  EXPECT_THROW(unroll_weights(make_schedule(ScheduleKind::scaled_linear, 10), 11), Error);
}

TEST(Unroll, TwoStepsMatchBasisPropagation) {
  const auto s = NoiseSchedule::from_alphas({0.83, 0.41});
  auto run = [&](double xT, double e1, double e2) {
    const double x1 = eq1(xT, e2, s.alpha(2), s.alpha(1));
    return eq1(x1, e1, s.alpha(1), s.alpha(0));
  };
  for (int tau : {0, 1, 2}) {
    const auto u = unroll_weights(s, tau);
    EXPECT_NEAR(u.leading, run(1, 0, 0), 1e-14);
    EXPECT_NEAR(u.weight(1), run(0, 1, 0), 1e-14);
    EXPECT_NEAR(u.weight(2), run(0, 0, 1), 1e-14);
  }
}

TEST(Unroll, RandomScheduleClosedFormMatchesIteration) {
  std::mt19937_64 gen(4);
  const auto s = random_schedule(gen, 50);
  std::vector<Tensor> eps;
  for (int t = 1; t <= 50; ++t) eps.push_back(random_tensor(gen, {32}));
  const Tensor xT = random_tensor(gen, {32});
  Tensor x = xT;
  for (int t = 50; t >= 1; --t) x = ddim_step(x, eps[std::size_t(t - 1)], t, s);
  EXPECT_LE(relative_error(apply_unrolled(unroll_weights(s, 25), xT, eps), x), 1e-5);
}

TEST(Unroll, EquivalenceForEveryTau) {
  std::mt19937_64 gen(5);
  for (auto kind : {ScheduleKind::scaled_linear, ScheduleKind::cosine, ScheduleKind::constant_beta}) {
    const auto s = make_schedule(kind, 50);
    std::vector<Tensor> eps;
    for (int t = 1; t <= 50; ++t) eps.push_back(random_tensor(gen, {16}));
    const Tensor xT = random_tensor(gen, {16});
    Tensor x = xT;
    for (int t = 50; t >= 1; --t) x = ddim_step(x, eps[std::size_t(t - 1)], t, s);
    for (int tau = 0; tau <= 50; ++tau) ASSERT_LE(relative_error(apply_unrolled(unroll_weights(s, tau), xT, eps), x), 1e-5);
  }
}

TEST(Unroll, WeightsTelescope) {
  // w_k = sigma_{k-1} - sigma_k with sigma_t = sqrt((1 - alpha_t) / alpha_t), scaled by prod A.
  const auto s = make_schedule(ScheduleKind::scaled_linear, 50);
  const auto u = unroll_weights(s, 50);
  auto sigma = [&](int t) { return std::sqrt((1.0 - s.alpha(t)) / s.alpha(t)); };
  for (int k = 1; k <= 50; ++k) EXPECT_NEAR(u.weight(k), sigma(k - 1) - sigma(k), 1e-12);
  EXPECT_NEAR(u.leading, 1.0 / std::sqrt(s.alpha(50)), 1e-9);
}

TEST(CfgCombine, Examples) {
  const Tensor u({3}, std::vector<double>{0.1, -0.2, 0.3}), c({3}, std::vector<double>{1.5, 2.5, -3.5});
  EXPECT_EQ(cfg_combine(u, c, {1.0}), c);
  EXPECT_EQ(cfg_combine(u, c, {0.0}), u);
  const Tensor zero({3});
  EXPECT_LE(relative_error(cfg_combine(zero, c, {7.5}), scaled(c, 7.5)), 1e-15);
  EXPECT_THROW(cfg_combine(Tensor({2}), c, {2.0}), Error);
}

TEST(CfgCombine, AffineInScale) {
  std::mt19937_64 gen(6);
  const Tensor u = random_tensor(gen, {20}), c = random_tensor(gen, {20});
  const Tensor a = cfg_combine(u, c, {2.0}), b = cfg_combine(u, c, {4.0}), m = cfg_combine(u, c, {3.0});
  EXPECT_LE(max_abs_diff(m, linear_combination(0.5, a, 0.5, b)), 1e-12);
}
