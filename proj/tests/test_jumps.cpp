#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <memory>
#include <sstream>

#include "dustflow/jumps.hpp"
#include "dustflow/stats.hpp"

using namespace dustflow;

namespace {

LambdaMeasure beta(double a, double b) { return validate({{"kind", "beta"}, {"a", a}, {"b", b}}); }

// For Beta(1.5, 0.5): r^-1.5 (1-r)^-0.5 has antiderivative -2 sqrt((1-r)/r).
double tail_rate_closed_form(double delta) { return 2.0 * std::sqrt((1.0 - delta) / delta); }

double truncated_cdf_closed_form(double delta, double x) {
  const double top = std::sqrt((1.0 - delta) / delta);
  return (top - std::sqrt((1.0 - x) / x)) / top;
}

std::vector<Jump> collect(const LambdaMeasure& m, const JumpStreamConfig& cfg) {
  JumpStream stream(std::make_shared<const JumpSizeSampler>(m, cfg.delta), cfg);
  std::vector<Jump> out;
  while (auto j = stream.next()) out.push_back(*j);
  return out;
}

}  // namespace

TEST(JumpSizeSampler, RateIsTailRate) {
  for (double d : {0.5, 0.1, 1e-3, 1e-6}) {
    const auto m = beta(1.5, 0.5);
    JumpSizeSampler s(m, d);
    EXPECT_NEAR(s.rate(), tail_rate_closed_form(d), 1e-9 * s.rate()) << d;
    EXPECT_NEAR(s.rate(), tail_rate(m, d), 1e-9 * s.rate()) << d;
  }
  const auto high = beta(1.5, 0.5);
  EXPECT_NEAR(JumpSizeSampler(high, 0.75).rate(), tail_rate_closed_form(0.75), 1e-9);
}

TEST(JumpSizeSampler, RejectsBadDeltaAndZeroActivity) {
  const auto m = beta(1.5, 0.5);
  EXPECT_THROW(JumpSizeSampler(m, 0.0), Error);
  EXPECT_THROW(JumpSizeSampler(m, 1.0), Error);
  const auto atom = validate({{"kind", "atomic"}, {"atoms", {{0.5, 1.0}}}});
  try {
    JumpSizeSampler(atom, 0.75);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroActivity);
  }
}

TEST(JumpSizeSampler, EmpiricalCdfMatchesTruncatedLaw) {
  const double delta = 1e-3;
  JumpSizeSampler s(beta(1.5, 0.5), delta);
  CounterRng rng(11, 0);
  std::vector<double> r(1'000'000);
  for (auto& x : r) {
    x = s.sample(rng.uniform());
    ASSERT_GT(x, delta);
    ASSERT_LT(x, 1.0);
  }
  const auto ks = stats::ks_test(r, [&](double x) { return truncated_cdf_closed_form(delta, x); });
  EXPECT_GT(ks.p_value, 1e-3) << "D=" << ks.statistic;
}

TEST(JumpSizeSampler, InverseIsMonotoneAndAccurate) {
  const double delta = 1e-4;
  JumpSizeSampler s(beta(1.5, 0.5), delta);
  double prev = 0.0;
  double worst = 0.0;
  for (int i = 1; i < 20'000; ++i) {
    const double u = i / 20'000.0;
    const double r = s.sample(u);
    ASSERT_GE(r, prev);
    prev = r;
    worst = std::max(worst, std::abs(truncated_cdf_closed_form(delta, r) - u));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(JumpSizeSampler, AtomsWithWeightsOverRSquared) {
  const auto m = validate({{"kind", "atomic"}, {"atoms", {{0.1, 0.01}, {0.5, 0.5}, {0.05, 1.0}}}});
  JumpSizeSampler s(m, 0.07);
  EXPECT_NEAR(s.rate(), 1.0 + 2.0, 1e-12);
  CounterRng rng(3, 0);
  std::map<double, int> counts;
  const int n = 300'000;
  for (int i = 0; i < n; ++i) ++counts[s.sample(rng.uniform())];
  ASSERT_EQ(counts.size(), 2u);
  EXPECT_NEAR(counts[0.1] / double(n), 1.0 / 3, 4 * std::sqrt(2.0 / 9 / n));
  EXPECT_NEAR(counts[0.5] / double(n), 2.0 / 3, 4 * std::sqrt(2.0 / 9 / n));
}

TEST(JumpStream, DeterministicAndOrdered) {
  const auto m = beta(1.5, 0.5);
  JumpStreamConfig cfg{1e-3, 2.0, 99, 5};
  const auto a = collect(m, cfg);
  const auto b = collect(m, cfg);
  ASSERT_EQ(a.size(), b.size());
  ASSERT_FALSE(a.empty());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].s, b[i].s);
    EXPECT_EQ(a[i].r, b[i].r);
    EXPECT_EQ(a[i].u, b[i].u);
    EXPECT_LE(a[i].s, cfg.horizon);
    if (i) EXPECT_GT(a[i].s, a[i - 1].s);
  }
  cfg.stream_id = 6;
  const auto c = collect(m, cfg);
  EXPECT_NE(c.front().s, a.front().s);
}

TEST(JumpStream, SharedSamplerMustMatchDelta) {
  auto sampler = std::make_shared<const JumpSizeSampler>(beta(1.5, 0.5), 1e-3);
  EXPECT_THROW(JumpStream(sampler, {1e-2, 1.0, 0, 0}), Error);
}

TEST(JumpStream, CountsArePoisson) {
  const auto m = beta(1.5, 0.5);
  const double delta = 0.01, horizon = 0.5;
  auto sampler = std::make_shared<const JumpSizeSampler>(m, delta);
  const double mean = horizon * sampler->rate();
  stats::Moments counts;
  const int reps = 100'000;
  for (int rep = 0; rep < reps; ++rep) {
    JumpStream stream(sampler, {delta, horizon, 17, static_cast<std::uint64_t>(rep)});
    int n = 0;
    while (stream.next()) ++n;
    counts.add(n);
  }
  EXPECT_NEAR(counts.mean, mean, 4 * std::sqrt(mean / reps));
  // Var of the sample variance for Poisson: (mu + 2 mu^2) / n.
  EXPECT_NEAR(counts.variance(), mean, 4 * std::sqrt((mean + 2 * mean * mean) / reps));
}

TEST(JumpStream, PositionsUniformAndIndependentOfSize) {
  const auto m = beta(1.5, 0.5);
  auto sampler = std::make_shared<const JumpSizeSampler>(m, 1e-3);
  std::vector<double> r, u;
  for (std::uint64_t rep = 0; r.size() < 1'000'000; ++rep) {
    JumpStream stream(sampler, {1e-3, 1.0, 23, rep});
    while (auto j = stream.next()) {
      r.push_back(j->r);
      u.push_back(j->u);
    }
  }
  const double n = static_cast<double>(u.size());
  EXPECT_LT(std::abs(stats::spearman(r, u)), 4.0 / std::sqrt(n));
  EXPECT_GT(stats::ks_test(u, [](double x) { return x; }).p_value, 1e-3);
}

TEST(DeltaForBudget, Examples) {
  const auto atom = validate({{"kind", "atomic"}, {"atoms", {{0.5, 1.0}}}});
  for (double T : {0.1, 1.0, 100.0}) {
    const auto c = delta_for_budget(atom, T, 1e-3);
    EXPECT_EQ(c.delta, 0.25);
    EXPECT_EQ(c.trunc_mass, 0.0);
  }
  const auto m = beta(1.5, 0.5);
  const auto one = delta_for_budget(m, 1.0, 0.02);
  EXPECT_EQ(one.delta, std::ldexp(1.0, -14));
  EXPECT_LT(one.delta, 1e-4);
  EXPECT_GT(one.delta, 0.5e-4);
  EXPECT_LE(one.budget, 0.02);
  const auto ten = delta_for_budget(m, 10.0, 0.02);
  EXPECT_EQ(ten.delta, std::ldexp(1.0, -20));
  EXPECT_LT(ten.delta, 1e-6);
  EXPECT_GT(ten.delta, 0.5e-6);
  EXPECT_NEAR(ten.budget, 10.0 * trunc_mass(m, ten.delta), 1e-15);
}

TEST(DeltaForBudget, Errors) {
  const auto m = beta(1.5, 0.5);
  try {
    delta_for_budget(m, 1.0, 1e-12);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BudgetUnreachable);
  }
  EXPECT_THROW(delta_for_budget(m, 1.0, 0.0), Error);
  EXPECT_THROW(delta_for_budget(m, 0.0, 0.1), Error);
}

TEST(JumpTrace, CsvFormat) {
  std::ostringstream os;
  write_jump_trace_csv(os, {{0.125, 0.5, 0.1}, {1.0 / 3, 0.25, 0.75}});
  EXPECT_EQ(os.str(), "s,r,u\n0.125,0.5,0.10000000000000001\n0.33333333333333331,0.25,0.75\n");
}
