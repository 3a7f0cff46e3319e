#include <gtest/gtest.h>

#include <sstream>

#include "dustflow/mc.hpp"

using namespace dustflow;

namespace {

const LambdaMeasure& beta15() {
  static const LambdaMeasure m = validate(parse_measure_spec("beta:1.5,0.5"));
  return m;
}

struct SumAcc {
  stats::Moments mom;
  void merge(const SumAcc& o) { mom.merge(o.mom); }
};

}  // namespace

TEST(ReplicateReduce, IndependentOfWorkerCount) {
  auto run = [](unsigned jobs) {
    return replicate_reduce(5000, jobs, SumAcc{}, [](std::uint64_t rep, SumAcc& acc) {
      CounterRng rng(11, rep);
      acc.mom.add(rng.exponential(1.0));
    });
  };
  const auto a = run(1), b = run(2), c = run(4);
  EXPECT_EQ(a.mom.n, 5000.0);
  EXPECT_EQ(a.mom.mean, b.mom.mean);
  EXPECT_EQ(a.mom.mean, c.mom.mean);
  EXPECT_EQ(a.mom.m2, c.mom.m2);
}

TEST(ReplicateReduce, PropagatesExceptions) {
  EXPECT_THROW(replicate_reduce(1000, 2, SumAcc{},
                                [](std::uint64_t rep, SumAcc&) {
                                  if (rep == 700) fail(ErrorCode::OutOfRange, "boom");
                                }),
               Error);
}

TEST(Estimate, TimeZeroRowIsEmptyState) {
  const auto tab = estimate(beta15(), {0.0, 0.5}, 64, 3, {1e-3, 5, 1, 0});
  for (int k = 1; k <= 3; ++k) {
    EXPECT_EQ(tab.mean(0, k), 0.0);
    EXPECT_EQ(tab.se(0, k), 0.0);
  }
  EXPECT_EQ(tab.rows[0].dust.mean, 1.0);
  EXPECT_GT(tab.mean(1, 1), 0.0);
  EXPECT_GE(tab.mean(1, 1), tab.mean(1, 2));
  // Ranked masses plus dust account for all mass in every replicate.
  EXPECT_NEAR(tab.rows[1].atom_mass.mean + tab.rows[1].dust.mean, 1.0, 1e-12);
}

TEST(Estimate, Validation) {
  EXPECT_THROW(estimate(beta15(), {0.5}, 1, 2, {}), Error);
  EXPECT_THROW(estimate(beta15(), {0.5}, 10, 0, {}), Error);
  EXPECT_THROW(estimate(beta15(), {0.5, 0.2}, 10, 2, {}), Error);
  try {
    estimate(validate(parse_measure_spec("beta:1.0,1.0")), {0.5}, 10, 2, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoDust);
  }
}

TEST(Estimate, DeterministicAcrossJobs) {
  const auto a = estimate(beta15(), {0.25, 1.0}, 600, 3, {1e-3, 9, 1, 0});
  const auto b = estimate(beta15(), {0.25, 1.0}, 600, 3, {1e-3, 9, 3, 0});
  std::ostringstream sa, sb;
  write_estimate_csv(sa, a);
  write_estimate_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Estimate, CsvLayout) {
  const auto tab = estimate(beta15(), {0.5}, 16, 2, {1e-3, 1, 1, 0});
  std::ostringstream os;
  write_estimate_csv(os, tab);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line.rfind("# {", 0), 0u);
  const auto config = nlohmann::json::parse(line.substr(2));
  EXPECT_EQ(config.at("reps"), 16);
  EXPECT_EQ(config.at("t_grid"), nlohmann::json({0.5}));
  std::getline(is, line);
  EXPECT_EQ(line, "t,k,mean,stderr,reps,delta,trunc_budget");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 2);
  const auto j = estimate_json(tab);
  EXPECT_EQ(j.at("rows").size(), 1u);
  EXPECT_EQ(j.at("rows")[0].at("W").size(), 2u);
}

TEST(Estimate, TruncationBudgetShrinksWithDelta) {
  // Halving delta changes E[W_1(t)] by no more than the two budgets plus noise.
  const double t = 0.5;
  double prev_mean = 0, prev_budget = 0;
  for (double delta : {4e-3, 2e-3, 1e-3}) {
    const auto tab = estimate(beta15(), {t}, 20'000, 1, {delta, 3, 0, 0});
    if (prev_budget > 0) {
      EXPECT_LT(tab.budget(0), prev_budget);
      EXPECT_LE(std::abs(tab.mean(0, 1) - prev_mean), prev_budget + tab.budget(0) + 8 * tab.se(0, 1));
    }
    prev_mean = tab.mean(0, 1);
    prev_budget = tab.budget(0);
  }
}

TEST(FitSlope, ExactExponentialAndInsufficientSignal) {
  EstimateTable tab;
  tab.k_max = 2;
  tab.reps = 100;
  for (int i = 0; i <= 8; ++i) {
    const double t = 0.5 * i;
    tab.t_grid.push_back(t);
    GridMoments row(2);
    // Two samples whose mean is the target and whose stderr is 1% of it.
    const double w1 = 1.0 - 0.6 * std::exp(-1.25 * t), w2 = 0.3 * std::exp(-2.0 * t);
    for (double s : {-1.0, 1.0}) {
      row.W[0].add(w1 + s * 0.01 * (1.0 - w1));
      row.W[1].add(w2 + s * 0.01 * w2);
    }
    tab.rows.push_back(row);
  }
  EXPECT_NEAR(fit_slope(tab, 1, 1.0, 4.0).slope, -1.25, 1e-12);
  const auto f2 = fit_slope(tab, 2, 0.0, 4.0);
  EXPECT_NEAR(f2.slope, -2.0, 1e-12);
  EXPECT_EQ(f2.points, 9u);
  try {
    fit_slope(tab, 2, 3.0, 4.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientSignal);
  }
}

TEST(PredictedDecayRate, CutoffAtN) {
  const auto rates = n_lambda(beta15(), 50);
  ASSERT_EQ(*rates.n_lambda, 5);
  EXPECT_DOUBLE_EQ(predicted_decay_rate(rates, 1), lambda_k(beta15(), 2));
  EXPECT_DOUBLE_EQ(predicted_decay_rate(rates, 2), lambda_k(beta15(), 2));
  EXPECT_DOUBLE_EQ(predicted_decay_rate(rates, 3), lambda_k(beta15(), 3));
  EXPECT_DOUBLE_EQ(predicted_decay_rate(rates, 4), lambda_k(beta15(), 4));
  EXPECT_DOUBLE_EQ(predicted_decay_rate(rates, 5), M_PI);
  EXPECT_DOUBLE_EQ(predicted_decay_rate(rates, 9), M_PI);
}

TEST(SmallTime, RequiresIntegrabilityForW2) {
  SmallTimeOptions opt;
  opt.reps = 10;
  try {
    small_time_suite(validate(parse_measure_spec("beta:1.25,0.75")), opt, true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConditionUnmet);
  }
}

TEST(SmallTime, RatioArithmetic) {
  const auto c = make_ratio("x", 0.01, 0.0302, 0.0001, 0.01, 1e-5, 3.0, 0.05);
  EXPECT_NEAR(c.ratio, 3.02, 1e-12);
  EXPECT_NEAR(c.stat_se, 0.01, 1e-12);
  EXPECT_NEAR(c.trunc_err, 1e-3, 1e-12);
  EXPECT_TRUE(c.pass);
  EXPECT_FALSE(make_ratio("x", 0.01, 0.04, 0.0, 0.01, 0.0, 3.0, 0.05).pass);
}

TEST(Generator, TestFunctions) {
  const GeneratorFunction id{TestFunction::Identity, 0}, ha{TestFunction::HA, 0.3}, ka{TestFunction::KA, 0.5};
  EXPECT_EQ(id(0.4), 0.4);
  EXPECT_EQ(ha(0.2), 0.2);
  EXPECT_EQ(ha(0.6), 0.3);
  EXPECT_EQ(ka(0.2), 0.2);
  EXPECT_DOUBLE_EQ(ka(0.8), 0.1);
}

TEST(Generator, QuadratureIntegratesTruncatedRate) {
  const RateQuadrature rule(beta15(), 1e-3);
  double total = 0, first = 0;
  for (std::size_t i = 0; i < rule.r.size(); ++i) {
    total += rule.weight[i];
    first += rule.weight[i] * rule.r[i];
  }
  EXPECT_NEAR(total, tail_rate(beta15(), 1e-3), 1e-8 * total);
  EXPECT_NEAR(first, jump_size_moment(beta15(), 1e-3), 1e-8);
}

TEST(Generator, TimeZeroSides) {
  GeneratorOptions opt;
  opt.reps = 4000;
  opt.delta = 1e-3;
  opt.h = 0.01;
  // At t = 0 the right side integrates K^1 = r over the truncated rate.
  const auto r1 = generator_check(beta15(), 1, 0.0, {TestFunction::Identity, 0}, opt);
  EXPECT_NEAR(r1.rhs, jump_size_moment(beta15(), 1e-3), 1e-8);
  EXPECT_EQ(r1.rhs_se, 0.0);
  const auto r2 = generator_check(beta15(), 2, 0.0, {TestFunction::Identity, 0}, opt);
  EXPECT_EQ(r2.rhs, 0.0);
  EXPECT_LT(std::abs(r2.lhs), 0.1);
  EXPECT_THROW(generator_check(beta15(), 1, 0.01, {}, opt), Error);
}

TEST(UniformPositions, SmallRunPassesAndSkipsAtZero) {
  const auto rep = uniform_positions_check(beta15(), 0.5, 4000, {1e-3, 2, 0, 0});
  EXPECT_GT(rep.samples, 3000u);
  EXPECT_TRUE(rep.pass) << uniform_positions_json(rep).dump();
  EXPECT_TRUE(uniform_positions_check(beta15(), 0.0, 10, {}).skipped);
}
