#include <gtest/gtest.h>

#include <cmath>

#include "dustflow/measure.hpp"

using namespace dustflow;
using nlohmann::json;

namespace {

LambdaMeasure beta(double a, double b, Mode mode = Mode::Simulation) {
  return validate({{"kind", "beta"}, {"a", a}, {"b", b}}, mode);
}

LambdaMeasure atomic(std::initializer_list<std::pair<double, double>> atoms) {
  json list = json::array();
  for (auto [r, w] : atoms) list.push_back({r, w});
  return validate({{"kind", "atomic"}, {"atoms", list}});
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no dustflow::Error thrown";
  return ErrorCode::InvalidSpec;
}

// Midpoint-rule value of int k(r) r^-2 Lambda(dr) for Beta(a, b), with
// k(x) = int ((1-x) y ^ x) (1-y) y^-2 Lambda(dy). Power substitutions remove
// the endpoint singularities; the kink at y = x / (1-x) is a cell boundary.
double k_integral_riemann(double a, double b, int outer, int inner) {
  // Arguments carry 1 - y separately so nodes near 1 keep their precision.
  auto density = [&](double y, double q) { return std::pow(y, a - 1.0) * std::pow(q, b - 1.0); };
  auto k_of = [&](double x) {
    auto piece = [&](double y, double q) { return std::min((1.0 - x) * y, x) * q / (y * y) * density(y, q); };
    const double knee = std::min(x / (1.0 - x), 1.0);
    double sum = 0.0;
    for (int i = 0; i < inner; ++i) {
      const double s = (i + 0.5) / inner;
      const double y = knee * std::pow(s, 4);
      sum += piece(y, 1.0 - y) * knee * 4.0 * s * s * s / inner;
    }
    // Above the knee: log-spaced up to 1/2, then a quartic map into y = 1.
    const double mid = std::max(knee, 0.5);
    if (knee < 0.5) {
      const double span = std::log(mid / knee);
      for (int i = 0; i < inner; ++i) {
        const double y = knee * std::exp(span * (i + 0.5) / inner);
        sum += piece(y, 1.0 - y) * y * span / inner;
      }
    }
    if (mid < 1.0) {
      for (int i = 0; i < inner; ++i) {
        const double s = (i + 0.5) / inner;
        const double q = (1.0 - mid) * std::pow(1.0 - s, 4);
        sum += piece(1.0 - q, q) * (1.0 - mid) * 4.0 * std::pow(1.0 - s, 3) / inner;
      }
    }
    return sum;
  };
  double total = 0.0;
  for (int i = 0; i < outer; ++i) {
    const double s = (i + 0.5) / outer;
    // Smoothstep map: quadratic contact at both ends.
    const double r = s * s * (3.0 - 2.0 * s);
    const double q = (1.0 - s) * (1.0 - s) * (1.0 + 2.0 * s);
    const double jac = 6.0 * s * (1.0 - s);
    total += k_of(r) / (r * r) * density(r, q) * jac / outer;
  }
  return total;
}

}  // namespace

TEST(Validate, BetaOneAndHalfFlags) {
  const auto m = beta(1.5, 0.5);
  EXPECT_TRUE(m.flags().dust);
  EXPECT_FALSE(m.flags().strong);
  // The h-integrability condition is a > 3/2, strict.
  EXPECT_FALSE(m.flags().h_integrable);
  EXPECT_TRUE(beta(1.75, 0.25).flags().h_integrable);
  EXPECT_TRUE(beta(2.5, 1.0).flags().strong);
}

TEST(Validate, BolthausenSznitmanHasNoDust) {
  EXPECT_EQ(code_of([] { beta(1.0, 1.0); }), ErrorCode::NoDust);
  const auto m = beta(1.0, 1.0, Mode::Analysis);
  EXPECT_FALSE(m.has_dust());
  EXPECT_TRUE(std::isinf(m.h_value()));
  for (int k = 1; k <= 10; ++k) EXPECT_NEAR(lambda_k(m, k), k - 1.0, 1e-12);
}

TEST(Validate, RejectsDegenerateAndMalformedSpecs) {
  EXPECT_EQ(code_of([] { atomic({{1.0, 0.3}}); }), ErrorCode::DegenerateTotalMerge);
  EXPECT_EQ(code_of([] { atomic({{1.5, 0.3}}); }), ErrorCode::InvalidSpec);
  EXPECT_EQ(code_of([] { atomic({{0.0, 0.3}}); }), ErrorCode::InvalidSpec);
  EXPECT_EQ(code_of([] { atomic({{0.5, -1.0}}); }), ErrorCode::InvalidSpec);
  EXPECT_EQ(code_of([] { validate({{"kind", "atomic"}, {"atoms", json::array()}}); }), ErrorCode::EmptyMeasure);
  EXPECT_EQ(code_of([] { validate({{"kind", "kingman"}}); }), ErrorCode::InvalidSpec);
  EXPECT_EQ(code_of([] { validate({{"kind", "beta"}, {"a", 1.5}}); }), ErrorCode::InvalidSpec);
  EXPECT_EQ(code_of([] { beta(-1.0, 0.5); }), ErrorCode::InvalidSpec);
}

TEST(ParseMeasureSpec, ShorthandAndJson) {
  EXPECT_EQ(parse_measure_spec("beta:1.5,0.5"), (json{{"kind", "beta"}, {"a", 1.5}, {"b", 0.5}}));
  EXPECT_EQ(parse_measure_spec("atomic:0.5=1.0,0.25=2"),
            (json{{"kind", "atomic"}, {"atoms", {{0.5, 1.0}, {0.25, 2.0}}}}));
  EXPECT_EQ(parse_measure_spec(R"( {"kind":"beta","a":2,"b":1})")["a"], 2);
  EXPECT_EQ(code_of([] { parse_measure_spec("beta:1.5"); }), ErrorCode::InvalidSpec);
  EXPECT_EQ(code_of([] { parse_measure_spec("beta:x,1"); }), ErrorCode::InvalidSpec);
  EXPECT_EQ(code_of([] { parse_measure_spec("atomic:0.5"); }), ErrorCode::InvalidSpec);
  EXPECT_EQ(code_of([] { parse_measure_spec("nothing"); }), ErrorCode::InvalidSpec);
  EXPECT_EQ(code_of([] { parse_measure_spec("{bad json"); }), ErrorCode::InvalidSpec);
}

TEST(Mixture, RatesAreAdditive) {
  const json spec = {{"kind", "mixture"},
                     {"parts",
                      {{{"weight", 2.0}, {"measure", {{"kind", "beta"}, {"a", 1.5}, {"b", 0.5}}}},
                       {{"weight", 1.0}, {"measure", {{"kind", "atomic"}, {"atoms", {{0.5, 1.0}}}}}}}}};
  const auto m = validate(spec);
  EXPECT_NEAR(h_const(m), 2 * M_PI + 2.0, 1e-12);
  EXPECT_NEAR(lambda_pk(m, 2, 2), 2 * M_PI / 2 + 1.0, 1e-12);
  EXPECT_NEAR(lambda_k(m, 4), 2 * lambda_k(beta(1.5, 0.5), 4) + lambda_k(atomic({{0.5, 1.0}}), 4), 1e-12);
  EXPECT_NEAR(lambda_k_quadrature(m, 4), lambda_k(m, 4), 1e-9 * lambda_k(m, 4));
}

TEST(LambdaPk, Examples) {
  EXPECT_NEAR(lambda_pk(beta(1.5, 0.5), 2, 2), M_PI / 2, 1e-12);
  EXPECT_NEAR(lambda_pk(atomic({{0.5, 2.0}}), 3, 2), 1.0, 1e-15);
  EXPECT_NEAR(lambda_pk(beta(1.5, 0.5), 3, 3), 3 * M_PI / 8, 1e-12);
  EXPECT_EQ(code_of([] { lambda_pk(beta(1.5, 0.5), 3, 1); }), ErrorCode::OutOfRange);
  EXPECT_EQ(code_of([] { lambda_pk(beta(1.5, 0.5), 3, 4); }), ErrorCode::OutOfRange);
}

TEST(LambdaK, Examples) {
  const auto m = beta(1.5, 0.5);
  EXPECT_NEAR(lambda_k(m, 3), 3 * M_PI / 4, 1e-12);
  EXPECT_EQ(lambda_k(m, 1), 0.0);
  EXPECT_EQ(lambda_k(atomic({{0.3, 1.0}}), 1), 0.0);
  EXPECT_NEAR(lambda_k(m, 2), M_PI / 2, 1e-12);
  EXPECT_EQ(code_of([&] { lambda_k(m, 0); }), ErrorCode::OutOfRange);
}

TEST(LambdaK, BinomialSumIdentity) {
  for (const auto& m : {beta(1.5, 0.5), beta(1.75, 0.25), beta(2.5, 1.5), atomic({{0.3, 1.0}, {0.8, 0.5}})}) {
    for (int k = 2; k <= 25; ++k) {
      double sum = 0.0;
      for (int l = 2; l <= k; ++l) sum += std::exp(detail::log_binomial(k, l)) * lambda_pk(m, k, l);
      const double q = lambda_k_quadrature(m, k);
      EXPECT_NEAR(q, sum, 1e-9 * sum) << "k=" << k;
      EXPECT_NEAR(lambda_k(m, k), sum, 1e-9 * sum) << "k=" << k;
    }
  }
}

TEST(LambdaK, MonotoneAndBelowQuadraticBound) {
  for (const auto& m : {beta(1.5, 0.5), beta(1.2, 0.8), beta(3.0, 2.0), atomic({{0.5, 1.0}})}) {
    const double l2 = lambda_k(m, 2);
    for (int k = 2; k < 40; ++k) {
      EXPECT_LT(lambda_k(m, k), lambda_k(m, k + 1)) << k;
      if (k >= 3) EXPECT_LT(lambda_k(m, k), (k - 1.0) * (k - 1.0) * l2) << k;
    }
  }
}

TEST(LambdaK, ClosedFormMatchesQuadratureForBetaTwoMinusAlpha) {
  for (double alpha : {0.2, 0.5, 0.8}) {
    const auto m = beta(2.0 - alpha, alpha);
    for (int k = 2; k <= 20; ++k) {
      const double exact = lambda_k_beta_two_minus_alpha(alpha, k);
      EXPECT_NEAR(lambda_k_quadrature(m, k), exact, 1e-8 * exact) << alpha << " " << k;
    }
  }
}

TEST(LambdaK, GautschiLowerBound) {
  for (double alpha : {0.2, 0.5, 0.8}) {
    const double c = 2 * (1 - alpha) * std::tgamma(1 - alpha) / (alpha * (2 + alpha));
    for (int k = 3; k <= 20; ++k)
      EXPECT_LE(c * std::pow(k + alpha - 1, alpha), lambda_k_beta_two_minus_alpha(alpha, k)) << alpha << " " << k;
  }
}

TEST(HConst, Examples) {
  EXPECT_NEAR(h_const(beta(1.5, 0.5)), M_PI, 1e-12);
  EXPECT_NEAR(h_const(atomic({{0.5, 1.0}})), 2.0, 1e-15);
  EXPECT_EQ(phi_s(beta(1.5, 0.5), 0.0), 0.0);
  EXPECT_NEAR(h_const(beta(1.75, 0.25)), 4.44288, 1e-5);
  EXPECT_NEAR(beta(1.5, 0.5).h_value(), M_PI, 1e-12);
  EXPECT_EQ(code_of([] { phi_s(beta(1.0, 1.0, Mode::Analysis), 1.0); }), ErrorCode::Diverges);
  EXPECT_EQ(code_of([] { phi_s(beta(1.5, 0.5), -1.0); }), ErrorCode::OutOfRange);
}

TEST(PhiS, TelescopingMatchesQuadrature) {
  for (const auto& m : {beta(1.5, 0.5), beta(1.75, 0.25), beta(2.5, 0.7)}) {
    for (int n = 1; n <= 12; ++n) {
      const double tele = phi_s(m, n);
      EXPECT_NEAR(phi_s_quadrature(m, n), tele, 1e-9 * tele) << n;
    }
    // Non-integer arguments interpolate monotonically.
    EXPECT_LT(phi_s(m, 1.0), phi_s(m, 1.5));
    EXPECT_LT(phi_s(m, 1.5), phi_s(m, 2.0));
  }
}

TEST(NLambda, BetaOneAndHalf) {
  const auto m = beta(1.5, 0.5);
  const auto t = n_lambda(m, 20);
  ASSERT_TRUE(t.n_lambda);
  EXPECT_EQ(*t.n_lambda, 5);
  EXPECT_NEAR(t.lambda[3], 0.9375 * M_PI, 1e-12);
  EXPECT_NEAR(t.lambda[4], 1.09375 * M_PI, 1e-12);
  EXPECT_FALSE(t.near_tie);
  EXPECT_EQ(code_of([&] { n_lambda(m, 4); }), ErrorCode::CapExceeded);
  EXPECT_EQ(code_of([&] { n_lambda(m, 2); }), ErrorCode::OutOfRange);
}

TEST(NLambda, AtLeastThree) {
  for (const auto& m : {beta(1.5, 0.5), beta(1.1, 0.9), beta(1.9, 0.1), beta(4.0, 1.0), atomic({{0.5, 1.0}}),
                        atomic({{0.01, 1.0}}), atomic({{0.99, 1.0}})}) {
    const auto t = n_lambda(m, 400);
    EXPECT_GE(*t.n_lambda, 3);
    EXPECT_GT(*t.n_lambda, std::sqrt(t.h / t.lambda[1]));
  }
}

TEST(SmallTimeFunctions, BoundaryValues) {
  for (const auto& m : {beta(1.5, 0.5), atomic({{0.5, 1.0}})}) {
    EXPECT_EQ(h_fn(m, 0.0), 0.0);
    EXPECT_EQ(k_fn(m, 0.0), 0.0);
    EXPECT_EQ(k_fn(m, 1.0), 0.0);
  }
  EXPECT_NEAR(h_fn(atomic({{0.5, 1.0}}), 0.25), 1.0, 1e-15);
  // h(1) = int r^-1 Lambda(dr) = H.
  EXPECT_NEAR(h_fn(beta(1.5, 0.5), 1.0), M_PI, 1e-9);
  EXPECT_EQ(code_of([] { h_fn(beta(1.5, 0.5), 1.5); }), ErrorCode::OutOfRange);
}

TEST(SmallTimeFunctions, KFunctionOnAtom) {
  // Single atom at a: k(x) = ((1-x) a ^ x) (1-a) a^-2.
  const auto m = atomic({{0.5, 1.0}});
  for (double x : {0.1, 0.3, 0.5, 0.9})
    EXPECT_NEAR(k_fn(m, x), std::min((1 - x) * 0.5, x) * 0.5 / 0.25, 1e-14) << x;
}

TEST(KIntegral, MatchesRiemannOracle) {
  const auto m = beta(1.75, 0.25);
  const double value = k_integral(m);
  EXPECT_NEAR(value, 4.72455, 1e-4);
  const double oracle = k_integral_riemann(1.75, 0.25, 1500, 1500);
  EXPECT_NEAR(value, oracle, 1e-4 * oracle);
}

TEST(KIntegral, RequiresHIntegrability) {
  EXPECT_EQ(code_of([] { k_integral(beta(1.5, 0.5)); }), ErrorCode::DivergentIntegral);
  EXPECT_EQ(code_of([] { k_integral(beta(1.0, 1.0, Mode::Analysis)); }), ErrorCode::Diverges);
}

TEST(Truncation, AtomicExamples) {
  const auto m = atomic({{0.5, 1.0}});
  EXPECT_NEAR(tail_rate(m, 0.25), 4.0, 1e-15);
  EXPECT_EQ(trunc_mass(m, 0.25), 0.0);
  EXPECT_EQ(tail_rate(m, 0.75), 0.0);
  EXPECT_NEAR(trunc_mass(m, 0.75), 4.0, 1e-15);
}

TEST(Truncation, BetaSmallDeltaSeries) {
  const auto m = beta(1.5, 0.5);
  // int_0^d r^-1.5 (1-r)^-1.5 dr = 2 sqrt(d) (1 + d/2 + ...).
  EXPECT_NEAR(trunc_mass(m, 1e-4), 0.0200010000750062, 1e-12);
  EXPECT_NEAR(trunc_mass(m, 1e-4), 0.02, 1e-5);
  EXPECT_NEAR(tail_rate(m, 1e-3) * std::sqrt(1e-3), 2.0, 0.05);
  EXPECT_LT(trunc_mass(m, 1e-6), trunc_mass(m, 1e-5));
  EXPECT_GT(tail_rate(m, 1e-6), tail_rate(m, 1e-5));
  EXPECT_EQ(code_of([&] { tail_rate(m, 0.0); }), ErrorCode::OutOfRange);
  EXPECT_EQ(code_of([&] { trunc_mass(m, 1.0); }), ErrorCode::OutOfRange);
}

TEST(Truncation, SplitsTheFirstMoment) {
  // int_(0,d] r^-1 + int_(d,1) r^-1 = H, and trunc_mass dominates the lower part.
  const auto m = beta(1.5, 0.5);
  const double d = 1e-3;
  EXPECT_NEAR(jump_size_moment(m, 0.0, d) + jump_size_moment(m, d, 1.0), M_PI, 1e-9);
  EXPECT_GE(trunc_mass(m, d), jump_size_moment(m, 0.0, d));
}
