#pragma once

// Lambda-measures on [0,1) and their deterministic rate functionals.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "dustflow/error.hpp"
#include "dustflow/quadrature.hpp"

namespace dustflow {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Density r^(a-1) (1-r)^(b-1) dr on (0,1).
struct BetaDensity {
  double a = 1.0;
  double b = 1.0;
};

struct Atom {
  double r = 0.0;
  double w = 0.0;
};

/// Finite sum of weighted point masses.
struct AtomList {
  std::vector<Atom> atoms;
};

/// One weighted piece of a (possibly mixed) measure. Mixtures are flattened
/// into a list of these at construction.
struct Component {
  double weight = 1.0;
  std::variant<BetaDensity, AtomList> shape;
};

struct ConditionFlags {
  bool dust = false;         // H(Lambda) finite
  bool strong = false;       // int r^-2 Lambda(dr) finite
  bool h_integrable = false; // int h(r) r^-2 Lambda(dr) finite
};

enum class Mode { Simulation, Analysis };

/// An immutable finite measure on (0,1). Built only through `validate`.
class LambdaMeasure {
 public:
  const std::vector<Component>& components() const { return components_; }
  const ConditionFlags& flags() const { return flags_; }
  double total_mass() const { return total_mass_; }
  /// H(Lambda); +inf for analysis-only measures without dust.
  double h_value() const { return h_; }
  const nlohmann::json& spec() const { return spec_; }
  bool has_dust() const { return flags_.dust; }

  /// Power p such that k_Lambda(x) ~ x^p near zero (used by quadrature).
  double k_fn_exponent() const {
    double p = 1.0;
    for (const auto& c : components_) {
      if (const auto* beta = std::get_if<BetaDensity>(&c.shape)) p = std::min(p, beta->a - 1.0);
    }
    return p;
  }

 private:
  friend LambdaMeasure validate(const nlohmann::json& spec, Mode mode);
  std::vector<Component> components_;
  ConditionFlags flags_;
  double total_mass_ = 0.0;
  double h_ = 0.0;
  nlohmann::json spec_;
};

namespace detail {

inline double beta_fn(double x, double y) {
  return std::exp(std::lgamma(x) + std::lgamma(y) - std::lgamma(x + y));
}

inline double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

/// P(Binomial(k, r) >= 2) with q = 1 - r supplied separately; accurate for
/// small r where the complement form cancels.
inline double binomial_at_least_two(int k, double r, double q) {
  if (k < 2) return 0.0;
  if (q <= 0.0) return 1.0;
  if (k * r < 0.5) {
    double term = 0.5 * k * (k - 1.0) * r * r * std::pow(q, k - 2);
    double sum = 0.0;
    for (int j = 2; j <= k; ++j) {
      sum += term;
      term *= (k - j) / (j + 1.0) * (r / q);
      if (term < sum * 1e-18) break;
    }
    return sum;
  }
  const double lq = std::log(q);
  return 1.0 - std::exp(k * lq) - k * r * std::exp((k - 1) * lq);
}

inline double log_one_minus(double r, double q) { return r < 0.5 ? std::log1p(-r) : std::log(q); }

inline void collect_components(const nlohmann::json& j, double weight,
                               std::vector<Component>& out) {
  if (!j.is_object() || !j.contains("kind")) fail(ErrorCode::InvalidSpec, "measure spec needs a \"kind\"");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "beta") {
    const double a = j.at("a").get<double>();
    const double b = j.at("b").get<double>();
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
      fail(ErrorCode::InvalidSpec, "beta parameters must satisfy a > 0, b > 0");
    out.push_back({weight, BetaDensity{a, b}});
  } else if (kind == "atomic") {
    AtomList list;
    for (const auto& pair : j.at("atoms")) {
      if (!pair.is_array() || pair.size() != 2) fail(ErrorCode::InvalidSpec, "atoms are [r, w] pairs");
      const double r = pair[0].get<double>();
      const double w = pair[1].get<double>();
      if (!(w > 0.0) || !std::isfinite(w)) fail(ErrorCode::InvalidSpec, "atom weights must be positive");
      if (r >= 1.0) {
        if (r == 1.0)
          fail(ErrorCode::DegenerateTotalMerge, "atom at r = 1: Lambda({1}) > 0 merges all blocks at once");
        fail(ErrorCode::InvalidSpec, "atom positions must lie in (0,1)");
      }
      if (!(r > 0.0)) fail(ErrorCode::InvalidSpec, "atom positions must lie in (0,1); Kingman part unsupported");
      list.atoms.push_back({r, w});
    }
    if (list.atoms.empty()) fail(ErrorCode::EmptyMeasure, "atomic measure has no atoms");
    out.push_back({weight, std::move(list)});
  } else if (kind == "mixture") {
    const auto& parts = j.at("parts");
    if (!parts.is_array() || parts.empty()) fail(ErrorCode::EmptyMeasure, "mixture has no parts");
    for (const auto& part : parts) {
      const double w = part.at("weight").get<double>();
      if (!(w > 0.0) || !std::isfinite(w)) fail(ErrorCode::InvalidSpec, "mixture weights must be positive");
      collect_components(part.at("measure"), weight * w, out);
    }
  } else {
    fail(ErrorCode::InvalidSpec, "unknown measure kind \"" + kind + "\"");
  }
}

}  // namespace detail

/// Builds a measure from its JSON description and classifies it.
///
/// Simulation mode rejects measures without dust (H = inf); analysis mode
/// keeps them with `flags().dust == false`.
inline LambdaMeasure validate(const nlohmann::json& spec, Mode mode = Mode::Simulation) {
  LambdaMeasure m;
  try {
    detail::collect_components(spec, 1.0, m.components_);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidSpec, std::string("malformed measure spec: ") + e.what());
  }
  m.spec_ = spec;
  m.flags_ = {true, true, true};
  for (const auto& c : m.components_) {
    if (const auto* beta = std::get_if<BetaDensity>(&c.shape)) {
      m.total_mass_ += c.weight * detail::beta_fn(beta->a, beta->b);
      m.flags_.dust = m.flags_.dust && beta->a > 1.0;
      m.flags_.strong = m.flags_.strong && beta->a > 2.0;
      m.flags_.h_integrable = m.flags_.h_integrable && beta->a > 1.5;
      m.h_ += beta->a > 1.0 ? c.weight * detail::beta_fn(beta->a - 1.0, beta->b) : kInf;
    } else {
      for (const auto& atom : std::get<AtomList>(c.shape).atoms) {
        m.total_mass_ += c.weight * atom.w;
        m.h_ += c.weight * atom.w / atom.r;
      }
    }
  }
  m.flags_.strong = m.flags_.strong && m.flags_.dust;
  m.flags_.h_integrable = m.flags_.h_integrable && m.flags_.dust;
  if (!(m.total_mass_ > 0.0)) fail(ErrorCode::EmptyMeasure, "measure has zero total mass");
  if (!m.flags_.dust && mode == Mode::Simulation)
    fail(ErrorCode::NoDust, "no dust: H(Lambda) diverges");
  return m;
}

/// Parses either a JSON document or the shorthand forms `beta:a,b` and
/// `atomic:r1=w1,r2=w2,...`.
inline nlohmann::json parse_measure_spec(std::string_view text) {
  auto trimmed = text;
  while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.front()))) trimmed.remove_prefix(1);
  if (!trimmed.empty() && trimmed.front() == '{') {
    try {
      return nlohmann::json::parse(trimmed);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::InvalidSpec, std::string("measure JSON: ") + e.what());
    }
  }
  const auto colon = trimmed.find(':');
  if (colon == std::string_view::npos) fail(ErrorCode::InvalidSpec, "measure must be JSON or kind:params");
  const std::string kind(trimmed.substr(0, colon));
  std::string_view rest = trimmed.substr(colon + 1);
  auto to_double = [](std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      fail(ErrorCode::InvalidSpec, "bad number \"" + std::string(s) + "\"");
    return v;
  };
  std::vector<std::string_view> fields;
  while (true) {
    const auto comma = rest.find(',');
    fields.push_back(rest.substr(0, comma));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (kind == "beta") {
    if (fields.size() != 2) fail(ErrorCode::InvalidSpec, "beta:a,b expects two numbers");
    return {{"kind", "beta"}, {"a", to_double(fields[0])}, {"b", to_double(fields[1])}};
  }
  if (kind == "atomic") {
    nlohmann::json atoms = nlohmann::json::array();
    for (auto f : fields) {
      const auto eq = f.find('=');
      if (eq == std::string_view::npos) fail(ErrorCode::InvalidSpec, "atomic atoms are r=w");
      atoms.push_back({to_double(f.substr(0, eq)), to_double(f.substr(eq + 1))});
    }
    return {{"kind", "atomic"}, {"atoms", atoms}};
  }
  fail(ErrorCode::InvalidSpec, "unknown measure kind \"" + kind + "\"");
}

/// Integral over (lo, hi] of g(r, 1-r) Lambda(dr), where g(r) ~ r^p0 at 0.
/// Beta pieces go through endpoint-regularised Gauss-Kronrod; atoms are summed.
template <class G>
double integrate(const LambdaMeasure& m, G&& g, double p0, double lo = 0.0, double hi = 1.0,
                 double tol = quad::kRelTol) {
  double total = 0.0;
  for (const auto& c : m.components()) {
    if (const auto* beta = std::get_if<BetaDensity>(&c.shape)) {
      total += c.weight * quad::beta_weighted(beta->a, beta->b, g, p0, lo, hi, tol);
    } else {
      for (const auto& atom : std::get<AtomList>(c.shape).atoms) {
        if (atom.r > lo && atom.r <= hi) total += c.weight * atom.w * g(atom.r, 1.0 - atom.r);
      }
    }
  }
  return total;
}

namespace detail {
inline void require_dust(const LambdaMeasure& m, const char* what) {
  if (!m.has_dust()) fail(ErrorCode::Diverges, std::string(what) + " diverges: no dust (H(Lambda) = inf)");
}
}  // namespace detail

/// lambda_{p,k}(Lambda) = int r^(k-2) (1-r)^(p-k) Lambda(dr), 2 <= k <= p.
inline double lambda_pk(const LambdaMeasure& m, int p, int k) {
  if (k < 2 || k > p) fail(ErrorCode::OutOfRange, "lambda_pk requires 2 <= k <= p");
  double total = 0.0;
  for (const auto& c : m.components()) {
    if (const auto* beta = std::get_if<BetaDensity>(&c.shape)) {
      total += c.weight * detail::beta_fn(beta->a + k - 2, beta->b + p - k);
    } else {
      for (const auto& atom : std::get<AtomList>(c.shape).atoms)
        total += c.weight * atom.w * std::pow(atom.r, k - 2) * std::pow(1.0 - atom.r, p - k);
    }
  }
  return total;
}

/// Total merger rate with k blocks, by quadrature of its defining integral.
inline double lambda_k_quadrature(const LambdaMeasure& m, int k) {
  if (k < 1) fail(ErrorCode::OutOfRange, "lambda_k requires k >= 1");
  if (k == 1) return 0.0;
  auto g = [k](double r, double q) { return detail::binomial_at_least_two(k, r, q) / (r * r); };
  return integrate(m, g, 0.0);
}

/// lambda_k for Beta(2-alpha, alpha), alpha in (0,1), in closed form.
inline double lambda_k_beta_two_minus_alpha(double alpha, int k) {
  if (k == 1) return 0.0;
  const double log_ratio = std::lgamma(k + alpha) - std::lgamma(static_cast<double>(k));
  return std::tgamma(1.0 - alpha) * std::exp(log_ratio) * (k - 1.0) * (1.0 - alpha) /
         (alpha * (alpha + k - 1.0));
}

/// Total merger rate with k blocks. Beta pieces use closed forms (the
/// Beta(2-alpha, alpha) formula when it applies, otherwise the positive
/// binomial sum of lambda_{k,l}); atoms are exact.
inline double lambda_k(const LambdaMeasure& m, int k) {
  if (k < 1) fail(ErrorCode::OutOfRange, "lambda_k requires k >= 1");
  if (k == 1) return 0.0;
  double total = 0.0;
  for (const auto& c : m.components()) {
    if (const auto* beta = std::get_if<BetaDensity>(&c.shape)) {
      const double alpha = beta->b;
      if (std::abs(beta->a + beta->b - 2.0) < 1e-15 && alpha > 0.0 && alpha < 1.0) {
        total += c.weight * lambda_k_beta_two_minus_alpha(alpha, k);
      } else {
        double sum = 0.0;
        for (int l = 2; l <= k; ++l)
          sum += std::exp(detail::log_binomial(k, l) + std::lgamma(beta->a + l - 2) +
                          std::lgamma(beta->b + k - l) - std::lgamma(beta->a + beta->b + k - 2));
        total += c.weight * sum;
      }
    } else {
      for (const auto& atom : std::get<AtomList>(c.shape).atoms)
        total += c.weight * atom.w * detail::binomial_at_least_two(k, atom.r, 1.0 - atom.r) /
                 (atom.r * atom.r);
    }
  }
  return total;
}

/// Laplace exponent of the dust subordinator by quadrature.
inline double phi_s_quadrature(const LambdaMeasure& m, double lambda) {
  if (lambda < 0.0) fail(ErrorCode::OutOfRange, "phi_s requires lambda >= 0");
  if (lambda == 0.0) return 0.0;
  detail::require_dust(m, "phi_s");
  auto g = [lambda](double r, double q) {
    return -std::expm1(lambda * detail::log_one_minus(r, q)) / (r * r);
  };
  return integrate(m, g, -1.0);
}

/// phi_S(lambda) = int (1 - (1-r)^lambda) r^-2 Lambda(dr).
/// Integer arguments on beta pieces use the telescoping sum of B(a-1, b+j).
inline double phi_s(const LambdaMeasure& m, double lambda) {
  if (lambda < 0.0) fail(ErrorCode::OutOfRange, "phi_s requires lambda >= 0");
  if (lambda == 0.0) return 0.0;
  detail::require_dust(m, "phi_s");
  const bool integral = lambda == std::floor(lambda) && lambda <= 1e4;
  double total = 0.0;
  for (const auto& c : m.components()) {
    if (const auto* beta = std::get_if<BetaDensity>(&c.shape)) {
      if (integral) {
        double sum = 0.0;
        for (int j = 0; j < static_cast<int>(lambda); ++j) sum += detail::beta_fn(beta->a - 1.0, beta->b + j);
        total += c.weight * sum;
      } else {
        auto g = [lambda](double r, double q) {
          return -std::expm1(lambda * detail::log_one_minus(r, q)) / (r * r);
        };
        total += c.weight * quad::beta_weighted(beta->a, beta->b, g, -1.0, 0.0, 1.0);
      }
    } else {
      for (const auto& atom : std::get<AtomList>(c.shape).atoms)
        total += c.weight * atom.w * -std::expm1(lambda * std::log1p(-atom.r)) / (atom.r * atom.r);
    }
  }
  return total;
}

/// H(Lambda) = phi_S(1).
inline double h_const(const LambdaMeasure& m) { return phi_s(m, 1.0); }

struct RateTable {
  int k_max = 0;
  std::vector<double> lambda;  // lambda[k-1] = lambda_k, k = 1..k_max
  double h = 0.0;
  std::optional<int> n_lambda;  // empty when lambda_{k_max} < H
  bool near_tie = false;        // |lambda_N - H| < 1e-6 H
};

/// lambda_1..lambda_{k_max} and the cutoff index N(Lambda) = min{k : lambda_k >= H}.
inline RateTable rate_table(const LambdaMeasure& m, int k_max) {
  if (k_max < 2) fail(ErrorCode::OutOfRange, "rate table needs k_max >= 2");
  RateTable t;
  t.k_max = k_max;
  t.h = m.has_dust() ? h_const(m) : kInf;
  for (int k = 1; k <= k_max; ++k) {
    t.lambda.push_back(lambda_k(m, k));
    if (!t.n_lambda && t.lambda.back() >= t.h) t.n_lambda = k;
  }
  if (t.n_lambda) t.near_tie = std::abs(t.lambda[*t.n_lambda - 1] - t.h) < 1e-6 * t.h;
  return t;
}

inline RateTable n_lambda(const LambdaMeasure& m, int k_cap) {
  if (k_cap < 3) fail(ErrorCode::OutOfRange, "n_lambda requires k_cap >= 3");
  detail::require_dust(m, "H(Lambda)");
  auto t = rate_table(m, k_cap);
  if (!t.n_lambda)
    fail(ErrorCode::CapExceeded, "lambda_" + std::to_string(k_cap) + " < H(Lambda); raise k_cap");
  return t;
}

/// h_Lambda(x) = int (a ^ x) a^-2 Lambda(da).
inline double h_fn(const LambdaMeasure& m, double x) {
  if (x < 0.0 || x > 1.0) fail(ErrorCode::OutOfRange, "h_fn requires x in [0,1]");
  if (x == 0.0) return 0.0;
  detail::require_dust(m, "h_fn");
  const double below = integrate(m, [](double r, double) { return 1.0 / r; }, -1.0, 0.0, x);
  const double above = x < 1.0 ? integrate(m, [](double r, double) { return 1.0 / (r * r); }, -2.0, x, 1.0) : 0.0;
  return below + x * above;
}

/// k_Lambda(x) = int ((1-x) a ^ x) (1-a) a^-2 Lambda(da).
inline double k_fn(const LambdaMeasure& m, double x, double tol = quad::kRelTol) {
  if (x < 0.0 || x > 1.0) fail(ErrorCode::OutOfRange, "k_fn requires x in [0,1]");
  if (x == 0.0 || x == 1.0) return 0.0;
  detail::require_dust(m, "k_fn");
  const double knee = x / (1.0 - x);  // (1-x) a = x
  const double split = std::min(knee, 1.0);
  const double below = integrate(m, [](double r, double q) { return q / r; }, -1.0, 0.0, split, tol);
  const double above =
      knee < 1.0 ? integrate(m, [](double r, double q) { return q / (r * r); }, -2.0, knee, 1.0, tol) : 0.0;
  return (1.0 - x) * below + x * above;
}

/// int k_Lambda(r) r^-2 Lambda(dr): the small-time constant of E[W_2(t)].
inline double k_integral(const LambdaMeasure& m) {
  detail::require_dust(m, "k_integral");
  if (!m.flags().h_integrable)
    fail(ErrorCode::DivergentIntegral, "int h(r) r^-2 Lambda(dr) diverges, so does the k_Lambda integral");
  const double p0 = m.k_fn_exponent() - 2.0;
  auto g = [&m](double r, double) { return k_fn(m, r, 1e-12) / (r * r); };
  return integrate(m, g, p0, 0.0, 1.0, 1e-10);
}

/// Activity of jumps above delta: int_(delta,1) r^-2 Lambda(dr).
inline double tail_rate(const LambdaMeasure& m, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) fail(ErrorCode::OutOfRange, "delta must lie in (0,1)");
  return integrate(m, [](double r, double) { return 1.0 / (r * r); }, -2.0, delta, 1.0);
}

/// Truncation budget K(delta) = int_(0,delta] (1-r)^-1 r^-1 Lambda(dr).
inline double trunc_mass(const LambdaMeasure& m, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) fail(ErrorCode::OutOfRange, "delta must lie in (0,1)");
  detail::require_dust(m, "trunc_mass");
  return integrate(m, [](double r, double q) { return 1.0 / (r * q); }, -1.0, 0.0, delta);
}

/// int_(lo,hi] r^-1 Lambda(dr): first moment of the jump-size law, unnormalised.
inline double jump_size_moment(const LambdaMeasure& m, double lo, double hi = 1.0) {
  return integrate(m, [](double r, double) { return 1.0 / r; }, -1.0, lo, hi);
}

inline nlohmann::json flags_json(const ConditionFlags& f) {
  return {{"dust", f.dust}, {"strong", f.strong}, {"h_integrable", f.h_integrable}};
}

}  // namespace dustflow
