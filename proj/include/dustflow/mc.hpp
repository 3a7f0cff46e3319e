#pragma once

// Monte-Carlo estimation over replicates of the atom engine, decay-rate
// fits, and the asymptotic checks built on them.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "dustflow/engine.hpp"
#include "dustflow/error.hpp"
#include "dustflow/jumps.hpp"
#include "dustflow/kernels.hpp"
#include "dustflow/measure.hpp"
#include "dustflow/rng.hpp"
#include "dustflow/stats.hpp"
#include "json.hpp"

namespace dustflow {

// ---------------------------------------------------------------------------
// Replicate fan-out

inline constexpr std::size_t kChunkSize = 256;

inline unsigned resolve_jobs(unsigned jobs) {
  if (jobs > 0) return jobs;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

/// Runs fn(rep, acc) for rep in [0, reps) and merges the per-chunk
/// accumulators in chunk order. Chunks are fixed-size, so the result does not
/// depend on the worker count or on scheduling.
template <class Acc, class Fn>
Acc replicate_reduce(std::uint64_t reps, unsigned jobs, const Acc& init, Fn&& fn) {
  const std::size_t chunks = static_cast<std::size_t>((reps + kChunkSize - 1) / kChunkSize);
  std::vector<std::optional<Acc>> parts(chunks);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks || failed.load()) return;
      try {
        Acc acc = init;
        const std::uint64_t lo = c * kChunkSize;
        const std::uint64_t hi = std::min<std::uint64_t>(reps, lo + kChunkSize);
        for (std::uint64_t rep = lo; rep < hi; ++rep) fn(rep, acc);
        parts[c] = std::move(acc);
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
        return;
      }
    }
  };
  const unsigned n = std::min<unsigned>(resolve_jobs(jobs), static_cast<unsigned>(std::max<std::size_t>(chunks, 1)));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  Acc total = init;
  for (auto& p : parts) total.merge(*p);
  return total;
}

/// Concatenating accumulator for per-replicate samples.
template <class T>
struct SampleList {
  std::vector<T> items;
  void merge(const SampleList& o) { items.insert(items.end(), o.items.begin(), o.items.end()); }
};

// ---------------------------------------------------------------------------
// Estimates of E[W_k(t)] and related functionals

struct RunSettings {
  double delta = 1e-3;
  std::uint64_t seed = 0;
  unsigned jobs = 0;
  std::uint64_t stream_offset = 0;  // replicate r uses stream id stream_offset + r
};

struct GridMoments {
  std::vector<stats::Moments> W;  // W_1..W_kmax
  std::vector<stats::Moments> M;  // M_k = W_1 + ... + W_k
  stats::Moments simpson;         // sum_j W_j^2 over all atoms
  stats::Moments dust;
  stats::Moments atom_mass;       // sum_j W_j

  explicit GridMoments(int k_max = 0) : W(k_max), M(k_max) {}

  void merge(const GridMoments& o) {
    for (std::size_t k = 0; k < W.size(); ++k) {
      W[k].merge(o.W[k]);
      M[k].merge(o.M[k]);
    }
    simpson.merge(o.simpson);
    dust.merge(o.dust);
    atom_mass.merge(o.atom_mass);
  }
};

struct EstimateTable {
  std::vector<double> t_grid;
  int k_max = 0;
  std::uint64_t reps = 0;
  double delta = 0.0;
  double trunc_mass = 0.0;  // K(delta); the budget at time t is t K(delta)
  nlohmann::json config;
  std::vector<GridMoments> rows;

  double mean(std::size_t i, int k) const { return rows[i].W[k - 1].mean; }
  double se(std::size_t i, int k) const { return rows[i].W[k - 1].stderr_of_mean(); }
  double budget(std::size_t i) const { return t_grid[i] * trunc_mass; }

  void merge(const EstimateTable& o) {
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].merge(o.rows[i]);
  }
};

namespace detail {

// Sorts the k largest masses of `atoms` into `scratch` (nonincreasing,
// zero-padded) and accumulates one replicate's grid row.
inline void record_row(const AtomSystem& sys, int k_max, std::vector<double>& scratch, GridMoments& row) {
  scratch.clear();
  double simpson = 0.0;
  double total = 0.0;
  for (const auto& a : sys.atoms) {
    scratch.push_back(a.w);
    simpson += a.w * a.w;
    total += a.w;
  }
  const std::size_t n = std::min<std::size_t>(k_max, scratch.size());
  std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(n), scratch.end(),
                    std::greater<>());
  double m = 0.0;
  for (int k = 0; k < k_max; ++k) {
    const double w = static_cast<std::size_t>(k) < n ? scratch[k] : 0.0;
    m += w;
    row.W[k].add(w);
    row.M[k].add(m);
  }
  row.simpson.add(simpson);
  row.dust.add(sys.dust);
  row.atom_mass.add(total);
}

}  // namespace detail

inline EstimateTable estimate(const LambdaMeasure& m, const std::vector<double>& grid, std::uint64_t reps, int k_max,
                              const RunSettings& run) {
  check_grid(grid);
  if (!m.has_dust()) fail(ErrorCode::NoDust, "no dust: H(Lambda) diverges");
  if (reps < 2) fail(ErrorCode::OutOfRange, "estimate requires reps >= 2");
  if (k_max < 1) fail(ErrorCode::OutOfRange, "k_max must be >= 1");
  auto sampler = std::make_shared<const JumpSizeSampler>(m, run.delta);
  EstimateTable init;
  init.t_grid = grid;
  init.k_max = k_max;
  init.reps = reps;
  init.delta = run.delta;
  init.trunc_mass = trunc_mass(m, run.delta);
  init.rows.assign(grid.size(), GridMoments(k_max));
  init.config = {{"measure", m.spec()}, {"t_grid", grid}, {"delta", run.delta},
                 {"seed", run.seed},     {"reps", reps},     {"kmax", k_max}};
  auto table = replicate_reduce(reps, run.jobs, init, [&](std::uint64_t rep, EstimateTable& acc) {
    thread_local std::vector<double> scratch;
    JumpStream stream(sampler, {run.delta, grid.back(), run.seed, run.stream_offset + rep});
    AtomSystem sys;
    drive(sys, stream, grid, [&](std::size_t i, const AtomSystem& s) {
      detail::record_row(s, k_max, scratch, acc.rows[i]);
    });
  });
  return table;
}

inline void write_estimate_csv(std::ostream& os, const EstimateTable& tab) {
  os << "# " << tab.config.dump() << '\n';
  os << "t,k,mean,stderr,reps,delta,trunc_budget\n";
  for (std::size_t i = 0; i < tab.t_grid.size(); ++i) {
    for (int k = 1; k <= tab.k_max; ++k) {
      os << format_real(tab.t_grid[i]) << ',' << k << ',' << format_real(tab.mean(i, k)) << ','
         << format_real(tab.se(i, k)) << ',' << tab.reps << ',' << format_real(tab.delta) << ','
         << format_real(tab.budget(i)) << '\n';
    }
  }
}

inline nlohmann::json estimate_json(const EstimateTable& tab) {
  auto series = [](const stats::Moments& mom) {
    return nlohmann::json{{"mean", mom.mean}, {"stderr", mom.stderr_of_mean()}};
  };
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < tab.t_grid.size(); ++i) {
    const auto& row = tab.rows[i];
    nlohmann::json w = nlohmann::json::array(), mk = nlohmann::json::array();
    for (int k = 0; k < tab.k_max; ++k) {
      w.push_back(series(row.W[k]));
      mk.push_back(series(row.M[k]));
    }
    rows.push_back({{"t", tab.t_grid[i]},
                    {"W", w},
                    {"M", mk},
                    {"simpson", series(row.simpson)},
                    {"dust", series(row.dust)},
                    {"trunc_budget", tab.budget(i)}});
  }
  return {{"config", tab.config}, {"reps", tab.reps}, {"delta", tab.delta}, {"rows", rows}};
}

// ---------------------------------------------------------------------------
// Decay-rate fits

struct SlopeFit {
  int k = 0;
  double t_lo = 0.0, t_hi = 0.0;
  double slope = 0.0;
  double slope_ci_95 = 0.0;
  double intercept = 0.0;
  std::size_t points = 0;
};

inline constexpr double kMaxRelativeSe = 0.25;
inline constexpr std::size_t kMinFitPoints = 4;

/// Weighted fit of log E[W_k(t)] against t over the window (log(1 - E[W_1])
/// for k = 1), using grid points whose relative stderr is below 25%.
inline SlopeFit fit_slope(const EstimateTable& tab, int k, double t_lo, double t_hi) {
  std::vector<double> x, y, w;
  for (std::size_t i = 0; i < tab.t_grid.size(); ++i) {
    const double t = tab.t_grid[i];
    if (t < t_lo - 1e-12 || t > t_hi + 1e-12) continue;
    const double mean = k == 1 ? 1.0 - tab.mean(i, 1) : tab.mean(i, k);
    const double se = tab.se(i, k);
    if (!(mean > 0.0) || !(se > 0.0) || se / mean >= kMaxRelativeSe) continue;
    x.push_back(t);
    y.push_back(std::log(mean));
    const double rel = se / mean;
    w.push_back(1.0 / (rel * rel));
  }
  if (x.size() < kMinFitPoints)
    fail(ErrorCode::InsufficientSignal, "fewer than 4 usable points for k = " + std::to_string(k));
  const auto line = stats::weighted_line(x, y, w);
  return {k, t_lo, t_hi, line.slope, 1.96 * line.slope_se, line.intercept, line.points};
}

/// Rate predicted for the decay of E[W_k] (1 - E[W_1] for k = 1).
inline double predicted_decay_rate(const RateTable& rates, int k) {
  if (k == 1) return rates.lambda[1];
  if (rates.n_lambda && k >= *rates.n_lambda) return rates.h;
  return rates.lambda[k - 1];
}

struct SlopeCheck {
  SlopeFit fit;
  double target = 0.0;     // predicted slope (negative)
  double tolerance = 0.0;  // relative
  bool pass = false;
};

struct LongTimeWindow {
  int k = 1;
  double t_lo = 2.0, t_hi = 5.0;
  double tolerance = 0.1;
};

/// Fits each window on one shared estimate table and compares slopes with
/// the cutoff prediction (lambda_k below N(Lambda), H from N(Lambda) on).
inline std::vector<SlopeCheck> long_time_suite(const EstimateTable& tab, const RateTable& rates,
                                               const std::vector<LongTimeWindow>& windows) {
  std::vector<SlopeCheck> out;
  for (const auto& win : windows) {
    SlopeCheck c;
    c.fit = fit_slope(tab, win.k, win.t_lo, win.t_hi);
    c.target = -predicted_decay_rate(rates, win.k);
    c.tolerance = win.tolerance;
    c.pass = std::abs(c.fit.slope - c.target) <= win.tolerance * std::abs(c.target);
    out.push_back(c);
  }
  return out;
}

inline nlohmann::json slope_checks_json(const std::vector<SlopeCheck>& checks) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : checks)
    out.push_back({{"k", c.fit.k},
                   {"window", {c.fit.t_lo, c.fit.t_hi}},
                   {"slope", c.fit.slope},
                   {"slope_ci_95", c.fit.slope_ci_95},
                   {"intercept", c.fit.intercept},
                   {"points", c.fit.points},
                   {"target", c.target},
                   {"tolerance", c.tolerance},
                   {"pass", c.pass}});
  return out;
}

/// Rate c in the heuristic 1 - E[W_1(t)] ~ C e^{-ct}, reported without a
/// target.
inline double fitted_absorption_rate(const EstimateTable& tab, double t_lo, double t_hi) {
  return -fit_slope(tab, 1, t_lo, t_hi).slope;
}

// ---------------------------------------------------------------------------
// Small-time laws

struct RatioCheck {
  std::string name;
  double t = 0.0;
  double ratio = 0.0;     // estimate / scale
  double stat_se = 0.0;   // statistical stderr of the ratio
  double trunc_err = 0.0; // truncation budget carried to the ratio
  double target = 0.0;
  double tolerance = 0.0; // relative
  bool pass = false;
};

inline RatioCheck make_ratio(std::string name, double t, double mean, double se, double scale, double budget,
                             double target, double tolerance) {
  RatioCheck c{std::move(name), t, mean / scale, se / scale, budget / scale, target, tolerance, false};
  c.pass = std::abs(c.ratio - target) <= tolerance * std::abs(target);
  return c;
}

struct SmallTimeOptions {
  std::vector<double> t_grid{0.005, 0.01, 0.02};
  std::uint64_t reps = 100'000;
  double eps_mass = 1e-4;  // omitted-mass budget at the largest t
  double tolerance_w1 = 0.05;
  double tolerance_simpson = 0.05;
  double tolerance_w2 = 0.15;
  std::uint64_t seed = 1;
  unsigned jobs = 0;
};

/// E[W_1]/t against H, E[sum W^2]/t against lambda_2 and, when the
/// h-integrability condition holds, E[W_2]/(t^2/2) against k_integral.
inline std::vector<RatioCheck> small_time_suite(const LambdaMeasure& m, const SmallTimeOptions& opt,
                                                bool require_w2 = false) {
  const bool w2 = m.flags().h_integrable;
  if (require_w2 && !w2)
    fail(ErrorCode::ConditionUnmet, "E[W_2] small-time law needs int h(r) r^-2 Lambda(dr) < inf");
  const double t_max = *std::max_element(opt.t_grid.begin(), opt.t_grid.end());
  const auto choice = delta_for_budget(m, t_max, opt.eps_mass);
  const auto tab = estimate(m, opt.t_grid, opt.reps, 2, {choice.delta, opt.seed, opt.jobs, 0});
  const double h = h_const(m);
  const double l2 = m.total_mass();
  const double kint = w2 ? k_integral(m) : 0.0;
  std::vector<RatioCheck> out;
  for (std::size_t i = 0; i < tab.t_grid.size(); ++i) {
    const double t = tab.t_grid[i];
    const auto& row = tab.rows[i];
    out.push_back(make_ratio("W1/t", t, row.W[0].mean, row.W[0].stderr_of_mean(), t, tab.budget(i), h,
                             opt.tolerance_w1));
    out.push_back(make_ratio("simpson/t", t, row.simpson.mean, row.simpson.stderr_of_mean(), t, tab.budget(i), l2,
                             opt.tolerance_simpson));
    if (w2)
      out.push_back(make_ratio("W2/(t^2/2)", t, row.W[1].mean, row.W[1].stderr_of_mean(), 0.5 * t * t,
                               tab.budget(i), kint, opt.tolerance_w2));
  }
  return out;
}

inline nlohmann::json ratio_checks_json(const std::vector<RatioCheck>& checks) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : checks)
    out.push_back({{"name", c.name},
                   {"t", c.t},
                   {"ratio", c.ratio},
                   {"stat_se", c.stat_se},
                   {"trunc_err", c.trunc_err},
                   {"target", c.target},
                   {"tolerance", c.tolerance},
                   {"pass", c.pass}});
  return out;
}

// ---------------------------------------------------------------------------
// Generator identity d/dt E[f(W_k(t))] = E[int (f(W_k + K^k) - f(W_k)) r^-2 Lambda(dr)]

enum class TestFunction { Identity, HA, KA };

/// Lipschitz test functions: x, a ^ x, and ((1-x) a) ^ x.
struct GeneratorFunction {
  TestFunction kind = TestFunction::Identity;
  double a = 0.5;

  double operator()(double x) const {
    switch (kind) {
      case TestFunction::Identity: return x;
      case TestFunction::HA: return std::min(a, x);
      case TestFunction::KA: return std::min((1.0 - x) * a, x);
    }
    return x;
  }
};

/// Nodes and weights for int_(delta,1) g(r) r^-2 Lambda(dr).
struct RateQuadrature {
  std::vector<double> r;
  std::vector<double> weight;

  RateQuadrature(const LambdaMeasure& m, double delta) {
    using GL = boost::math::quadrature::gauss<double, 64>;
    auto add_rule = [&](double lo, double hi, auto&& map) {
      const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
      const auto& x = GL::abscissa();
      const auto& w = GL::weights();
      for (std::size_t i = 0; i < x.size(); ++i) {
        for (int sign : {-1, 1}) {
          if (i == 0 && sign == 1 && x[0] == 0.0) continue;
          const auto [ri, wi] = map(mid + sign * half * x[i]);
          r.push_back(ri);
          weight.push_back(half * w[i] * wi);
        }
      }
    };
    for (const auto& c : m.components()) {
      if (const auto* beta = std::get_if<BetaDensity>(&c.shape)) {
        const double a = beta->a, b = beta->b, cw = c.weight;
        const double split = std::max(delta, 0.5);
        if (delta < 0.5) {
          add_rule(std::log(delta), std::log(0.5), [=](double s) {
            const double ri = std::exp(s);
            return std::pair{ri, cw * std::pow(ri, a - 2.0) * std::pow(1.0 - ri, b - 1.0)};
          });
        }
        add_rule(0.0, std::pow(1.0 - split, b), [=](double y) {
          const double ri = 1.0 - std::pow(y, 1.0 / b);
          return std::pair{ri, cw * std::pow(ri, a - 3.0) / b};
        });
      } else {
        for (const auto& atom : std::get<AtomList>(c.shape).atoms) {
          if (atom.r <= delta) continue;
          r.push_back(atom.r);
          weight.push_back(c.weight * atom.w / (atom.r * atom.r));
        }
      }
    }
  }
};

struct GeneratorReport {
  int k = 1;
  double t = 0.0;
  double h = 0.0;
  double lhs = 0.0, lhs_se = 0.0;
  double rhs = 0.0, rhs_se = 0.0;
  double z_score = 0.0;  // (lhs - rhs) / combined se
  bool pass = false;
  double delta = 0.0;
  double tail_bound = 0.0;  // K(delta): rate of omitted mass, reported next to both sides
};

struct GeneratorOptions {
  std::uint64_t reps = 100'000;
  double delta = 1e-3;
  double h = 0.02;
  double z_max = 4.0;
  std::uint64_t seed = 7;
  unsigned jobs = 0;
};

namespace detail {

inline void sorted_masses(const AtomSystem& sys, std::vector<double>& out) {
  out.clear();
  for (const auto& a : sys.atoms) out.push_back(a.w);
  std::sort(out.begin(), out.end(), std::greater<>());
}

}  // namespace detail

inline GeneratorReport generator_check(const LambdaMeasure& m, int k, double t, const GeneratorFunction& f,
                                       const GeneratorOptions& opt) {
  if (k < 1) fail(ErrorCode::OutOfRange, "generator_check requires k >= 1");
  if (t < 0.0) fail(ErrorCode::OutOfRange, "generator_check requires t >= 0");
  if (!(opt.h > 0.0) || (t > 0.0 && opt.h >= t)) fail(ErrorCode::OutOfRange, "step h must lie in (0, t)");
  auto sampler = std::make_shared<const JumpSizeSampler>(m, opt.delta);
  const double f0 = f(0.0);

  // LHS: paired finite difference on one run per replicate.
  const std::vector<double> grid = t > 0.0 ? std::vector<double>{t - opt.h, t + opt.h}
                                           : std::vector<double>{opt.h, 2.0 * opt.h};
  auto lhs = replicate_reduce(opt.reps, opt.jobs, stats::Moments{}, [&](std::uint64_t rep, stats::Moments& acc) {
    JumpStream stream(sampler, {opt.delta, grid.back(), opt.seed, rep});
    AtomSystem sys;
    double fv[2] = {0.0, 0.0};
    drive(sys, stream, grid, [&](std::size_t i, const AtomSystem& s) {
      fv[i] = f(top_k(s, static_cast<std::size_t>(k))[k - 1]);
    });
    acc.add(t > 0.0 ? (fv[1] - fv[0]) / (2.0 * opt.h) : (4.0 * fv[0] - fv[1] - 3.0 * f0) / (2.0 * opt.h));
  });

  // RHS: states at t from independent streams, r-quadrature, Bernoulli(r) flags.
  const RateQuadrature rule(m, opt.delta);
  const std::uint64_t offset = std::uint64_t{1} << 40;
  auto rhs = replicate_reduce(opt.reps, opt.jobs, stats::Moments{}, [&](std::uint64_t rep, stats::Moments& acc) {
    thread_local std::vector<double> W;
    thread_local std::vector<std::uint8_t> Z;
    AtomSystem sys;
    if (t > 0.0) {
      JumpStream stream(sampler, {opt.delta, t, opt.seed, offset + rep});
      drive(sys, stream, {t}, [](std::size_t, const AtomSystem&) {});
    }
    detail::sorted_masses(sys, W);
    Z.assign(W.size(), 0);
    CounterRng flags(opt.seed, stream_key(StreamDomain::Flags, offset + rep));
    const double wk = static_cast<std::size_t>(k) <= W.size() ? W[k - 1] : 0.0;
    const double fw = f(wk);
    double integral = 0.0;
    for (std::size_t q = 0; q < rule.r.size(); ++q) {
      const double r = rule.r[q];
      for (auto& z : Z) z = flags.bernoulli(r);
      const KernelInput in{W, sys.dust, Z, r};
      integral += rule.weight[q] * (f(wk + k_increment(in, k)) - fw);
    }
    acc.add(integral);
  });

  GeneratorReport rep;
  rep.k = k;
  rep.t = t;
  rep.h = opt.h;
  rep.lhs = lhs.mean;
  rep.lhs_se = lhs.stderr_of_mean();
  rep.rhs = rhs.mean;
  rep.rhs_se = rhs.stderr_of_mean();
  const double combined = std::hypot(rep.lhs_se, rep.rhs_se);
  rep.z_score = combined > 0.0 ? (rep.lhs - rep.rhs) / combined : (rep.lhs == rep.rhs ? 0.0 : INFINITY);
  rep.pass = std::abs(rep.z_score) <= opt.z_max;
  rep.delta = opt.delta;
  rep.tail_bound = trunc_mass(m, opt.delta);
  return rep;
}

inline nlohmann::json generator_json(const GeneratorReport& r) {
  return {{"k", r.k},       {"t", r.t},           {"h", r.h},         {"lhs", r.lhs},
          {"lhs_se", r.lhs_se}, {"rhs", r.rhs},   {"rhs_se", r.rhs_se}, {"z", r.z_score},
          {"delta", r.delta}, {"tail_bound", r.tail_bound}, {"pass", r.pass}};
}

// ---------------------------------------------------------------------------
// Uniform positions of the ranked atoms

struct UniformPositionsReport {
  double t = 0.0;
  std::uint64_t samples = 0;
  double ks_statistic = 0.0;
  double ks_p = 1.0;
  double rank_corr = 0.0;
  double rank_corr_bound = 0.0;  // 4 / sqrt(samples)
  bool skipped = false;
  bool pass = true;
};

inline UniformPositionsReport uniform_positions_check(const LambdaMeasure& m, double t, std::uint64_t reps,
                                                      const RunSettings& run, double p_min = 1e-3) {
  UniformPositionsReport rep;
  rep.t = t;
  if (!(t > 0.0)) {
    rep.skipped = true;
    return rep;
  }
  auto sampler = std::make_shared<const JumpSizeSampler>(m, run.delta);
  using Pair = std::pair<double, double>;
  auto pairs = replicate_reduce(reps, run.jobs, SampleList<Pair>{}, [&](std::uint64_t r, SampleList<Pair>& acc) {
    JumpStream stream(sampler, {run.delta, t, run.seed, run.stream_offset + r});
    AtomSystem sys;
    drive(sys, stream, {t}, [&](std::size_t, const AtomSystem& s) {
      if (s.atoms.empty()) return;
      const auto top = top_atoms(s, 1);
      acc.items.emplace_back(top[0].v, top[0].w);
    });
  });
  rep.samples = pairs.items.size();
  if (rep.samples < 2) fail(ErrorCode::InsufficientSignal, "no atoms at time t in any replicate");
  std::vector<double> v, w;
  for (const auto& [vi, wi] : pairs.items) {
    v.push_back(vi);
    w.push_back(wi);
  }
  const auto ks = stats::ks_test(v, [](double x) { return std::clamp(x, 0.0, 1.0); });
  rep.ks_statistic = ks.statistic;
  rep.ks_p = ks.p_value;
  rep.rank_corr = stats::spearman(v, w);
  rep.rank_corr_bound = 4.0 / std::sqrt(static_cast<double>(rep.samples));
  rep.pass = rep.ks_p > p_min && std::abs(rep.rank_corr) < rep.rank_corr_bound;
  return rep;
}

inline nlohmann::json uniform_positions_json(const UniformPositionsReport& r) {
  return {{"t", r.t},
          {"samples", r.samples},
          {"ks_statistic", r.ks_statistic},
          {"ks_p", r.ks_p},
          {"rank_corr", r.rank_corr},
          {"rank_corr_bound", r.rank_corr_bound},
          {"skipped", r.skipped},
          {"pass", r.pass}};
}

}  // namespace dustflow
