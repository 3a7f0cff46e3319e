#pragma once

// Verification criteria shared by the command-line tool and the acceptance
// test binary. Every criterion reads its parameters from a JSON object whose
// defaults are given by default_criterion_config(id); any field may be
// overridden.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "dustflow/engine.hpp"
#include "dustflow/error.hpp"
#include "dustflow/jumps.hpp"
#include "dustflow/kernels.hpp"
#include "dustflow/mc.hpp"
#include "dustflow/measure.hpp"
#include "dustflow/oracle.hpp"
#include "dustflow/rng.hpp"
#include "dustflow/stats.hpp"
#include "json.hpp"

namespace dustflow {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  double seconds = 0.0;
  std::string summary;
  nlohmann::json detail;
  // Set when the check as stated is out of reach of the exact process and a
  // documented substitute check passed instead; `pass` stays false.
  bool known_deviation = false;
  std::string note;
};

inline const nlohmann::json& beta_15_05() {
  static const nlohmann::json spec = {{"kind", "beta"}, {"a", 1.5}, {"b", 0.5}};
  return spec;
}

/// Defaults reproduce the acceptance tolerances and sample sizes.
inline nlohmann::json default_criterion_config(int id) {
  switch (id) {
    case 1: return {{"inputs", 1'000'000}, {"k_max", 10}, {"max_len", 50}, {"tol", 1e-12}, {"seed", 101}};
    case 2:
      return {{"measure", beta_15_05()}, {"trajectories", 1000}, {"jumps", 10'000}, {"delta", 1e-3},
              {"k_replay", 5},          {"tol_mass", 1e-10},    {"tol_replay", 1e-10}, {"seed", 202}};
    case 3: return {{"samples", 1'000'000}, {"tol_identity", 1e-15}, {"seed", 303}};
    case 4:
      return {{"measure", beta_15_05()}, {"n", 10'000}, {"delta", 1e-3}, {"times", {0.5, 1.0, 2.0}},
              {"trajectories", 20},       {"seed", 404}};
    case 5:
      return {{"measure", beta_15_05()}, {"n", 5}, {"t", 0.5}, {"eps_mass", 1e-3}, {"reps", 100'000},
              {"p_min", 1e-3},            {"seed", 505}};
    case 6:
      return {{"measure", beta_15_05()},
              {"t", 0.01},
              {"reps", 100'000},
              {"eps_mass", 1e-4},
              {"tolerance", 0.05},
              {"measure_w2", {{"kind", "beta"}, {"a", 1.75}, {"b", 0.25}}},
              {"t_w2", 0.02},
              {"reps_w2", 1'000'000},
              {"eps_mass_w2", 1e-7},
              {"tolerance_w2", 0.15},
              {"t_conv", 0.0025},
              {"reps_conv", 1'000'000},
              {"eps_mass_conv", 1e-5},
              {"t_w2_conv", 0.005},
              {"reps_w2_conv", 4'000'000},
              {"eps_mass_w2_conv", 1e-8},
              {"seed", 606}};
    case 7:
      return {{"measure", beta_15_05()},
              {"reps", 1'000'000},
              {"delta", 1e-3},
              {"grid", {1.0, 0.25, 6.0}},
              {"windows", {{{"k", 1}, {"t_lo", 2.0}, {"t_hi", 5.0}, {"tolerance", 0.10}},
                           {{"k", 2}, {"t_lo", 2.0}, {"t_hi", 5.0}, {"tolerance", 0.10}},
                           {{"k", 3}, {"t_lo", 1.5}, {"t_hi", 3.5}, {"tolerance", 0.15}}}},
              {"late_windows", {{{"k", 1}, {"t_lo", 4.0}, {"t_hi", 6.0}, {"tolerance", 0.10}},
                                {{"k", 2}, {"t_lo", 4.0}, {"t_hi", 6.0}, {"tolerance", 0.10}},
                                {{"k", 3}, {"t_lo", 4.0}, {"t_hi", 6.0}, {"tolerance", 0.15}}}},
              {"plateau_k", {6, 8}},
              {"plateau_window", {1.0, 2.5}},
              {"seed", 707}};
    case 8: return {{"alphas", {0.2, 0.5, 0.8}}, {"k_max", 20}, {"tol", 1e-8}};
    case 9:
      return {{"measure", beta_15_05()}, {"k", 1}, {"times", {0.0, 0.5}}, {"reps", 100'000}, {"delta", 1e-3},
              {"h", 0.02},                {"h0", 0.01},   {"z_max", 4.0}, {"seed", 909}};
    case 10:
      return {{"measure", beta_15_05()}, {"t", 0.5}, {"reps", 100'000}, {"delta", 1e-3}, {"p_min", 1e-3},
              {"seed", 1010}};
    default: fail(ErrorCode::OutOfRange, "unknown criterion " + std::to_string(id));
  }
}

inline const std::map<int, std::string>& criterion_names() {
  static const std::map<int, std::string> names = {
      {1, "kernel-oracle equivalence"}, {2, "engine invariants"},  {3, "median-map analytics"},
      {4, "paintbox-atom coupling"},    {5, "partition law vs chain"}, {6, "small-time laws"},
      {7, "long-time decay rates"},     {8, "rate numerics"},       {9, "generator identity"},
      {10, "uniform positions"}};
  return names;
}

namespace detail {

inline unsigned jobs_of(const nlohmann::json& c) { return c.value("jobs", 0u); }

inline std::vector<double> expand_grid(const nlohmann::json& g) {
  // [start, step, stop], inclusive
  const double a = g.at(0), h = g.at(1), b = g.at(2);
  std::vector<double> out;
  const auto n = static_cast<long>(std::floor((b - a) / h + 1e-9));
  for (long i = 0; i <= n; ++i) out.push_back(a + h * static_cast<double>(i));
  return out;
}

struct MaxAcc {
  std::vector<double> v;
  void merge(const MaxAcc& o) {
    if (v.size() < o.v.size()) v.resize(o.v.size(), 0.0);
    for (std::size_t i = 0; i < o.v.size(); ++i) v[i] = std::max(v[i], o.v[i]);
  }
};

}  // namespace detail

// 1 -------------------------------------------------------------------------
inline CriterionResult criterion_kernels(const nlohmann::json& c) {
  const std::uint64_t inputs = c.at("inputs");
  const int k_max = c.at("k_max");
  const int max_len = c.at("max_len");
  const double tol = c.at("tol");
  const std::uint64_t seed = c.at("seed");
  // v = {max |K - oracle dW|, max |H - sum K|, min (K + W_k), min H}, negated minima
  auto acc = replicate_reduce(inputs, detail::jobs_of(c), detail::MaxAcc{std::vector<double>(4, 0.0)},
                              [&](std::uint64_t i, detail::MaxAcc& a) {
    CounterRng rng(seed, stream_key(StreamDomain::Flags, i));
    const auto len = static_cast<std::size_t>(1 + rng.below(static_cast<std::uint64_t>(max_len)));
    std::vector<double> W(len);
    double dust = rng.uniform();
    if (rng.bernoulli(0.05)) dust = 1e-300;
    for (auto& w : W) w = rng.bernoulli(0.05) ? 0.0 : rng.exponential(1.0);
    if (len > 1 && rng.bernoulli(0.1)) W[1] = W[0];
    const double total = std::accumulate(W.begin(), W.end(), 0.0);
    for (auto& w : W) w = total > 0.0 ? w * (1.0 - dust) / total : 0.0;
    std::sort(W.begin(), W.end(), std::greater<>());
    double r = rng.uniform();
    if (rng.bernoulli(0.1)) r = r * 1e-3;
    std::vector<std::uint8_t> Z(len);
    for (auto& z : Z) z = rng.bernoulli(r);
    if (rng.bernoulli(0.02)) std::fill(Z.begin(), Z.end(), 1);
    const KernelInput in{W, dust, Z, r};
    const auto after = merge_oracle(in, k_max);
    double sum = 0.0;
    for (int k = 1; k <= k_max; ++k) {
      const double wk = static_cast<std::size_t>(k) <= len ? W[k - 1] : 0.0;
      const double kk = k_increment(in, k);
      const double hk = h_increment(in, k);
      sum += kk;
      a.v[0] = std::max(a.v[0], std::abs(kk - (after[k - 1] - wk)));
      a.v[1] = std::max(a.v[1], std::abs(hk - sum));
      a.v[2] = std::max(a.v[2], -(kk + wk));
      a.v[3] = std::max(a.v[3], -hk);
    }
  });
  CriterionResult res;
  res.detail = {{"inputs", inputs},
                {"max_abs_k_vs_oracle", acc.v[0]},
                {"max_abs_h_vs_sum_k", acc.v[1]},
                {"worst_k_below_minus_wk", acc.v[2]},
                {"worst_negative_h", acc.v[3]},
                {"tol", tol}};
  res.pass = acc.v[0] <= tol && acc.v[1] <= tol && acc.v[2] <= tol && acc.v[3] <= tol;
  char buf[160];
  std::snprintf(buf, sizeof buf, "max|K-dW|=%.3g max|H-sumK|=%.3g (tol %.0e, %llu inputs)", acc.v[0], acc.v[1], tol,
                static_cast<unsigned long long>(inputs));
  res.summary = buf;
  return res;
}

// 2 -------------------------------------------------------------------------
inline CriterionResult criterion_engine(const nlohmann::json& c) {
  const auto m = validate(c.at("measure"));
  const std::uint64_t trajectories = c.at("trajectories");
  const std::uint64_t jumps = c.at("jumps");
  const double delta = c.at("delta");
  const int k_replay = c.at("k_replay");
  const std::uint64_t seed = c.at("seed");
  auto sampler = std::make_shared<const JumpSizeSampler>(m, delta);
  // v = {max mass residual, max replay residual, max |dust - prod(1-r)| / dust}
  auto acc = replicate_reduce(trajectories, detail::jobs_of(c), detail::MaxAcc{std::vector<double>(3, 0.0)},
                              [&](std::uint64_t rep, detail::MaxAcc& a) {
    JumpStream stream(sampler, {delta, kInf, seed, rep});
    AtomSystem sys;
    std::vector<double> replay(k_replay, 0.0);
    std::vector<AtomRecord> ranked;
    std::vector<double> W;
    std::vector<std::uint8_t> Z;
    double log_dust = 0.0;
    for (std::uint64_t n = 0; n < jumps; ++n) {
      const auto j = stream.next();
      if (!j) break;
      ranked = sys.atoms;
      std::sort(ranked.begin(), ranked.end(), ranks_before);
      W.resize(ranked.size());
      Z.resize(ranked.size());
      for (std::size_t i = 0; i < ranked.size(); ++i) {
        W[i] = ranked[i].w;
        Z[i] = in_jump_interval(j->r, j->u, ranked[i].v);
      }
      const KernelInput in{W, sys.dust, Z, j->r};
      for (int k = 1; k <= k_replay; ++k) replay[k - 1] += k_increment(in, k);
      apply_jump_fast(sys, *j);
      log_dust += std::log1p(-j->r);
      a.v[0] = std::max(a.v[0], std::abs(sys.atom_mass() + sys.dust - 1.0));
    }
    const auto top = top_k(sys, static_cast<std::size_t>(k_replay));
    for (int k = 0; k < k_replay; ++k) a.v[1] = std::max(a.v[1], std::abs(top[k] - replay[k]));
    a.v[2] = std::max(a.v[2], std::abs(sys.dust - std::exp(log_dust)) / sys.dust);
  });
  const double tol_mass = c.at("tol_mass"), tol_replay = c.at("tol_replay");
  CriterionResult res;
  res.detail = {{"trajectories", trajectories},   {"jumps", jumps},
                {"max_mass_residual", acc.v[0]},  {"max_replay_residual", acc.v[1]},
                {"max_rel_dust_vs_exp_minus_s", acc.v[2]}, {"tol_mass", tol_mass}, {"tol_replay", tol_replay}};
  res.pass = acc.v[0] <= tol_mass && acc.v[1] <= tol_replay;
  char buf[160];
  std::snprintf(buf, sizeof buf, "max|sumW+dust-1|=%.3g max|W_k-sumK|=%.3g over %llux%llu jumps", acc.v[0],
                acc.v[1], static_cast<unsigned long long>(trajectories), static_cast<unsigned long long>(jumps));
  res.summary = buf;
  return res;
}

// 3 -------------------------------------------------------------------------
inline CriterionResult criterion_median_map(const nlohmann::json& c) {
  const std::uint64_t samples = c.at("samples");
  const double tol = c.at("tol_identity");
  const std::uint64_t seed = c.at("seed");
  // v = {displacement violations, max identity residual, monotonicity violations}
  auto acc = replicate_reduce(samples, detail::jobs_of(c), detail::MaxAcc{std::vector<double>(3, 0.0)},
                              [&](std::uint64_t i, detail::MaxAcc& a) {
    CounterRng rng(seed, stream_key(StreamDomain::Flags, i));
    const double r = rng.uniform(), u = rng.uniform();
    double z = rng.uniform();
    if (i % 1000 == 0) z = 0.0;
    if (i % 1000 == 1) z = 1.0;
    const double m = median_map(r, u, z);
    if (std::abs(m - z) > r / (1.0 - r)) a.v[0] += 1.0;
    const double lo = u * (1.0 - r);
    const double covered = std::clamp(z - lo, 0.0, r);
    a.v[1] = std::max(a.v[1], std::abs((1.0 - r) * m - z + covered));
    const double z2 = rng.uniform();
    const double m2 = median_map(r, u, z2);
    if ((z <= z2 && m > m2) || (z2 <= z && m2 > m)) a.v[2] += 1.0;
  });
  CriterionResult res;
  res.detail = {{"samples", samples},
                {"displacement_violations", acc.v[0]},
                {"max_identity_residual", acc.v[1]},
                {"monotonicity_violations", acc.v[2]},
                {"tol_identity", tol}};
  res.pass = acc.v[0] == 0.0 && acc.v[1] <= tol && acc.v[2] == 0.0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "bound violations=%g identity residual=%.3g (tol %.0e)", acc.v[0], acc.v[1], tol);
  res.summary = buf;
  return res;
}

// 4 -------------------------------------------------------------------------
inline CriterionResult criterion_coupling(const nlohmann::json& c) {
  const auto m = validate(c.at("measure"));
  const std::size_t n = c.at("n");
  const double delta = c.at("delta");
  const std::vector<double> times = c.at("times").get<std::vector<double>>();
  const std::uint64_t trajectories = c.at("trajectories");
  const std::uint64_t seed = c.at("seed");
  auto sampler = std::make_shared<const JumpSizeSampler>(m, delta);
  // v = {max block deviation, max dust deviation, orphan groups, Lipschitz violations}
  auto acc = replicate_reduce(trajectories, detail::jobs_of(c), detail::MaxAcc{std::vector<double>(4, 0.0)},
                              [&](std::uint64_t rep, detail::MaxAcc& a) {
    JumpStream stream(sampler, {delta, times.back(), seed, rep});
    auto trace = make_paintbox(n, seed, rep);
    AtomSystem sys;
    std::optional<Jump> pending = stream.next();
    for (double t : times) {
      while (pending && pending->s <= t) {
        paintbox_step(trace, *pending);
        apply_jump_fast(sys, *pending);
        pending = stream.next();
      }
      std::unordered_map<double, std::size_t> count;
      for (double p : trace.positions) ++count[p];
      std::size_t on_atoms = 0;
      for (const auto& atom : sys.atoms) {
        const auto it = count.find(atom.v);
        const std::size_t hits = it == count.end() ? 0 : it->second;
        on_atoms += hits;
        a.v[0] = std::max(a.v[0], std::abs(static_cast<double>(hits) / n - atom.w));
        if (it != count.end()) count.erase(it);
      }
      for (const auto& [pos, hits] : count)
        if (hits > 1) a.v[2] += 1.0;
      a.v[1] = std::max(a.v[1], std::abs(static_cast<double>(n - on_atoms) / n - sys.dust));
      // Each composed map can add a few ulps of rounding to a position.
      const double lip = std::exp(sys.S);
      const double slack = 8.0 * std::numeric_limits<double>::epsilon() * lip * (sys.jumps_applied + 1.0);
      for (std::size_t i = 1; i < n; ++i) {
        const double gap = trace.positions[i] - trace.positions[i - 1];
        if (gap < 0.0 || gap > lip * (trace.seeds[i] - trace.seeds[i - 1]) + slack) a.v[3] += 1.0;
      }
    }
  });
  const double tol = 5.0 / std::sqrt(static_cast<double>(n));
  CriterionResult res;
  res.detail = {{"n", n},
                {"trajectories", trajectories},
                {"max_block_deviation", acc.v[0]},
                {"max_dust_deviation", acc.v[1]},
                {"groups_without_atom", acc.v[2]},
                {"lipschitz_violations", acc.v[3]},
                {"tol", tol}};
  res.pass = acc.v[0] <= tol && acc.v[2] == 0.0 && acc.v[3] == 0.0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "max block deviation=%.4f (tol %.3f), dust deviation=%.4f", acc.v[0], tol, acc.v[1]);
  res.summary = buf;
  return res;
}

// 5 -------------------------------------------------------------------------
struct HistogramAcc {
  ShapeHistogram h;
  void merge(const HistogramAcc& o) {
    for (const auto& [k, v] : o.h) h[k] += v;
  }
};

inline ShapeHistogram flow_partition_histogram(const LambdaMeasure& m, int n, double t, double delta,
                                               std::uint64_t reps, std::uint64_t seed, unsigned jobs) {
  auto sampler = std::make_shared<const JumpSizeSampler>(m, delta);
  return replicate_reduce(reps, jobs, HistogramAcc{}, [&](std::uint64_t rep, HistogramAcc& acc) {
           JumpStream stream(sampler, {delta, t, seed, rep});
           auto trace = make_paintbox(static_cast<std::size_t>(n), seed, rep);
           while (auto j = stream.next()) {
             paintbox_step(trace, *j);
             if (trace.positions.front() == trace.positions.back()) break;
           }
           acc.h[extract_partition(trace).shape()] += 1.0;
         }).h;
}

inline ShapeHistogram chain_partition_histogram(const LambdaMeasure& m, int n, double t, std::uint64_t reps,
                                                std::uint64_t seed, unsigned jobs) {
  const GillespieRates rates(m, n);
  return replicate_reduce(reps, jobs, HistogramAcc{}, [&](std::uint64_t rep, HistogramAcc& acc) {
           CounterRng rng(seed, stream_key(StreamDomain::Gillespie, rep));
           acc.h[gillespie_run(n, t, rates, rng).shape()] += 1.0;
         }).h;
}

inline CriterionResult criterion_partition_law(const nlohmann::json& c) {
  const auto m = validate(c.at("measure"));
  const int n = c.at("n");
  const double t = c.at("t");
  const std::uint64_t reps = c.at("reps");
  const std::uint64_t seed = c.at("seed");
  const auto choice = delta_for_budget(m, t, c.at("eps_mass"));
  const auto flow = flow_partition_histogram(m, n, t, choice.delta, reps, seed, detail::jobs_of(c));
  const auto chain = chain_partition_histogram(m, n, t, reps, seed, detail::jobs_of(c));
  const auto chi = stats::chi_square_homogeneity(flow, chain);
  const double p_min = c.at("p_min");
  CriterionResult res;
  res.detail = {{"delta", choice.delta},
                {"trunc_budget", choice.budget},
                {"chi2", chi.statistic},
                {"dof", chi.dof},
                {"p_value", chi.p_value},
                {"p_min", p_min},
                {"flow", shape_histogram_json(flow)},
                {"chain", shape_histogram_json(chain)}};
  res.pass = chi.p_value >= p_min;
  char buf[160];
  std::snprintf(buf, sizeof buf, "chi2=%.2f dof=%d p=%.3g (delta=2^%d)", chi.statistic, chi.dof, chi.p_value,
                static_cast<int>(std::lround(std::log2(choice.delta))));
  res.summary = buf;
  return res;
}

// 6 -------------------------------------------------------------------------
namespace detail {

struct SmallTimeRun {
  std::vector<RatioCheck> checks;
  double delta = 0.0;
  double delta_w2 = 0.0;
};

inline SmallTimeRun small_time_checks(const LambdaMeasure& m, const LambdaMeasure& m2, double t, std::uint64_t reps,
                                      double eps, double t2, std::uint64_t reps2, double eps2, double tol,
                                      double tol2, std::uint64_t seed, unsigned jobs) {
  SmallTimeRun out;
  const auto choice = delta_for_budget(m, t, eps);
  const auto tab = estimate(m, {t}, reps, 1, {choice.delta, seed, jobs, 0});
  const auto& row = tab.rows[0];
  out.checks.push_back(
      make_ratio("W1/t", t, row.W[0].mean, row.W[0].stderr_of_mean(), t, tab.budget(0), h_const(m), tol));
  out.checks.push_back(make_ratio("simpson/t", t, row.simpson.mean, row.simpson.stderr_of_mean(), t, tab.budget(0),
                                  m.total_mass(), tol));
  if (!m2.flags().h_integrable)
    fail(ErrorCode::ConditionUnmet, "E[W_2] small-time law needs int h(r) r^-2 Lambda(dr) < inf");
  const auto choice2 = delta_for_budget(m2, t2, eps2);
  const auto tab2 = estimate(m2, {t2}, reps2, 2, {choice2.delta, seed + 1, jobs, 0});
  const auto& row2 = tab2.rows[0];
  out.checks.push_back(make_ratio("W2/(t^2/2)", t2, row2.W[1].mean, row2.W[1].stderr_of_mean(), 0.5 * t2 * t2,
                                  tab2.budget(0), k_integral(m2), tol2));
  out.delta = choice.delta;
  out.delta_w2 = choice2.delta;
  return out;
}

inline std::string describe(const std::vector<RatioCheck>& checks) {
  std::string out;
  for (const auto& ch : checks) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s%s(t=%g)=%.4f [target %.4f +-%.0f%%, se %.4f]%s", out.empty() ? "" : "; ",
                  ch.name.c_str(), ch.t, ch.ratio, ch.target, 100 * ch.tolerance, ch.stat_se, ch.pass ? "" : " (out)");
    out += buf;
  }
  return out;
}

inline bool all_pass(const std::vector<RatioCheck>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const RatioCheck& c) { return c.pass; });
}

}  // namespace detail

/// The stated small-time checks, plus the same laws at smaller t. At the
/// stated times the exact process carries corrections larger than the
/// tolerance (for E[W_1]/t of order t log(1/t)), so a failure there counts as
/// a known deviation when the smaller-t checks pass.
inline CriterionResult criterion_small_time(const nlohmann::json& c) {
  const std::uint64_t seed = c.at("seed");
  const unsigned jobs = detail::jobs_of(c);
  const auto m = validate(c.at("measure"));
  const auto m2 = validate(c.at("measure_w2"));
  const double tol = c.at("tolerance"), tol2 = c.at("tolerance_w2");
  const auto stated = detail::small_time_checks(m, m2, c.at("t"), c.at("reps"), c.at("eps_mass"), c.at("t_w2"),
                                                c.at("reps_w2"), c.at("eps_mass_w2"), tol, tol2, seed, jobs);
  CriterionResult res;
  res.pass = detail::all_pass(stated.checks);
  res.summary = detail::describe(stated.checks);
  res.detail = {{"stated", ratio_checks_json(stated.checks)},
                {"delta", stated.delta},
                {"delta_w2", stated.delta_w2}};
  if (!res.pass) {
    const auto conv = detail::small_time_checks(m, m2, c.at("t_conv"), c.at("reps_conv"), c.at("eps_mass_conv"),
                                                c.at("t_w2_conv"), c.at("reps_w2_conv"), c.at("eps_mass_w2_conv"),
                                                tol, tol2, seed + 2, jobs);
    res.known_deviation = detail::all_pass(conv.checks);
    res.note = "smaller t: " + detail::describe(conv.checks);
    res.detail["smaller_t"] = ratio_checks_json(conv.checks);
    res.detail["smaller_t_pass"] = res.known_deviation;
  }
  return res;
}

// 7 -------------------------------------------------------------------------
namespace detail {

inline std::vector<LongTimeWindow> windows_of(const nlohmann::json& list, int& k_max) {
  std::vector<LongTimeWindow> out;
  for (const auto& w : list) {
    out.push_back({w.at("k"), w.at("t_lo"), w.at("t_hi"), w.at("tolerance")});
    k_max = std::max(k_max, out.back().k);
  }
  return out;
}

inline std::string describe(const std::vector<SlopeCheck>& checks) {
  std::string out;
  for (const auto& ch : checks) {
    char buf[140];
    std::snprintf(buf, sizeof buf, "%sk=%d [%g,%g] slope=%.4f (target %.4f +-%.0f%%)%s", out.empty() ? "" : "; ",
                  ch.fit.k, ch.fit.t_lo, ch.fit.t_hi, ch.fit.slope, ch.target, 100 * ch.tolerance,
                  ch.pass ? "" : " (out)");
    out += buf;
  }
  return out;
}

}  // namespace detail

/// Slopes on the stated windows. Those windows are pre-asymptotic for k >= 2
/// (the local slope is still drifting toward -lambda_k), so when they miss,
/// later windows on the same table must both pass and sit closer to the target.
inline CriterionResult criterion_long_time(const nlohmann::json& c) {
  const auto m = validate(c.at("measure"));
  const auto grid = detail::expand_grid(c.at("grid"));
  const auto plateau_k = c.at("plateau_k").get<std::vector<int>>();
  int k_max = 3;
  const auto windows = detail::windows_of(c.at("windows"), k_max);
  const auto late_windows = detail::windows_of(c.at("late_windows"), k_max);
  for (int k : plateau_k) k_max = std::max(k_max, k);
  const auto tab = estimate(m, grid, c.at("reps"), k_max, {c.at("delta"), c.at("seed"), detail::jobs_of(c), 0});
  const auto rates = n_lambda(m, 50);
  const auto checks = long_time_suite(tab, rates, windows);

  CriterionResult res;
  res.pass = std::all_of(checks.begin(), checks.end(), [](const SlopeCheck& ch) { return ch.pass; });
  res.summary = detail::describe(checks);
  if (!res.pass) {
    const auto late = long_time_suite(tab, rates, late_windows);
    bool ok = std::all_of(late.begin(), late.end(), [](const SlopeCheck& ch) { return ch.pass; });
    for (const auto& ch : checks) {
      if (ch.pass) continue;
      const auto it = std::find_if(late.begin(), late.end(), [&](const SlopeCheck& l) { return l.fit.k == ch.fit.k; });
      ok = ok && it != late.end() && std::abs(it->fit.slope - it->target) < std::abs(ch.fit.slope - ch.target);
    }
    res.known_deviation = ok;
    res.note = "later windows: " + detail::describe(late);
    res.detail["late_fits"] = slope_checks_json(late);
    res.detail["late_pass"] = ok;
  }

  // Plateau beyond N(Lambda): advisory only.
  nlohmann::json plateau = {{"gating", false}};
  try {
    const auto win = c.at("plateau_window");
    std::vector<double> slopes;
    for (int k : plateau_k) slopes.push_back(fit_slope(tab, k, win.at(0), win.at(1)).slope);
    bool agree = true, in_band = true;
    for (double s : slopes) {
      agree = agree && std::abs(s - slopes.front()) <= 0.15 * std::abs(slopes.front());
      in_band = in_band && -s >= 0.7 * rates.h && -s <= 1.2 * rates.h;
    }
    plateau["slopes"] = slopes;
    plateau["agree_within_15pct"] = agree;
    plateau["within_0.7H_1.2H"] = in_band;
  } catch (const Error& e) {
    plateau["status"] = std::string(to_string(e.code())) + ": " + e.what();
  }
  double absorption_rate = 0.0;
  try {
    absorption_rate = fitted_absorption_rate(tab, windows.front().t_lo, windows.front().t_hi);
  } catch (const Error&) {
  }
  res.detail["fits"] = slope_checks_json(checks);
  res.detail["N_lambda"] = *rates.n_lambda;
  res.detail["H"] = rates.h;
  res.detail["fitted_absorption_rate"] = absorption_rate;
  res.detail["plateau"] = plateau;
  res.detail["reps"] = tab.reps;
  res.detail["delta"] = tab.delta;
  return res;
}

// 8 -------------------------------------------------------------------------
inline CriterionResult criterion_numerics(const nlohmann::json& c) {
  const int k_max = c.at("k_max");
  const double tol = c.at("tol");
  bool pass = true;
  double worst_rel = 0.0;
  nlohmann::json per_alpha = nlohmann::json::array();
  for (double alpha : c.at("alphas").get<std::vector<double>>()) {
    const auto m = validate({{"kind", "beta"}, {"a", 2.0 - alpha}, {"b", alpha}});
    double rel = 0.0;
    bool sandwich = true, majorant = true;
    const double l2 = m.total_mass();
    const double g = std::tgamma(1.0 - alpha);
    for (int k = 2; k <= k_max; ++k) {
      const double closed = lambda_k_beta_two_minus_alpha(alpha, k);
      rel = std::max(rel, std::abs(lambda_k_quadrature(m, k) - closed) / closed);
      if (k >= 3) {
        const double lo = 2.0 * (1.0 - alpha) * g / (alpha * (2.0 + alpha)) * std::pow(k + alpha - 1.0, alpha);
        const double hi = (1.0 - alpha) * g / alpha * std::pow(k + alpha, alpha);
        sandwich = sandwich && lo <= closed && closed <= hi;
        majorant = majorant && closed < (k - 1.0) * (k - 1.0) * l2;
      }
    }
    const auto table = n_lambda(m, 200);
    const int N = *table.n_lambda;
    const double ga = std::tgamma(alpha + 1.0);
    const double lower = std::pow(ga / (1.0 - alpha), 1.0 / alpha) - alpha;
    const double upper = std::ceil(std::pow((2.0 + alpha) * ga / (2.0 * (1.0 - alpha)), 1.0 / alpha) - alpha + 1.0);
    const bool bracket = lower <= N && N <= upper;
    const bool floor_ok = N > std::max(2.0, std::sqrt(table.h / l2));
    const bool h_ok = std::abs(table.h - g * std::tgamma(alpha)) <= 1e-12 * table.h;
    const bool ok = rel <= tol && bracket && floor_ok && sandwich && majorant && h_ok;
    pass = pass && ok;
    worst_rel = std::max(worst_rel, rel);
    per_alpha.push_back({{"alpha", alpha},
                         {"max_rel_quadrature_vs_closed", rel},
                         {"N_lambda", N},
                         {"bracket", {lower, upper}},
                         {"N_above_floor", floor_ok},
                         {"gautschi_sandwich", sandwich},
                         {"below_k_minus_1_squared_lambda2", majorant},
                         {"H_matches_closed_form", h_ok},
                         {"pass", ok}});
  }
  CriterionResult res;
  res.pass = pass;
  res.detail = {{"alphas", per_alpha}, {"tol", tol}};
  char buf[160];
  std::snprintf(buf, sizeof buf, "max rel quadrature error=%.3g (tol %.0e); brackets and bounds %s", worst_rel, tol,
                pass ? "hold" : "FAIL");
  res.summary = buf;
  return res;
}

// 9 -------------------------------------------------------------------------
inline CriterionResult criterion_generator(const nlohmann::json& c) {
  const auto m = validate(c.at("measure"));
  GeneratorOptions opt;
  opt.reps = c.at("reps");
  opt.delta = c.at("delta");
  opt.z_max = c.at("z_max");
  opt.seed = c.at("seed");
  opt.jobs = detail::jobs_of(c);
  const int k = c.at("k");
  CriterionResult res;
  res.pass = true;
  nlohmann::json reports = nlohmann::json::array();
  std::string summary;
  for (double t : c.at("times").get<std::vector<double>>()) {
    opt.h = t > 0.0 ? c.at("h").get<double>() : c.at("h0").get<double>();
    const auto rep = generator_check(m, k, t, GeneratorFunction{}, opt);
    res.pass = res.pass && rep.pass;
    reports.push_back(generator_json(rep));
    char buf[120];
    std::snprintf(buf, sizeof buf, "%st=%g LHS=%.4f+-%.4f RHS=%.4f+-%.4f z=%.2f", summary.empty() ? "" : "; ", t,
                  rep.lhs, rep.lhs_se, rep.rhs, rep.rhs_se, rep.z_score);
    summary += buf;
  }
  res.summary = summary;
  res.detail = {{"reports", reports}};
  return res;
}

// 10 ------------------------------------------------------------------------
inline CriterionResult criterion_uniform_positions(const nlohmann::json& c) {
  const auto m = validate(c.at("measure"));
  const auto rep = uniform_positions_check(m, c.at("t"), c.at("reps"),
                                           {c.at("delta"), c.at("seed"), detail::jobs_of(c), 0}, c.at("p_min"));
  CriterionResult res;
  res.pass = rep.pass;
  res.detail = uniform_positions_json(rep);
  char buf[160];
  std::snprintf(buf, sizeof buf, "KS p=%.3g, rank-corr=%.5f (bound %.5f), %llu samples", rep.ks_p, rep.rank_corr,
                rep.rank_corr_bound, static_cast<unsigned long long>(rep.samples));
  res.summary = buf;
  return res;
}

/// Merges `overrides` into the defaults of criterion `id` and runs it.
inline CriterionResult run_criterion(int id, const nlohmann::json& overrides = nlohmann::json::object()) {
  auto cfg = default_criterion_config(id);
  for (const auto& [key, value] : overrides.items())
    if (cfg.contains(key) || key == "jobs") cfg[key] = value;
  using Runner = CriterionResult (*)(const nlohmann::json&);
  static const std::map<int, Runner> runners = {
      {1, criterion_kernels},    {2, criterion_engine},     {3, criterion_median_map}, {4, criterion_coupling},
      {5, criterion_partition_law}, {6, criterion_small_time}, {7, criterion_long_time}, {8, criterion_numerics},
      {9, criterion_generator},  {10, criterion_uniform_positions}};
  const auto start = std::chrono::steady_clock::now();
  CriterionResult res = runners.at(id)(cfg);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  res.id = id;
  res.name = criterion_names().at(id);
  res.detail["config"] = cfg;
  return res;
}

/// Criteria grouped by suite name for the command-line front end.
inline const std::map<std::string, std::vector<int>>& suites() {
  static const std::map<std::string, std::vector<int>> s = {
      {"invariants", {2, 3, 4, 8, 10}}, {"kernels", {1}},     {"oracle", {5}},
      {"small_time", {6}},              {"long_time", {7}},   {"generator", {9}}};
  return s;
}

inline nlohmann::json criterion_json(const CriterionResult& r) {
  return {{"id", r.id},           {"name", r.name},       {"pass", r.pass},
          {"known_deviation", r.known_deviation}, {"note", r.note},
          {"seconds", r.seconds}, {"summary", r.summary}, {"detail", r.detail}};
}

}  // namespace dustflow
