#pragma once

// Reference implementations independent of the flow engine: the finite-n
// coalescent chain driven by the merger rates, and closed-form expectations
// for the Bolthausen-Sznitman coalescent.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <utility>
#include <vector>

#include "dustflow/error.hpp"
#include "dustflow/jumps.hpp"
#include "dustflow/measure.hpp"
#include "dustflow/rng.hpp"
#include "dustflow/stats.hpp"
#include "json.hpp"

namespace dustflow {

struct FinitePartitionState {
  int n = 0;
  std::vector<std::vector<int>> blocks;
  double t = 0.0;

  static FinitePartitionState singletons(int n) {
    FinitePartitionState s;
    s.n = n;
    for (int i = 0; i < n; ++i) s.blocks.push_back({i});
    return s;
  }

  std::vector<int> shape() const {
    std::vector<int> sizes;
    for (const auto& b : blocks) sizes.push_back(static_cast<int>(b.size()));
    std::sort(sizes.begin(), sizes.end(), std::greater<>());
    return sizes;
  }
};

/// C(p,k) lambda_{p,k} for 2 <= k <= p <= n, tabulated once per measure.
class GillespieRates {
 public:
  GillespieRates(const LambdaMeasure& m, int n) : n_(n), rates_(n + 1), totals_(n + 1, 0.0) {
    for (int p = 2; p <= n; ++p) {
      rates_[p].assign(p + 1, 0.0);
      for (int k = 2; k <= p; ++k) {
        rates_[p][k] = std::exp(detail::log_binomial(p, k)) * lambda_pk(m, p, k);
        totals_[p] += rates_[p][k];
      }
    }
  }

  int n() const { return n_; }
  double total(int p) const { return totals_[p]; }
  double rate(int p, int k) const { return rates_[p][k]; }

 private:
  int n_;
  std::vector<std::vector<double>> rates_;
  std::vector<double> totals_;
};

namespace detail {

// Merges the blocks whose indices are flagged, keeping blocks sorted by
// their smallest element.
inline void merge_flagged(FinitePartitionState& state, const std::vector<char>& flagged) {
  std::vector<std::vector<int>> next;
  std::vector<int> merged;
  for (std::size_t i = 0; i < state.blocks.size(); ++i) {
    if (flagged[i]) {
      merged.insert(merged.end(), state.blocks[i].begin(), state.blocks[i].end());
    } else {
      next.push_back(std::move(state.blocks[i]));
    }
  }
  std::sort(merged.begin(), merged.end());
  next.push_back(std::move(merged));
  std::sort(next.begin(), next.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  state.blocks = std::move(next);
}

}  // namespace detail

/// One event of the chain: Exp(lambda_p) holding time, merger size k with
/// probability proportional to C(p,k) lambda_{p,k}, uniform k-subset.
inline void gillespie_step(FinitePartitionState& state, const GillespieRates& rates, CounterRng& rng) {
  const int p = static_cast<int>(state.blocks.size());
  if (p <= 1) fail(ErrorCode::Absorbed, "partition already absorbed into one block");
  if (p > rates.n()) fail(ErrorCode::OutOfRange, "rate table too small for this state");
  state.t += rng.exponential(rates.total(p));
  double target = rng.uniform() * rates.total(p);
  int k = p;
  for (int j = 2; j <= p; ++j) {
    target -= rates.rate(p, j);
    if (target < 0.0) {
      k = j;
      break;
    }
  }
  // Floyd's algorithm for a uniform k-subset of {0..p-1}.
  std::vector<char> flagged(p, 0);
  for (int j = p - k; j < p; ++j) {
    const auto pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(j) + 1));
    flagged[flagged[pick] ? j : pick] = 1;
  }
  detail::merge_flagged(state, flagged);
}

/// Paintbox mode: events at the jump activity above delta, each block joins
/// with probability r; events with fewer than two participants only advance
/// time.
inline void gillespie_step_paintbox(FinitePartitionState& state, const JumpSizeSampler& sampler, CounterRng& rng) {
  const std::size_t p = state.blocks.size();
  if (p <= 1) fail(ErrorCode::Absorbed, "partition already absorbed into one block");
  std::vector<char> flagged(p);
  for (;;) {
    state.t += rng.exponential(sampler.rate());
    const double r = sampler.sample(rng.uniform());
    int count = 0;
    for (std::size_t i = 0; i < p; ++i) {
      flagged[i] = rng.bernoulli(r);
      count += flagged[i];
    }
    if (count >= 2) break;
  }
  detail::merge_flagged(state, flagged);
}

/// State of the chain at time t, starting from singletons at time 0.
inline FinitePartitionState gillespie_run(int n, double t, const GillespieRates& rates, CounterRng& rng) {
  auto state = FinitePartitionState::singletons(n);
  for (;;) {
    if (state.blocks.size() <= 1) break;
    auto next = state;
    gillespie_step(next, rates, rng);
    if (next.t > t) break;
    state = std::move(next);
  }
  state.t = t;
  return state;
}

/// E[W_k(t)] for the Bolthausen-Sznitman coalescent (Poisson-Dirichlet(e^-t, 0)).
inline double bs_expected_wk(int k, double t) {
  if (k < 1) fail(ErrorCode::OutOfRange, "bs_expected_wk requires k >= 1");
  if (!(t > 0.0)) fail(ErrorCode::OutOfRange, "bs_expected_wk requires t > 0");
  const double e = std::exp(-t);
  const double one_minus = -std::expm1(-t);
  if (k == 1) return one_minus;
  double log_term = std::lgamma(static_cast<double>(k)) - t * (k - 1);
  for (int j = 1; j <= k - 1; ++j) log_term -= std::log1p((j - 1) * e);
  return one_minus / (1.0 + (k - 1) * e) * std::exp(log_term);
}

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
  double n = 0.0;
};

/// Monte-Carlo estimate of P(t >= tau_n) = sum_k E[W_k(t)^n] from samples of
/// all atom masses at time t.
inline Estimate absorption_prob(int n, const std::vector<std::vector<double>>& samples) {
  if (n < 1) fail(ErrorCode::OutOfRange, "absorption_prob requires n >= 1");
  stats::Moments mom;
  for (const auto& masses : samples) {
    double s = 0.0;
    for (double w : masses) s += std::pow(w, n);
    mom.add(s);
  }
  return {mom.mean, mom.stderr_of_mean(), mom.n};
}

using ShapeHistogram = std::map<std::vector<int>, double>;

inline nlohmann::json shape_histogram_json(const ShapeHistogram& h) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [shape, count] : h) out.push_back({{"shape", shape}, {"count", static_cast<long long>(count)}});
  return out;
}

}  // namespace dustflow
