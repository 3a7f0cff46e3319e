#pragma once

// Truncated Poisson jump stream {(s, r, u) : r > delta} with intensity
// ds x r^-2 Lambda(dr) x du.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <ostream>
#include <variant>
#include <vector>

#include "dustflow/error.hpp"
#include "dustflow/measure.hpp"
#include "dustflow/quadrature.hpp"
#include "dustflow/rng.hpp"

namespace dustflow {

struct Jump {
  double s = 0.0;  // time
  double r = 0.0;  // fraction in (delta, 1)
  double u = 0.0;  // position in (0, 1)
};

struct JumpStreamConfig {
  double delta = 1e-3;
  double horizon = 1.0;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

inline constexpr double kLargestBelowOne = 1.0 - 0x1.0p-53;

/// Inverse CDF of the normalised r^(a-3) (1-r)^(b-1) dr on (delta, 1).
///
/// Knots are equispaced in a parameter theta: log-spaced in r on (delta, 1/2]
/// and equispaced in y = (1-r)^b on [1/2, 1), so the CDF is smooth in theta
/// and its derivative has no endpoint singularity. theta(F) is a monotone
/// cubic Hermite interpolant using the exact derivative at each knot.
class BetaInverseCdf {
 public:
  static constexpr int kKnots = 4096;
  // The two parametrisations meet on a knot, so the kink is never interpolated.
  static constexpr double kSplit = (kKnots / 2 - 1) / static_cast<double>(kKnots - 1);

  BetaInverseCdf(double a, double b, double delta) : a_(a), b_(b), delta_(delta) {
    split_ = delta < 0.5;
    if (split_) {
      kappa_ = std::log(0.5 / delta) / kSplit;
      y_top_ = std::pow(0.5, b);
    } else {
      y_top_ = std::pow(1.0 - delta, b);
    }
    theta_.resize(kKnots);
    cdf_.resize(kKnots);
    slope_left_.resize(kKnots - 1);
    slope_right_.resize(kKnots - 1);
    for (int i = 0; i < kKnots; ++i) theta_[i] = static_cast<double>(i) / (kKnots - 1);
    cdf_[0] = 0.0;
    auto density = [this](double t) { return theta_density(t); };
    for (int i = 1; i < kKnots; ++i) {
      cdf_[i] = cdf_[i - 1] + quad::gauss_kronrod(density, theta_[i - 1], theta_[i], 1e-13);
    }
    total_ = cdf_.back();
    for (auto& c : cdf_) c /= total_;
    cdf_.back() = 1.0;
    // Each interval takes one-sided derivatives at its ends, which differ only
    // at the split knot. The Fritsch-Carlson limiter keeps it monotone.
    for (int i = 0; i + 1 < kKnots; ++i) {
      const double secant = (theta_[i + 1] - theta_[i]) / (cdf_[i + 1] - cdf_[i]);
      slope_left_[i] = std::min(total_ / theta_density(theta_[i], true), 3.0 * secant);
      slope_right_[i] = std::min(total_ / theta_density(theta_[i + 1], false), 3.0 * secant);
    }
  }

  /// Unnormalised mass of the table, which equals int_(delta,1) r^(a-3)(1-r)^(b-1) dr.
  double total() const { return total_; }

  double sample(double uniform) const {
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), uniform);
    std::size_t hi = static_cast<std::size_t>(it - cdf_.begin());
    hi = std::clamp<std::size_t>(hi, 1, kKnots - 1);
    const std::size_t lo = hi - 1;
    const double df = cdf_[hi] - cdf_[lo];
    const double t = std::clamp((uniform - cdf_[lo]) / df, 0.0, 1.0);
    const double t2 = t * t;
    const double t3 = t2 * t;
    const double theta = (2 * t3 - 3 * t2 + 1) * theta_[lo] + (t3 - 2 * t2 + t) * df * slope_left_[lo] +
                         (-2 * t3 + 3 * t2) * theta_[hi] + (t3 - t2) * df * slope_right_[lo];
    double r = r_of_theta(std::clamp(theta, 0.0, 1.0));
    if (!(r > delta_)) r = std::nextafter(delta_, 1.0);
    return std::min(r, kLargestBelowOne);
  }

  double r_of_theta(double theta) const {
    if (split_ && theta <= kSplit) return delta_ * std::exp(kappa_ * theta);
    const double y = split_ ? y_top_ * (1.0 - theta) / (1.0 - kSplit) : y_top_ * (1.0 - theta);
    return 1.0 - std::pow(y, 1.0 / b_);
  }

 private:
  // dF/dtheta, unnormalised. At the split knot `upper` picks the derivative
  // from above.
  double theta_density(double theta, bool upper = false) const {
    if (split_ && (theta < kSplit || (theta == kSplit && !upper))) {
      const double r = delta_ * std::exp(kappa_ * theta);
      return std::pow(r, a_ - 2.0) * std::pow(1.0 - r, b_ - 1.0) * kappa_;
    }
    const double dy = split_ ? y_top_ / (1.0 - kSplit) : y_top_;
    const double y = dy * (1.0 - theta);
    const double r = 1.0 - std::pow(y, 1.0 / b_);
    return std::pow(r, a_ - 3.0) / b_ * dy;
  }

  double a_, b_, delta_;
  bool split_ = true;
  double kappa_ = 0.0;
  double y_top_ = 0.0;
  double total_ = 0.0;
  std::vector<double> theta_, cdf_, slope_left_, slope_right_;
};

/// Exact categorical law over the atoms above delta, weights w r^-2.
class AtomCategorical {
 public:
  AtomCategorical(const AtomList& list, double delta) {
    for (const auto& atom : list.atoms) {
      if (atom.r <= delta) continue;
      r_.push_back(atom.r);
      cumulative_.push_back((cumulative_.empty() ? 0.0 : cumulative_.back()) + atom.w / (atom.r * atom.r));
    }
    total_ = cumulative_.empty() ? 0.0 : cumulative_.back();
  }

  double total() const { return total_; }

  double sample(double uniform) const {
    const double target = uniform * total_;
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    if (it == cumulative_.end()) --it;
    return r_[static_cast<std::size_t>(it - cumulative_.begin())];
  }

 private:
  std::vector<double> r_;
  std::vector<double> cumulative_;
  double total_ = 0.0;
};

/// Law of the r-component of jumps above delta, normalised by its activity.
/// Immutable after construction and shared across replicates.
class JumpSizeSampler {
 public:
  JumpSizeSampler(const LambdaMeasure& m, double delta) : delta_(delta) {
    if (!(delta > 0.0 && delta < 1.0)) fail(ErrorCode::OutOfRange, "delta must lie in (0,1)");
    for (const auto& c : m.components()) {
      Piece piece{0.0, BetaInverseCdf(1.0, 1.0, 0.5)};
      if (const auto* beta = std::get_if<BetaDensity>(&c.shape)) {
        piece.table.emplace<BetaInverseCdf>(beta->a, beta->b, delta);
        piece.rate = c.weight * std::get<BetaInverseCdf>(piece.table).total();
      } else {
        piece.table.emplace<AtomCategorical>(std::get<AtomList>(c.shape), delta);
        piece.rate = c.weight * std::get<AtomCategorical>(piece.table).total();
      }
      if (piece.rate > 0.0) {
        rate_ += piece.rate;
        pieces_.push_back(std::move(piece));
      }
    }
    if (!(rate_ > 0.0)) fail(ErrorCode::ZeroActivity, "no jumps above delta: tail rate is zero");
    double acc = 0.0;
    for (auto& p : pieces_) {
      acc += p.rate / rate_;
      bounds_.push_back(acc);
    }
    bounds_.back() = 1.0;
  }

  double delta() const { return delta_; }
  /// tail_rate(m, delta): Poisson intensity of the truncated stream.
  double rate() const { return rate_; }

  double sample(double uniform) const {
    std::size_t i = 0;
    while (i + 1 < bounds_.size() && uniform >= bounds_[i]) ++i;
    const double lo = i == 0 ? 0.0 : bounds_[i - 1];
    const double local = std::clamp((uniform - lo) / (bounds_[i] - lo), 0x1.0p-54, kLargestBelowOne);
    return std::visit([local](const auto& t) { return t.sample(local); }, pieces_[i].table);
  }

 private:
  struct Piece {
    double rate;
    std::variant<BetaInverseCdf, AtomCategorical> table;
  };
  double delta_;
  double rate_ = 0.0;
  std::vector<Piece> pieces_;
  std::vector<double> bounds_;
};

/// Single-cursor generator of the jumps of one replicate on (0, horizon].
class JumpStream {
 public:
  JumpStream(std::shared_ptr<const JumpSizeSampler> sampler, const JumpStreamConfig& cfg)
      : sampler_(std::move(sampler)), cfg_(cfg), rng_(cfg.seed, stream_key(StreamDomain::Jumps, cfg.stream_id)) {
    if (std::abs(sampler_->delta() - cfg.delta) > 0.0)
      fail(ErrorCode::OutOfRange, "sampler and stream disagree on delta");
  }

  /// Next jump, or nullopt past the horizon.
  std::optional<Jump> next() {
    if (done_) return std::nullopt;
    s_ += rng_.exponential(sampler_->rate());
    if (s_ > cfg_.horizon) {
      done_ = true;
      return std::nullopt;
    }
    Jump j;
    j.s = s_;
    j.r = sampler_->sample(rng_.uniform());
    j.u = rng_.uniform();
    return j;
  }

  const JumpStreamConfig& config() const { return cfg_; }

 private:
  std::shared_ptr<const JumpSizeSampler> sampler_;
  JumpStreamConfig cfg_;
  CounterRng rng_;
  double s_ = 0.0;
  bool done_ = false;
};

struct DeltaChoice {
  double delta = 0.0;
  double trunc_mass = 0.0;  // K(delta)
  double budget = 0.0;      // horizon * K(delta), bound on expected omitted mass
};

/// Largest tabulated delta = 2^-j (j = 1..60) with horizon * K(delta) <= eps_mass.
inline DeltaChoice delta_for_budget(const LambdaMeasure& m, double horizon, double eps_mass) {
  if (!(eps_mass > 0.0)) fail(ErrorCode::OutOfRange, "eps_mass must be positive");
  if (!(horizon > 0.0)) fail(ErrorCode::OutOfRange, "horizon must be positive");
  for (int j = 1; j <= 60; ++j) {
    const double delta = std::ldexp(1.0, -j);
    const double k = trunc_mass(m, delta);
    if (horizon * k <= eps_mass) return {delta, k, horizon * k};
  }
  fail(ErrorCode::BudgetUnreachable, "even delta = 2^-60 exceeds the omitted-mass budget");
}

inline std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_jump_trace_csv(std::ostream& os, const std::vector<Jump>& jumps) {
  os << "s,r,u\n";
  for (const auto& j : jumps) os << format_real(j.s) << ',' << format_real(j.r) << ',' << format_real(j.u) << '\n';
}

}  // namespace dustflow
