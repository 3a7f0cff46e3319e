#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "dustflow/error.hpp"

namespace dustflow::stats {

/// Streaming mean and variance (Welford), mergeable (Chan et al.).
struct Moments {
  double n = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    n += 1.0;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }

  void merge(const Moments& o) {
    if (o.n == 0.0) return;
    if (n == 0.0) {
      *this = o;
      return;
    }
    const double total = n + o.n;
    const double d = o.mean - mean;
    mean += d * o.n / total;
    m2 += o.m2 + d * d * n * o.n / total;
    n = total;
  }

  double variance() const { return n > 1.0 ? m2 / (n - 1.0) : 0.0; }
  double stderr_of_mean() const { return n > 1.0 ? std::sqrt(variance() / n) : 0.0; }
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  std::size_t points = 0;
};

/// Weighted least squares of y on x with weights w = 1 / var(y).
inline LinearFit weighted_line(const std::vector<double>& x, const std::vector<double>& y,
                               const std::vector<double>& w) {
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
  }
  const double xbar = sx / sw;
  const double ybar = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += w[i] * (x[i] - xbar) * (x[i] - xbar);
    sxy += w[i] * (x[i] - xbar) * (y[i] - ybar);
  }
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = ybar - fit.slope * xbar;
  fit.slope_se = std::sqrt(1.0 / sxx);
  fit.points = x.size();
  return fit;
}

/// Survival function of the Kolmogorov distribution, P(K > x).
inline double kolmogorov_survival(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 0.3) {
    // Jacobi-transformed series converges fast for small x.
    const double c = std::sqrt(2.0 * M_PI) / x;
    double cdf = 0.0;
    for (int k = 1; k <= 50; ++k) {
      const double a = (2.0 * k - 1.0) * M_PI / x;
      cdf += std::exp(-a * a / 8.0);
    }
    return 1.0 - c * cdf;
  }
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-300) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;  // D_n
  double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against a continuous CDF. The p-value
/// uses the asymptotic law with Stephens' finite-n correction.
template <class Cdf>
KsResult ks_test(std::vector<double> sample, Cdf&& cdf) {
  if (sample.empty()) fail(ErrorCode::InsufficientSignal, "KS test on an empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double sqrt_n = std::sqrt(n);
  return {d, kolmogorov_survival((sqrt_n + 0.12 + 0.11 / sqrt_n) * d)};
}

/// Mid-ranks (1-based), ties averaged.
inline std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  return rank;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) fail(ErrorCode::InsufficientSignal, "rank correlation needs paired data");
  return pearson(ranks(x), ranks(y));
}

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

/// Two-sample chi-square test of homogeneity over categorical counts.
template <class Key>
ChiSquareResult chi_square_homogeneity(const std::map<Key, double>& a, const std::map<Key, double>& b) {
  std::map<Key, std::pair<double, double>> table;
  double na = 0, nb = 0;
  for (const auto& [k, c] : a) {
    table[k].first += c;
    na += c;
  }
  for (const auto& [k, c] : b) {
    table[k].second += c;
    nb += c;
  }
  if (na == 0 || nb == 0) fail(ErrorCode::InsufficientSignal, "chi-square test with an empty sample");
  ChiSquareResult res;
  const double n = na + nb;
  for (const auto& [k, cell] : table) {
    const double total = cell.first + cell.second;
    if (total == 0) continue;
    const double ea = total * na / n;
    const double eb = total * nb / n;
    res.statistic += (cell.first - ea) * (cell.first - ea) / ea + (cell.second - eb) * (cell.second - eb) / eb;
    ++res.dof;
  }
  res.dof -= 1;
  if (res.dof < 1) return res;
  boost::math::chi_squared dist(res.dof);
  res.p_value = boost::math::cdf(boost::math::complement(dist, res.statistic));
  return res;
}

}  // namespace dustflow::stats
