#pragma once

// Jump increments of W_k (K^k) and of M_k = W_1 + ... + W_k (H^k), as
// functions of the pre-jump ordered masses, the dust and the flags
// Z_j = 1{V_j in I_{r,u}}. Indices are 1-based in the comments and 0-based
// in the code.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "dustflow/error.hpp"

namespace dustflow {

struct KernelInput {
  std::span<const double> W;        // W_1 >= W_2 >= ... >= W_J >= 0
  double dust = 1.0;                // e^{-S}
  std::span<const std::uint8_t> Z;  // participation flags, same length as W
  double r = 0.0;
};

namespace detail {

inline void check_shape(const KernelInput& in) {
  if (in.W.size() != in.Z.size()) fail(ErrorCode::ShapeMismatch, "W and Z lengths differ");
}

inline double mass_at(const KernelInput& in, int k) {
  return k >= 1 && static_cast<std::size_t>(k) <= in.W.size() ? in.W[k - 1] : 0.0;
}

// dust r + sum_{j>k} Z_j W_j, and beta_k = sum_{j<=k} Z_j
inline std::pair<double, int> tail_participation(const KernelInput& in, int k) {
  double c = in.dust * in.r;
  int beta = 0;
  for (std::size_t j = 0; j < in.W.size(); ++j) {
    if (!in.Z[j]) continue;
    if (static_cast<int>(j) < k) {
      ++beta;
    } else {
      c += in.W[j];
    }
  }
  return {c, beta};
}

}  // namespace detail

/// H^k: the increment of M_k at a jump.
inline double h_increment(const KernelInput& in, int k) {
  detail::check_shape(in);
  if (k < 1) fail(ErrorCode::OutOfRange, "h_increment requires k >= 1");
  const auto [c, beta] = detail::tail_participation(in, k);
  double out = beta == 0 ? std::max(c - detail::mass_at(in, k), 0.0) : c;
  int survivors = 0;
  for (std::size_t j = 0; j < in.W.size(); ++j) {
    if (in.Z[j]) continue;
    ++survivors;
    if (survivors > k - 1) break;
    if (static_cast<int>(j) >= k) out += in.W[j];
  }
  return out;
}

/// K^k: the increment of W_k at a jump. K^1 = H^1; W_0 acts as +inf.
inline double k_increment(const KernelInput& in, int k) {
  detail::check_shape(in);
  if (k < 1) fail(ErrorCode::OutOfRange, "k_increment requires k >= 1");
  if (k == 1) return h_increment(in, 1);
  const auto [c, beta] = detail::tail_participation(in, k);
  const double wk = detail::mass_at(in, k);
  const double wprev = detail::mass_at(in, k - 1);
  if (beta == 0) {
    const double median = std::max(std::min(wprev, wk), std::min(std::max(wprev, wk), c));
    return median - wk;
  }
  if (beta == 1) {
    const bool zk = static_cast<std::size_t>(k) <= in.Z.size() && in.Z[k - 1];
    return zk ? std::min(wk + c, wprev) - wk : 0.0;
  }
  int survivors = 0;
  for (std::size_t j = 0; j < in.W.size(); ++j) {
    if (in.Z[j]) continue;
    ++survivors;
    if (survivors == k - 1) return (static_cast<int>(j) >= k ? in.W[j] : 0.0) - wk;
  }
  return -wk;
}

/// Brute-force post-jump ordered masses: non-participants plus the merged
/// atom dust r + sum_{Z_j = 1} W_j, sorted and zero-padded to k_max.
inline std::vector<double> merge_oracle(const KernelInput& in, int k_max) {
  detail::check_shape(in);
  std::vector<double> out;
  out.reserve(in.W.size() + 1);
  double merged = in.dust * in.r;
  for (std::size_t j = 0; j < in.W.size(); ++j) {
    if (in.Z[j]) {
      merged += in.W[j];
    } else {
      out.push_back(in.W[j]);
    }
  }
  out.push_back(merged);
  std::sort(out.begin(), out.end(), std::greater<>());
  out.resize(static_cast<std::size_t>(std::max(k_max, 0)), 0.0);
  return out;
}

}  // namespace dustflow
