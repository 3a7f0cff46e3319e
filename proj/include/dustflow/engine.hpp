#pragma once

// Atom dynamics of the truncated flow: the measure mu_t = sum_j W_j delta_{V_j}
// together with the dust e^{-S_t}, updated jump by jump.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include "dustflow/error.hpp"
#include "dustflow/jumps.hpp"
#include "dustflow/measure.hpp"
#include "dustflow/rng.hpp"
#include "json.hpp"

namespace dustflow {

/// m_{r,u}(z) = Median{(z-r)/(1-r), z/(1-r), u}.
inline double median_map(double r, double u, double z) {
  const double lo = u * (1.0 - r);
  if (z < lo) return z / (1.0 - r);
  if (z <= lo + r) return u;
  return (z - r) / (1.0 - r);
}

/// Closed interval I_{r,u} = [u(1-r), u(1-r)+r].
inline bool in_jump_interval(double r, double u, double z) {
  const double lo = u * (1.0 - r);
  return z >= lo && z <= lo + r;
}

struct AtomRecord {
  double v = 0.0;      // position
  double w = 0.0;      // mass
  double birth = 0.0;  // creation time
};

inline constexpr std::uint64_t kDefaultMaxJumps = 10'000'000;

struct AtomSystem {
  double t = 0.0;
  double S = 0.0;
  double dust = 1.0;
  std::vector<AtomRecord> atoms;
  std::uint64_t jumps_applied = 0;
  std::uint64_t max_jumps = kDefaultMaxJumps;

  double atom_mass() const {
    double total = 0.0;
    for (const auto& a : atoms) total += a.w;
    return total;
  }
};

struct MergeReport {
  std::vector<std::size_t> merged_indices;  // pre-jump indices absorbed
  double new_mass = 0.0;
  double new_position = 0.0;
  double dust_contribution = 0.0;
};

namespace detail {

// Shared by apply_jump and the report-free fast path used in Monte Carlo.
inline void apply_jump_impl(AtomSystem& sys, const Jump& j, MergeReport* report) {
  if (j.s < sys.t) fail(ErrorCode::TimeRegression, "jump time precedes system time");
  if (sys.jumps_applied >= sys.max_jumps)
    fail(ErrorCode::JumpCapExceeded, "jump count exceeds max_jumps");
  const double lo = j.u * (1.0 - j.r);
  const double hi = lo + j.r;
  const double contribution = sys.dust * j.r;
  double absorbed = 0.0;
  std::size_t keep = 0;
  for (std::size_t i = 0; i < sys.atoms.size(); ++i) {
    AtomRecord a = sys.atoms[i];
    if (a.v >= lo && a.v <= hi) {
      absorbed += a.w;
      if (report) report->merged_indices.push_back(i);
      continue;
    }
    a.v = a.v < lo ? a.v / (1.0 - j.r) : (a.v - j.r) / (1.0 - j.r);
    sys.atoms[keep++] = a;
  }
  sys.atoms.resize(keep);
  sys.atoms.push_back({j.u, contribution + absorbed, j.s});
  sys.dust *= 1.0 - j.r;
  sys.S -= std::log1p(-j.r);
  sys.t = j.s;
  ++sys.jumps_applied;
  if (report) {
    report->new_mass = contribution + absorbed;
    report->new_position = j.u;
    report->dust_contribution = contribution;
  }
}

}  // namespace detail

inline MergeReport apply_jump(AtomSystem& sys, const Jump& j) {
  MergeReport report;
  detail::apply_jump_impl(sys, j, &report);
  return report;
}

inline void apply_jump_fast(AtomSystem& sys, const Jump& j) { detail::apply_jump_impl(sys, j, nullptr); }

/// Ranking order: larger mass first, then earlier birth, then lower position.
inline bool ranks_before(const AtomRecord& x, const AtomRecord& y) {
  if (x.w != y.w) return x.w > y.w;
  if (x.birth != y.birth) return x.birth < y.birth;
  return x.v < y.v;
}

/// The k highest-ranked atoms, in rank order.
inline std::vector<AtomRecord> top_atoms(const AtomSystem& sys, std::size_t k) {
  std::vector<AtomRecord> atoms = sys.atoms;
  const std::size_t n = std::min(k, atoms.size());
  std::partial_sort(atoms.begin(), atoms.begin() + static_cast<std::ptrdiff_t>(n), atoms.end(), ranks_before);
  atoms.resize(n);
  return atoms;
}

/// W_1 >= ... >= W_k, zero-padded beyond the atom count.
inline std::vector<double> top_k(const AtomSystem& sys, std::size_t k) {
  std::vector<double> out(k, 0.0);
  const auto atoms = top_atoms(sys, k);
  for (std::size_t i = 0; i < atoms.size(); ++i) out[i] = atoms[i].w;
  return out;
}

inline nlohmann::json atom_snapshot_json(const AtomSystem& sys) {
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : sys.atoms) atoms.push_back({a.v, a.w, a.birth});
  return {{"t", sys.t}, {"dust", sys.dust}, {"atoms", atoms}};
}

/// Runs the jump stream through `sys`, calling on_grid(i, sys) once every
/// jump with s <= grid[i] has been applied. `on_jump(sys, jump)` is called
/// before each jump is applied.
template <class OnGrid, class OnJump>
void drive(AtomSystem& sys, JumpStream& stream, const std::vector<double>& grid, OnGrid&& on_grid,
           OnJump&& on_jump) {
  std::optional<Jump> pending = stream.next();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    while (pending && pending->s <= grid[i]) {
      on_jump(static_cast<const AtomSystem&>(sys), *pending);
      apply_jump_fast(sys, *pending);
      pending = stream.next();
    }
    on_grid(i, static_cast<const AtomSystem&>(sys));
  }
}

template <class OnGrid>
void drive(AtomSystem& sys, JumpStream& stream, const std::vector<double>& grid, OnGrid&& on_grid) {
  drive(sys, stream, grid, std::forward<OnGrid>(on_grid), [](const AtomSystem&, const Jump&) {});
}

inline void check_grid(const std::vector<double>& grid) {
  if (grid.empty()) fail(ErrorCode::OutOfRange, "time grid is empty");
  if (grid.front() < 0.0) fail(ErrorCode::OutOfRange, "time grid must start at t >= 0");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) fail(ErrorCode::OutOfRange, "time grid must be strictly increasing");
}

struct Trajectory {
  std::vector<double> t;
  std::vector<double> dust;
  std::vector<std::vector<double>> W;  // W[i] = top k_max masses at t[i]
  std::vector<nlohmann::json> snapshots;  // filled when requested
};

struct SimulateOptions {
  double delta = 1e-3;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  int k_max = 5;
  bool keep_snapshots = false;
  std::uint64_t max_jumps = kDefaultMaxJumps;
};

inline Trajectory simulate(const LambdaMeasure& m, const std::vector<double>& grid, const SimulateOptions& opt,
                           std::shared_ptr<const JumpSizeSampler> sampler = nullptr) {
  check_grid(grid);
  if (!m.has_dust()) fail(ErrorCode::NoDust, "no dust: H(Lambda) diverges");
  if (opt.k_max < 1) fail(ErrorCode::OutOfRange, "k_max must be >= 1");
  if (!sampler) sampler = std::make_shared<const JumpSizeSampler>(m, opt.delta);
  JumpStream stream(sampler, {opt.delta, grid.back(), opt.seed, opt.stream_id});
  AtomSystem sys;
  sys.max_jumps = opt.max_jumps;
  Trajectory out;
  drive(sys, stream, grid, [&](std::size_t i, const AtomSystem& s) {
    out.t.push_back(grid[i]);
    out.dust.push_back(s.dust);
    out.W.push_back(top_k(s, static_cast<std::size_t>(opt.k_max)));
    if (opt.keep_snapshots) {
      auto snap = atom_snapshot_json(s);
      snap["t"] = grid[i];
      out.snapshots.push_back(std::move(snap));
    }
  });
  return out;
}

inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr, int k_max) {
  os << "t,dust";
  for (int k = 1; k <= k_max; ++k) os << ",W" << k;
  os << '\n';
  for (std::size_t i = 0; i < tr.t.size(); ++i) {
    os << format_real(tr.t[i]) << ',' << format_real(tr.dust[i]);
    for (double w : tr.W[i]) os << ',' << format_real(w);
    os << '\n';
  }
}

/// n sample points carried through the flow of inverses.
struct PaintboxTrace {
  std::vector<double> seeds;
  std::vector<double> positions;
};

/// Seeds drawn uniformly and sorted, so positions stay sorted under the flow.
inline PaintboxTrace make_paintbox(std::size_t n, std::uint64_t seed, std::uint64_t stream_id) {
  CounterRng rng(seed, stream_key(StreamDomain::Seeds, stream_id));
  PaintboxTrace trace;
  trace.seeds.resize(n);
  for (auto& s : trace.seeds) s = rng.uniform();
  std::sort(trace.seeds.begin(), trace.seeds.end());
  trace.positions = trace.seeds;
  return trace;
}

inline PaintboxTrace make_paintbox(std::vector<double> seeds) {
  PaintboxTrace trace;
  trace.seeds = std::move(seeds);
  trace.positions = trace.seeds;
  return trace;
}

inline void paintbox_step(PaintboxTrace& trace, const Jump& j) {
  for (auto& p : trace.positions) p = median_map(j.r, j.u, p);
}

/// Blocks of {0..n-1} grouped by exact equality of flow images.
struct Partition {
  std::vector<std::vector<std::size_t>> blocks;  // ordered by smallest member

  /// Block sizes in nonincreasing order.
  std::vector<int> shape() const {
    std::vector<int> sizes;
    for (const auto& b : blocks) sizes.push_back(static_cast<int>(b.size()));
    std::sort(sizes.begin(), sizes.end(), std::greater<>());
    return sizes;
  }
};

inline Partition extract_partition(const PaintboxTrace& trace) {
  std::map<double, std::size_t> block_of;
  Partition part;
  for (std::size_t i = 0; i < trace.positions.size(); ++i) {
    auto [it, fresh] = block_of.try_emplace(trace.positions[i], part.blocks.size());
    if (fresh) part.blocks.emplace_back();
    part.blocks[it->second].push_back(i);
  }
  return part;
}

}  // namespace dustflow
