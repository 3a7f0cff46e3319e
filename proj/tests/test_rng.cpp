#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dustflow/rng.hpp"
#include "dustflow/stats.hpp"

using namespace dustflow;

TEST(Philox, KnownAnswerVectors) {
  using A4 = std::array<std::uint32_t, 4>;
  EXPECT_EQ(philox4x32_10(A4{0, 0, 0, 0}, {0, 0}), (A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(philox4x32_10(A4{~0u, ~0u, ~0u, ~0u}, {~0u, ~0u}),
            (A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(philox4x32_10(A4{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
            (A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(CounterRng, SameKeySameSequence) {
  CounterRng a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a(), b());
}

TEST(CounterRng, DistinctStreamsDiffer) {
  CounterRng a(42, 7), b(42, 8), c(43, 7);
  int same_ab = 0, same_ac = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a(), y = b(), z = c();
    same_ab += x == y;
    same_ac += x == z;
  }
  EXPECT_EQ(same_ab, 0);
  EXPECT_EQ(same_ac, 0);
}

TEST(CounterRng, UniformIsOpenAndCentred) {
  CounterRng rng(1, 0);
  stats::Moments m;
  for (int i = 0; i < 200'000; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    m.add(u);
  }
  EXPECT_NEAR(m.mean, 0.5, 4 * std::sqrt(1.0 / 12 / m.n));
  EXPECT_NEAR(m.variance(), 1.0 / 12, 0.002);
}

TEST(CounterRng, ExponentialMean) {
  CounterRng rng(2, 0);
  stats::Moments m;
  for (int i = 0; i < 200'000; ++i) m.add(rng.exponential(4.0));
  EXPECT_NEAR(m.mean, 0.25, 4 * m.stderr_of_mean());
}

TEST(CounterRng, BelowIsUniformOnRange) {
  CounterRng rng(3, 0);
  std::array<int, 7> counts{};
  const int n = 70'000;
  for (int i = 0; i < n; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
  }
  for (int c : counts) EXPECT_NEAR(c, n / 7.0, 4 * std::sqrt(n / 7.0));
}

TEST(CounterRng, BlocksConsumedCountsPairs) {
  CounterRng rng(5, 0);
  EXPECT_EQ(rng.blocks_consumed(), 0u);
  rng();
  EXPECT_EQ(rng.blocks_consumed(), 1u);
  rng();
  EXPECT_EQ(rng.blocks_consumed(), 1u);
  rng();
  EXPECT_EQ(rng.blocks_consumed(), 2u);
}

TEST(StreamKey, DomainsDoNotCollide) {
  std::set<std::uint64_t> keys;
  for (auto d : {StreamDomain::Jumps, StreamDomain::Seeds, StreamDomain::Gillespie, StreamDomain::Flags})
    for (std::uint64_t r = 0; r < 100; ++r) keys.insert(stream_key(d, r));
  EXPECT_EQ(keys.size(), 400u);
  EXPECT_EQ(stream_key(StreamDomain::Jumps, 17), 17u);
}
