#include <gtest/gtest.h>

#include <set>

#include "sparsewalk/rng.hpp"

using namespace sparsewalk;

TEST(Philox, KnownAnswerZero) {
  const auto out = Philox4x32::block({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerOnes) {
  const auto out = Philox4x32::block({~0u, ~0u, ~0u, ~0u}, {~0u, ~0u});
  EXPECT_EQ(out[0], 0x408f276du);
  EXPECT_EQ(out[1], 0x41c83b0eu);
  EXPECT_EQ(out[2], 0xa20bc7c6u);
  EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPi) {
  const auto out = Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(out[0], 0xd16cfe09u);
  EXPECT_EQ(out[1], 0x94fdccebu);
  EXPECT_EQ(out[2], 0x5001e420u);
  EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(StreamRng, ReproducibleAndStreamsDiffer) {
  StreamRng a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  std::set<std::uint32_t> seen;
  bool differ_c = false, differ_d = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u32();
    EXPECT_EQ(x, b.next_u32());
    differ_c |= x != c.next_u32();
    differ_d |= x != d.next_u32();
    seen.insert(x);
  }
  EXPECT_TRUE(differ_c);
  EXPECT_TRUE(differ_d);
  EXPECT_GT(seen.size(), 95u);
}

TEST(StreamRng, UniformMoments) {
  StreamRng g(1, 0);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = g.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
  }
  EXPECT_NEAR(s / n, 0.5, 3e-3);
  EXPECT_NEAR(s2 / n, 1.0 / 3.0, 3e-3);
}
