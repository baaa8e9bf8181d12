#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "specclip/rng.hpp"

using specclip::Rng;
using specclip::philox4x32_10;

// Known-answer vectors of the Random123 reference implementation.
TEST(Philox, KnownAnswerZero) {
    const auto out = philox4x32_10({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out[0], 0x6627e8d5u);
    EXPECT_EQ(out[1], 0xe169c58du);
    EXPECT_EQ(out[2], 0xbc57ac4cu);
    EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerOnes) {
    const auto out = philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(out[0], 0x408f276du);
    EXPECT_EQ(out[1], 0x41c83b0eu);
    EXPECT_EQ(out[2], 0xa20bc7c6u);
    EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPi) {
    const auto out = philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(out[0], 0xd16cfe09u);
    EXPECT_EQ(out[1], 0x94fdccebu);
    EXPECT_EQ(out[2], 0x5001e420u);
    EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DerivedStreamsDiffer) {
    const Rng root(7);
    Rng a = root.derive(1), b = root.derive(2), c = root.derive(1, 0), d = root.derive(1);
    EXPECT_NE(a.next_u64(), b.next_u64());
    EXPECT_NE(c.stream(), d.stream());
    Rng e = root.derive(1);
    a = root.derive(1);
    EXPECT_EQ(a.next_u64(), e.next_u64());
}

TEST(Rng, UniformRanges) {
    Rng r(3);
    for (int i = 0; i < 100000; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        const double v = r.uniform_pos();
        ASSERT_GT(v, 0.0);
        ASSERT_LE(v, 1.0);
    }
}

TEST(Rng, NormalMoments) {
    Rng r(11);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        s += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, SignIsBalanced) {
    Rng r(5);
    int sum = 0;
    for (int i = 0; i < 100000; ++i) sum += r.sign();
    EXPECT_LT(std::abs(sum), 2000);
}
