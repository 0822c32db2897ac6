#include <gtest/gtest.h>

#include <cmath>

#include "sgldp/rng.hpp"

using namespace sgldp;

// Known-answer vectors published with the Random123 reference implementation.
TEST(Philox, KnownAnswers) {
    EXPECT_EQ(Philox4x32::generate({0, 0, 0, 0}, {0, 0}),
              (Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
    EXPECT_EQ(Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
              (Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
    EXPECT_EQ(Philox4x32::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
              (Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Philox, OpenUnitInterval) {
    EXPECT_GT(to_open_unit(0, 0), 0.0);
    EXPECT_LT(to_open_unit(0xffffffffu, 0xffffffffu), 1.0);
}

TEST(NoiseDriver, Deterministic) {
    const NoiseDriver a{123, stream_id(2, 7), 3, 1};
    const NoiseDriver b{123, stream_id(2, 7), 3, 1};
    for (std::uint64_t s = 0; s < 50; ++s) EXPECT_EQ(a.increment(s, 0.01), b.increment(s, 0.01));
    const NoiseDriver c{123, stream_id(2, 8), 3, 1};
    EXPECT_NE(a.increment(0, 0.01), c.increment(0, 0.01));
    const NoiseDriver d{124, stream_id(2, 7), 3, 1};
    EXPECT_NE(a.increment(0, 0.01), d.increment(0, 0.01));
}

TEST(NoiseDriver, SubstepsShareTheFinePath) {
    const NoiseDriver fine{9, 5, 2, 1};
    const NoiseDriver coarse{9, 5, 2, 2};
    const double dt = 0.02;
    for (std::uint64_t k = 0; k < 20; ++k) {
        const Eigen::VectorXd sum = fine.increment(2 * k, dt / 2) + fine.increment(2 * k + 1, dt / 2);
        EXPECT_LE((coarse.increment(k, dt) - sum).norm(), 1e-15);
    }
}

TEST(NoiseDriver, Moments) {
    const NoiseDriver g{77, 0, 4, 1};
    double s1 = 0.0, s2 = 0.0, s4 = 0.0;
    const int n = 50000;
    for (int k = 0; k < n; ++k) {
        for (int j = 0; j < 4; ++j) {
            const double z = g.normal(static_cast<std::uint64_t>(k), j);
            s1 += z;
            s2 += z * z;
            s4 += z * z * z * z;
        }
    }
    const double N = 4.0 * n;
    EXPECT_NEAR(s1 / N, 0.0, 5.0 / std::sqrt(N));
    EXPECT_NEAR(s2 / N, 1.0, 5.0 * std::sqrt(2.0 / N));
    EXPECT_NEAR(s4 / N, 3.0, 5.0 * std::sqrt(96.0 / N));
}

TEST(NoiseDriver, LargeStepIndicesStayDistinct) {
    const NoiseDriver g{1, 3, 1, 1};
    const std::uint64_t hi = std::uint64_t{1} << 32;
    EXPECT_NE(g.normal(5, 0), g.normal(5 + hi, 0));
}
