#include "terra/seqcore.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>

#include "terra/errors.hpp"

namespace {

using terra::RealMatrix;
using terra::RealVector;
using terra::SeededRng;

// First outputs of the seed-42 stream, computed with an independent
// implementation of the same generator.
TEST(SeededRng, MatchesFrozenReferenceOutputs) {
    SeededRng rng(42);
    EXPECT_EQ(rng.next_u64(), 13679457532755275413ULL);
    EXPECT_EQ(rng.next_u64(), 2949826092126892291ULL);
    EXPECT_EQ(rng.next_u64(), 5139283748462763858ULL);
}

TEST(SeededRng, SameSeedSameStream) {
    SeededRng a(7);
    SeededRng b(7);
    for (int i = 0; i < 32; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(SeededRng, DifferentSeedsDiverge) {
    SeededRng a(7);
    SeededRng b(8);
    int same = 0;
    for (int i = 0; i < 32; ++i) same += a.next_u64() == b.next_u64();
    EXPECT_EQ(same, 0);
}

TEST(SeededRng, UniformMatchesFrozenReference) {
    SeededRng rng(42);
    EXPECT_DOUBLE_EQ(rng.uniform(0.0, 1.0), 0.7415648787718233);
}

TEST(SeededRng, UniformStaysInHalfOpenRange) {
    SeededRng rng(3);
    for (int i = 0; i < 20000; ++i) {
        const double u = rng.uniform(-2.0, 5.0);
        EXPECT_GE(u, -2.0);
        EXPECT_LT(u, 5.0);
    }
}

TEST(SeededRng, UniformRejectsEmptyRange) {
    SeededRng rng(1);
    EXPECT_THROW(rng.uniform(1.0, 1.0), terra::ContractError);
    EXPECT_THROW(rng.uniform(2.0, 1.0), terra::ContractError);
}

TEST(SeededRng, GaussianMatchesFrozenReference) {
    SeededRng rng(42);
    (void)rng.uniform(0.0, 1.0);  // consume the first word like the reference run
    EXPECT_DOUBLE_EQ(rng.gaussian(0.0, 1.0), -0.342244134738334);
    EXPECT_DOUBLE_EQ(rng.gaussian(0.0, 1.0), 1.8839193938540324);  // cached spare
}

TEST(SeededRng, GaussianPairConsumesTwoWords) {
    SeededRng a(9);
    SeededRng b(9);
    (void)a.gaussian(0.0, 1.0);
    (void)a.gaussian(0.0, 1.0);  // spare, no new words
    (void)b.next_u64();
    (void)b.next_u64();
    EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(SeededRng, ZeroStddevReturnsMeanWithoutConsumingState) {
    SeededRng a(5);
    SeededRng b(5);
    EXPECT_EQ(a.gaussian(3.25, 0.0), 3.25);
    EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_THROW(a.gaussian(0.0, -1.0), terra::ContractError);
}

TEST(SeededRng, GaussianMomentsLookStandard) {
    SeededRng rng(11);
    const int n = 40000;
    double sum = 0.0;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian(0.0, 1.0);
        sum += g;
        sq += g * g;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    EXPECT_NEAR(mean, 0.0, 0.02);
    EXPECT_NEAR(var, 1.0, 0.03);
}

TEST(DeriveStream, MatchesFrozenReferenceAndSeparatesStreams) {
    EXPECT_EQ(terra::derive_stream(42, 1), 14473931205035997723ULL);
    EXPECT_EQ(terra::derive_stream(42, 2), 18048596636615606144ULL);
    EXPECT_EQ(terra::derive_stream(42, 1), terra::derive_stream(42, 1));
    EXPECT_NE(terra::derive_stream(42, 1), terra::derive_stream(43, 1));
}

TEST(Softmax, MatchesClosedFormAndIsShiftInvariant) {
    const RealVector p = terra::softmax({0.0, std::log(2.0)});
    ASSERT_EQ(p.size(), 2u);
    EXPECT_NEAR(p[0], 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(p[1], 2.0 / 3.0, 1e-15);

    const RealVector q = terra::softmax({100.0, 100.0 + std::log(2.0)});
    EXPECT_NEAR(q[0], 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(q[1], 2.0 / 3.0, 1e-12);
    EXPECT_THROW(terra::softmax({}), terra::ContractError);
}

TEST(Softmax, HandlesExtremeLogitsWithoutOverflow) {
    const RealVector p = terra::softmax({1000.0, -1000.0});
    EXPECT_NEAR(p[0], 1.0, 1e-15);
    EXPECT_GE(p[1], 0.0);
    double total = 0.0;
    for (double v : p) total += v;
    EXPECT_NEAR(total, 1.0, 1e-15);
}

TEST(MatVec, MatchesHandComputation) {
    RealMatrix m(2, 3);
    m(0, 0) = 1.0;
    m(0, 1) = 2.0;
    m(0, 2) = 3.0;
    m(1, 0) = -1.0;
    m(1, 1) = 0.5;
    m(1, 2) = 4.0;
    const RealVector v = {2.0, 1.0, -1.0};
    const RealVector out = terra::matvec(m, v);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_DOUBLE_EQ(out[0], 1.0);
    EXPECT_DOUBLE_EQ(out[1], -5.5);

    const RealVector with_bias = terra::matvec_add(m, v, {10.0, 20.0});
    EXPECT_DOUBLE_EQ(with_bias[0], 11.0);
    EXPECT_DOUBLE_EQ(with_bias[1], 14.5);

    EXPECT_THROW(terra::matvec(m, {1.0, 2.0}), terra::ContractError);
    EXPECT_THROW(terra::matvec_add(m, v, {1.0}), terra::ContractError);
}

TEST(Activations, PointValues) {
    EXPECT_DOUBLE_EQ(terra::sigmoid(0.0), 0.5);
    EXPECT_NEAR(terra::sigmoid(2.0), 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
    EXPECT_DOUBLE_EQ(terra::relu(-3.0), 0.0);
    EXPECT_DOUBLE_EQ(terra::relu(3.0), 3.0);
    const RealVector t = terra::apply_activation(terra::Activation::Tanh, {0.5});
    EXPECT_DOUBLE_EQ(t[0], std::tanh(0.5));
    const RealVector r = terra::apply_activation(terra::Activation::Relu, {-1.0, 2.0});
    EXPECT_DOUBLE_EQ(r[0], 0.0);
    EXPECT_DOUBLE_EQ(r[1], 2.0);
}

TEST(FormatReal, RoundTripsExactBitPatterns) {
    const double cases[] = {0.0,       -0.0,   1.0 / 3.0,          0.1,
                            -12345.678, 1e-300, 1.7976931348623157e308,
                            2.2250738585072014e-308, 42.0};
    for (double x : cases) {
        double back = 0.0;
        ASSERT_TRUE(terra::try_parse_real(terra::format_real(x), back));
        EXPECT_EQ(back, x);
    }
}

TEST(TryParseReal, RejectsMalformedTokens) {
    double out = 0.0;
    EXPECT_FALSE(terra::try_parse_real("", out));
    EXPECT_FALSE(terra::try_parse_real("abc", out));
    EXPECT_FALSE(terra::try_parse_real("1.2.3", out));
    EXPECT_FALSE(terra::try_parse_real("1e", out));
    EXPECT_FALSE(terra::try_parse_real("4x", out));
    EXPECT_TRUE(terra::try_parse_real("-1.5e-3", out));
    EXPECT_DOUBLE_EQ(out, -1.5e-3);
}

}  // namespace
