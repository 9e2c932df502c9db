#include "terra/objective.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "terra/errors.hpp"

namespace {

using terra::RealVector;
using terra::RegularizationSpec;
using terra::TensorViews;

TensorViews views_of(const RealVector& v) { return {std::span<const double>(v)}; }

TEST(ElasticNet, SingleWeightPointValue) {
    const RealVector w = {2.0};
    // 0.5 * (0.25 * |2| + 0.75 * 4) = 1.75
    EXPECT_DOUBLE_EQ(terra::elastic_net_penalty(views_of(w), {0.5, 0.25}), 1.75);
}

TEST(ElasticNet, GammaOneIsPureL1) {
    const RealVector w = {2.0, -3.0, 0.5, -0.25, 0.0};
    double l1 = 0.0;
    for (double x : w) l1 += std::fabs(x);
    EXPECT_EQ(terra::elastic_net_penalty(views_of(w), {0.7, 1.0}), 0.7 * l1);
}

TEST(ElasticNet, GammaZeroIsPureSquaredL2) {
    const RealVector w = {2.0, -3.0, 0.5, -0.25};
    double l2 = 0.0;
    for (double x : w) l2 += x * x;
    EXPECT_EQ(terra::elastic_net_penalty(views_of(w), {0.7, 0.0}), 0.7 * l2);
}

TEST(ElasticNet, LambdaZeroGivesExactZero) {
    const RealVector w = {5.0, -2.0};
    EXPECT_EQ(terra::elastic_net_penalty(views_of(w), {0.0, 0.5}), 0.0);
}

TEST(ElasticNet, SumsAcrossAllTensors) {
    const RealVector a = {1.0};
    const RealVector b = {-2.0};
    const TensorViews both = {std::span<const double>(a), std::span<const double>(b)};
    const RegularizationSpec reg{1.0, 0.5};
    const double expected = terra::elastic_net_penalty(views_of(a), reg) +
                            terra::elastic_net_penalty(views_of(b), reg);
    EXPECT_DOUBLE_EQ(terra::elastic_net_penalty(both, reg), expected);
}

TEST(ElasticNet, GrowsWithWeightMagnitude) {
    const RegularizationSpec reg{0.3, 0.4};
    double prev = -1.0;
    for (double scale : {0.5, 1.0, 2.0, 4.0}) {
        const RealVector w = {scale, -scale};
        const double p = terra::elastic_net_penalty(views_of(w), reg);
        EXPECT_GT(p, prev);
        prev = p;
    }
}

TEST(ElasticNet, SpecValidation) {
    EXPECT_THROW((RegularizationSpec{-0.1, 0.5}).validate(), terra::ContractError);
    EXPECT_THROW((RegularizationSpec{0.1, -0.1}).validate(), terra::ContractError);
    EXPECT_THROW((RegularizationSpec{0.1, 1.1}).validate(), terra::ContractError);
    EXPECT_NO_THROW((RegularizationSpec{0.0, 0.0}).validate());
    EXPECT_NO_THROW((RegularizationSpec{1.0, 1.0}).validate());
}

TEST(PenaltyGradient, PointValuesAndSubgradientAtZero) {
    // 1.0 * (0.5 * sign(2) + 0.5 * 2 * 2) = 2.5
    EXPECT_DOUBLE_EQ(terra::penalty_gradient_entry(2.0, {1.0, 0.5}), 2.5);
    EXPECT_DOUBLE_EQ(terra::penalty_gradient_entry(-2.0, {1.0, 0.5}), -2.5);
    EXPECT_EQ(terra::penalty_gradient_entry(0.0, {1.0, 0.3}), 0.0);
}

TEST(PenaltyGradient, MatchesFiniteDifferenceAwayFromZero) {
    const RegularizationSpec reg{0.2, 0.6};
    const double h = 1e-6;
    for (double w : {0.8, -1.7, 3.0}) {
        const RealVector hi = {w + h};
        const RealVector lo = {w - h};
        const double fd = (terra::elastic_net_penalty(views_of(hi), reg) -
                           terra::elastic_net_penalty(views_of(lo), reg)) /
                          (2.0 * h);
        EXPECT_NEAR(terra::penalty_gradient_entry(w, reg), fd, 1e-8);
    }
}

TEST(PenaltyGradient, AccumulateAddsInPlace) {
    const RealVector w = {2.0, 0.0, -1.0};
    RealVector grad = {10.0, 10.0, 10.0};
    terra::accumulate_penalty_gradient(std::span<const double>(w), std::span<double>(grad),
                                       {1.0, 0.5});
    EXPECT_DOUBLE_EQ(grad[0], 12.5);
    EXPECT_DOUBLE_EQ(grad[1], 10.0);
    EXPECT_DOUBLE_EQ(grad[2], 10.0 - 1.5);
}

TEST(MseDataTerm, AveragesOverDimensions) {
    EXPECT_DOUBLE_EQ(terra::mse_data_term({1.0, 0.0}, {0.0, 0.0}), 0.5);
    EXPECT_DOUBLE_EQ(terra::mse_data_term({1.0, 2.0}, {1.0, 2.0}), 0.0);
    EXPECT_DOUBLE_EQ(terra::mse_data_term({3.0}, {1.0}), 4.0);
    EXPECT_THROW(terra::mse_data_term({1.0}, {1.0, 2.0}), terra::ContractError);
}

TEST(CrossEntropy, PointValues) {
    EXPECT_NEAR(terra::cross_entropy_data_term({1.0, 0.0}, {0.75, 0.25}), -std::log(0.75), 1e-15);
    EXPECT_NEAR(terra::cross_entropy_at({0.75, 0.25}, 0), -std::log(0.75), 1e-15);

    const RealVector uniform(6, 1.0 / 6.0);
    RealVector onehot(6, 0.0);
    onehot[3] = 1.0;
    EXPECT_NEAR(terra::cross_entropy_data_term(onehot, uniform), 1.791759469228055, 1e-9);
}

TEST(CrossEntropy, ClampKeepsLossFinite) {
    const double loss = terra::cross_entropy_at({0.0, 1.0}, 0);
    EXPECT_TRUE(std::isfinite(loss));
    EXPECT_NEAR(loss, -std::log(1e-12), 1e-9);
}

TEST(CrossEntropy, RejectsNonOneHotTargets) {
    EXPECT_THROW(terra::cross_entropy_data_term({0.5, 0.5}, {0.5, 0.5}), terra::ContractError);
    EXPECT_THROW(terra::cross_entropy_data_term({1.0, 1.0}, {0.5, 0.5}), terra::ContractError);
    EXPECT_THROW(terra::cross_entropy_data_term({2.0, -1.0}, {0.5, 0.5}), terra::ContractError);
    EXPECT_THROW(terra::cross_entropy_data_term({1.0}, {0.5, 0.5}), terra::ContractError);
    EXPECT_THROW(terra::cross_entropy_at({0.5, 0.5}, 2), terra::ContractError);
}

TEST(PredictingLoss, DecomposesIntoDataPlusPenalty) {
    const RealVector w = {0.5};
    const auto loss = terra::predicting_loss({1.0, 0.0}, {0.0, 0.0}, views_of(w), {0.1, 0.5});
    EXPECT_DOUBLE_EQ(loss.data_term, 0.5);
    EXPECT_NEAR(loss.penalty_term, 0.0375, 1e-15);
    EXPECT_NEAR(loss.total, 0.5375, 1e-12);
    EXPECT_EQ(loss.total, loss.data_term + loss.penalty_term);
}

TEST(PredictingLoss, LambdaZeroEqualsDataTermExactly) {
    const RealVector w = {2.0, -3.0};
    const auto loss = terra::predicting_loss({1.0, 0.0}, {0.0, 0.0}, views_of(w), {0.0, 0.5});
    EXPECT_EQ(loss.penalty_term, 0.0);
    EXPECT_EQ(loss.total, loss.data_term);
    EXPECT_DOUBLE_EQ(loss.total, 0.5);
}

TEST(ClassifyingLoss, DecomposesIntoDataPlusPenalty) {
    const RealVector w = {2.0};
    const auto loss = terra::classifying_loss({1.0, 0.0}, {0.75, 0.25}, views_of(w), {0.5, 0.25});
    EXPECT_NEAR(loss.data_term, -std::log(0.75), 1e-15);
    EXPECT_DOUBLE_EQ(loss.penalty_term, 1.75);
    EXPECT_EQ(loss.total, loss.data_term + loss.penalty_term);
}

TEST(ClassifyingLoss, UniformSixClassGivesLogSix) {
    const RealVector uniform(6, 1.0 / 6.0);
    RealVector onehot(6, 0.0);
    onehot[2] = 1.0;
    const auto loss = terra::classifying_loss(onehot, uniform, {}, {0.0, 0.5});
    EXPECT_NEAR(loss.total, std::log(6.0), 1e-9);
}

}  // namespace
