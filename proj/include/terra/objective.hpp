#pragma once

#include <span>
#include <vector>

#include "terra/seqcore.hpp"

namespace terra {

// Probabilities are clamped to this floor before the log in the
// classification loss, so softmax underflow cannot produce inf.
inline constexpr double kProbClamp = 1e-12;

// Elastic-net mix: lambda scales the whole penalty, gamma weights the l1
// part against the squared-l2 part.
struct RegularizationSpec {
    double lambda = 1e-4;
    double gamma = 0.5;

    void validate() const;
};

struct LossValue {
    double total = 0.0;
    double data_term = 0.0;
    double penalty_term = 0.0;
};

using TensorViews = std::vector<std::span<const double>>;

// lambda * (gamma * sum |w| + (1 - gamma) * sum w^2) over every entry of
// every tensor in the collection.
double elastic_net_penalty(const TensorViews& tensors, const RegularizationSpec& reg);

// Mean squared error over the frame dimensions: (1/d) * sum_j (x_j - xhat_j)^2.
double mse_data_term(const RealVector& x, const RealVector& x_hat);

// -sum_i y_i log(max(yhat_i, clamp)) for a one-hot y.
double cross_entropy_data_term(const RealVector& y_onehot, const RealVector& y_hat);

// Per-step variant used by the training loop: y_hat is a distribution,
// label indexes the true class.
double cross_entropy_at(const RealVector& y_hat, std::size_t label);

LossValue predicting_loss(const RealVector& x, const RealVector& x_hat, const TensorViews& params,
                          const RegularizationSpec& reg);

LossValue classifying_loss(const RealVector& y_onehot, const RealVector& y_hat,
                           const TensorViews& params, const RegularizationSpec& reg);

// d(penalty)/dw for a single entry: lambda * (gamma * sign(w) + (1-gamma) * 2w),
// with sign(0) = 0.
double penalty_gradient_entry(double w, const RegularizationSpec& reg);

// grad[i] += d(penalty)/d(values[i]) for one tensor.
void accumulate_penalty_gradient(std::span<const double> values, std::span<double> grad,
                                 const RegularizationSpec& reg);

}  // namespace terra
