#include "terra/objective.hpp"

#include <cmath>
#include <string>

#include "terra/errors.hpp"

namespace terra {

void RegularizationSpec::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ContractError("RegularizationSpec: lambda must be finite and >= 0");
    }
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        throw ContractError("RegularizationSpec: gamma must lie in [0, 1]");
    }
}

double elastic_net_penalty(const TensorViews& tensors, const RegularizationSpec& reg) {
    reg.validate();
    if (reg.lambda == 0.0) return 0.0;
    double l1 = 0.0;
    double l2 = 0.0;
    for (const auto& t : tensors) {
        for (double w : t) {
            l1 += std::fabs(w);
            l2 += w * w;
        }
    }
    return reg.lambda * (reg.gamma * l1 + (1.0 - reg.gamma) * l2);
}

double mse_data_term(const RealVector& x, const RealVector& x_hat) {
    if (x.size() != x_hat.size() || x.empty()) {
        throw ContractError("mse_data_term: frame lengths differ (" + std::to_string(x.size()) +
                            " vs " + std::to_string(x_hat.size()) + ")");
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = x[j] - x_hat[j];
        acc += d * d;
    }
    return acc / static_cast<double>(x.size());
}

double cross_entropy_data_term(const RealVector& y_onehot, const RealVector& y_hat) {
    if (y_onehot.size() != y_hat.size() || y_onehot.empty()) {
        throw ContractError("cross_entropy_data_term: length mismatch");
    }
    std::size_t ones = 0;
    std::size_t label = 0;
    for (std::size_t i = 0; i < y_onehot.size(); ++i) {
        if (y_onehot[i] == 1.0) {
            ++ones;
            label = i;
        } else if (y_onehot[i] != 0.0) {
            throw ContractError("cross_entropy_data_term: y is not one-hot");
        }
    }
    if (ones != 1) throw ContractError("cross_entropy_data_term: y is not one-hot");
    return cross_entropy_at(y_hat, label);
}

double cross_entropy_at(const RealVector& y_hat, std::size_t label) {
    if (label >= y_hat.size()) throw ContractError("cross_entropy_at: label out of range");
    return -std::log(std::max(y_hat[label], kProbClamp));
}

LossValue predicting_loss(const RealVector& x, const RealVector& x_hat, const TensorViews& params,
                          const RegularizationSpec& reg) {
    LossValue loss;
    loss.data_term = mse_data_term(x, x_hat);
    loss.penalty_term = elastic_net_penalty(params, reg);
    loss.total = loss.data_term + loss.penalty_term;
    return loss;
}

LossValue classifying_loss(const RealVector& y_onehot, const RealVector& y_hat,
                           const TensorViews& params, const RegularizationSpec& reg) {
    LossValue loss;
    loss.data_term = cross_entropy_data_term(y_onehot, y_hat);
    loss.penalty_term = elastic_net_penalty(params, reg);
    loss.total = loss.data_term + loss.penalty_term;
    return loss;
}

double penalty_gradient_entry(double w, const RegularizationSpec& reg) {
    const double sign = w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0);
    return reg.lambda * (reg.gamma * sign + (1.0 - reg.gamma) * 2.0 * w);
}

void accumulate_penalty_gradient(std::span<const double> values, std::span<double> grad,
                                 const RegularizationSpec& reg) {
    if (values.size() != grad.size()) {
        throw ContractError("accumulate_penalty_gradient: shape mismatch");
    }
    reg.validate();
    if (reg.lambda == 0.0) return;
    for (std::size_t i = 0; i < values.size(); ++i) {
        grad[i] += penalty_gradient_entry(values[i], reg);
    }
}

}  // namespace terra
