#include "terra/optim.hpp"

#include <cmath>
#include <string>

#include "terra/errors.hpp"

namespace terra {

void AdamConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ContractError("AdamConfig: learning_rate must be positive and finite");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ContractError("AdamConfig: betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ContractError("AdamConfig: epsilon must be positive");
    if (clip_norm < 0.0 || !std::isfinite(clip_norm)) {
        throw ContractError("AdamConfig: clip_norm must be >= 0 and finite");
    }
}

AdamState adam_init(const std::vector<std::span<const double>>& params) {
    AdamState state;
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const auto& p : params) {
        state.m.emplace_back(p.size(), 0.0);
        state.v.emplace_back(p.size(), 0.0);
    }
    return state;
}

void adam_step(std::vector<std::span<double>> params,
               const std::vector<std::span<const double>>& grads, AdamState& state,
               const AdamConfig& config) {
    config.validate();
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw ContractError("adam_step: tensor count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != grads[i].size() || params[i].size() != state.m[i].size()) {
            throw ContractError("adam_step: tensor " + std::to_string(i) + " shape mismatch");
        }
    }

    double grad_scale = 1.0;
    if (config.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& g : grads) {
            for (double v : g) sq += v * v;
        }
        const double norm = std::sqrt(sq);
        if (norm > config.clip_norm) grad_scale = config.clip_norm / norm;
    }

    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = state.m[i];
        auto& v = state.v[i];
        auto& w = params[i];
        const auto& g = grads[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = g[k] * grad_scale;
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * gk;
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * gk * gk;
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            w[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    }
}

}  // namespace terra
