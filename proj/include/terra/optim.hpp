#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "terra/seqcore.hpp"

namespace terra {

struct AdamConfig {
    double learning_rate = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 0.0;  // 0 disables gradient clipping

    void validate() const;
};

// First/second moment buffers, one pair per parameter tensor.
struct AdamState {
    std::vector<RealVector> m;
    std::vector<RealVector> v;
    std::uint64_t step_count = 0;
};

AdamState adam_init(const std::vector<std::span<const double>>& params);

// One update over aligned parameter/gradient views. Moments must have been
// initialised from tensors of the same shapes.
void adam_step(std::vector<std::span<double>> params,
               const std::vector<std::span<const double>>& grads, AdamState& state,
               const AdamConfig& config);

}  // namespace terra
