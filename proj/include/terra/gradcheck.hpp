#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "terra/objective.hpp"
#include "terra/recurrent.hpp"

namespace terra {

struct GradCheckConfig {
    std::size_t hidden_size = 8;
    std::size_t input_dim = 4;
    std::size_t seq_len = 5;
    std::size_t class_count = 3;
    std::size_t n_sequences = 2;
    double fd_step = 1e-5;
    double tolerance = 1e-5;
    double exclude_below = 1e-3;  // skip entries straddling the l1 kink
    std::uint64_t seed = 7;
    bool corrupt = false;  // harness sanity hook: offsets one gradient entry

    void validate() const;
};

struct TensorCheck {
    std::string tensor;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
};

struct ScenarioResult {
    std::string name;
    std::vector<TensorCheck> tensors;
    bool passed = false;
};

struct GradCheckReport {
    std::vector<ScenarioResult> scenarios;
    bool passed = false;
};

// Compares backpropagated gradients of both losses against central finite
// differences on a small random net, across lambda = 0 and lambda = 0.1 with
// gamma in {0, 0.5, 1}.
GradCheckReport run_gradcheck(const GradCheckConfig& config);

void write_gradcheck_report(std::ostream& out, const GradCheckReport& report);

}  // namespace terra
