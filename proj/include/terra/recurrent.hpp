#pragma once

#include <span>
#include <vector>

#include "terra/objective.hpp"
#include "terra/seqcore.hpp"

namespace terra {

// Gate block order inside the 4h-row tensors. This layout is fixed across
// forward, backward and serialization.
inline constexpr std::size_t kGateInput = 0;
inline constexpr std::size_t kGateForget = 1;
inline constexpr std::size_t kGateCell = 2;
inline constexpr std::size_t kGateOutput = 3;
inline constexpr const char* kGateOrderTag = "ifgo";

// Trainable tensors of one LSTM layer: W (4h x d), U (4h x h), b (4h).
struct LstmParams {
    std::size_t hidden_size = 0;
    std::size_t input_size = 0;
    RealMatrix W;
    RealMatrix U;
    RealVector b;

    LstmParams() = default;
    LstmParams(std::size_t hidden, std::size_t input)
        : hidden_size(hidden),
          input_size(input),
          W(4 * hidden, input),
          U(4 * hidden, hidden),
          b(4 * hidden, 0.0) {}

    // Uniform init on +-sqrt(6/(fan_in+fan_out)); forget-gate biases start
    // at 1 so early gradients can flow through the cell path.
    void init_weights(SeededRng& rng);
};

struct LstmState {
    RealVector h;
    RealVector c;
};

// Linear map out = V h + b. Used both as the next-frame prediction head
// (out = input dim, no nonlinearity) and as the class-logit head.
struct LinearHead {
    RealMatrix V;
    RealVector b;

    LinearHead() = default;
    LinearHead(std::size_t out, std::size_t hidden) : V(out, hidden), b(out, 0.0) {}

    std::size_t out_size() const { return b.size(); }
    void init_weights(SeededRng& rng);
};

// Inverted dropout on the emitted hidden sequence. Masks apply to what the
// layer outputs to its consumer, not to the recurrent path or cell states;
// kept units scale by 1/(1-rate) so evaluation needs no rescaling.
struct DropoutSpec {
    double rate = 0.0;
    bool training = false;
    SeededRng* rng = nullptr;  // required when training with rate > 0
};

LstmState lstm_step(const LstmParams& p, const RealVector& x, const LstmState& s);

struct LstmStepCache {
    RealVector x;
    RealVector i, f, g, o;
    RealVector c;
    RealVector tanh_c;
    RealVector h;        // recurrent hidden, pre-dropout
    RealVector emitted;  // mask-scaled output handed to the consumer
    RealVector mask;     // per-unit scale: 0 or 1/(1-rate); all 1 in eval mode
};

struct LstmForwardCache {
    std::vector<LstmStepCache> steps;

    std::size_t seq_len() const { return steps.size(); }
    // Emitted states s_1..s_T.
    std::vector<LstmState> states() const;
};

LstmForwardCache lstm_forward(const LstmParams& p, const std::vector<RealVector>& xs,
                              const DropoutSpec& dropout);

// xhat = V h + b (linear activation).
RealVector apply_prediction_head(const LinearHead& head, const RealVector& h);

// softmax(V h + b); a distribution over the classes.
RealVector apply_classification_head(const LinearHead& head, const RealVector& h);

// One LSTM layer plus its output head: the trainable unit of one stage.
struct StageParams {
    LstmParams lstm;
    LinearHead head;

    StageParams() = default;
    StageParams(std::size_t hidden, std::size_t input, std::size_t out)
        : lstm(hidden, input), head(out, hidden) {}

    void init_weights(SeededRng& rng);

    // Fixed tensor order [W, U, b, V, head_b]; gradients and optimizer
    // state index against the same order.
    std::vector<std::span<double>> tensor_views();
    std::vector<std::span<const double>> tensor_views() const;
    // Tensors covered by the elastic-net penalty.
    std::vector<std::span<const double>> penalty_views(bool include_head) const;
};

struct ParamGradients {
    RealMatrix dW, dU;
    RealVector dB;
    RealMatrix dV;
    RealVector dHeadB;

    static ParamGradients zeros_like(const StageParams& p);
    void set_zero();
    std::vector<std::span<double>> tensor_views();
    std::vector<std::span<const double>> tensor_views() const;
};

enum class LossKind { Prediction, Classification };

// Targets for one sequence: one frame per input step in prediction mode, a
// single class index in classification mode.
struct SequenceTask {
    LossKind kind = LossKind::Prediction;
    const std::vector<RealVector>* target_frames = nullptr;
    std::size_t label = 0;
};

// Runs forward with the given dropout spec and accumulates into `grads` the
// exact gradient of  frame_weight * sum_t loss_t  over every stage tensor.
// Returns that weighted data-loss sum. The penalty is not included; batch
// drivers add it once.
double sequence_backward(const StageParams& p, const std::vector<RealVector>& xs,
                         const SequenceTask& task, double frame_weight,
                         const DropoutSpec& dropout, ParamGradients& grads);

// Forward-only twin of sequence_backward; same weighting, no gradients.
double sequence_data_loss(const StageParams& p, const std::vector<RealVector>& xs,
                          const SequenceTask& task, double frame_weight,
                          const DropoutSpec& dropout);

struct BpttResult {
    LossValue loss;
    ParamGradients grads;
};

// Full per-sequence objective: data terms averaged over evaluated steps plus
// the elastic-net penalty, with exact gradients for both parts.
BpttResult bptt(const StageParams& p, const std::vector<RealVector>& xs, const SequenceTask& task,
                const RegularizationSpec& reg, bool penalize_head, const DropoutSpec& dropout);

}  // namespace terra
