#include "terra/recurrent.hpp"

#include <cmath>
#include <string>

#include "terra/errors.hpp"

namespace terra {

namespace {

void fill_uniform(SeededRng& rng, std::vector<double>& values, double bound) {
    for (double& v : values) v = rng.uniform(-bound, bound);
}

void check_dropout(const DropoutSpec& d) {
    if (!(d.rate >= 0.0 && d.rate < 1.0)) {
        throw ContractError("DropoutSpec: rate must lie in [0, 1)");
    }
    if (d.training && d.rate > 0.0 && d.rng == nullptr) {
        throw ContractError("DropoutSpec: training-mode dropout needs an rng");
    }
}

}  // namespace

void LstmParams::init_weights(SeededRng& rng) {
    const double d = static_cast<double>(input_size);
    const double h = static_cast<double>(hidden_size);
    fill_uniform(rng, W.values, std::sqrt(6.0 / (d + h)));
    fill_uniform(rng, U.values, std::sqrt(6.0 / (h + h)));
    std::fill(b.begin(), b.end(), 0.0);
    for (std::size_t j = 0; j < hidden_size; ++j) b[kGateForget * hidden_size + j] = 1.0;
}

void LinearHead::init_weights(SeededRng& rng) {
    const double fan_in = static_cast<double>(V.cols);
    const double fan_out = static_cast<double>(V.rows);
    fill_uniform(rng, V.values, std::sqrt(6.0 / (fan_in + fan_out)));
    std::fill(b.begin(), b.end(), 0.0);
}

void StageParams::init_weights(SeededRng& rng) {
    lstm.init_weights(rng);
    head.init_weights(rng);
}

std::vector<std::span<double>> StageParams::tensor_views() {
    return {std::span<double>(lstm.W.values), std::span<double>(lstm.U.values),
            std::span<double>(lstm.b), std::span<double>(head.V.values),
            std::span<double>(head.b)};
}

std::vector<std::span<const double>> StageParams::tensor_views() const {
    return {std::span<const double>(lstm.W.values), std::span<const double>(lstm.U.values),
            std::span<const double>(lstm.b), std::span<const double>(head.V.values),
            std::span<const double>(head.b)};
}

std::vector<std::span<const double>> StageParams::penalty_views(bool include_head) const {
    std::vector<std::span<const double>> views = {std::span<const double>(lstm.W.values),
                                                  std::span<const double>(lstm.U.values),
                                                  std::span<const double>(lstm.b)};
    if (include_head) {
        views.emplace_back(head.V.values);
        views.emplace_back(head.b);
    }
    return views;
}

ParamGradients ParamGradients::zeros_like(const StageParams& p) {
    ParamGradients g;
    g.dW = RealMatrix(p.lstm.W.rows, p.lstm.W.cols);
    g.dU = RealMatrix(p.lstm.U.rows, p.lstm.U.cols);
    g.dB = RealVector(p.lstm.b.size(), 0.0);
    g.dV = RealMatrix(p.head.V.rows, p.head.V.cols);
    g.dHeadB = RealVector(p.head.b.size(), 0.0);
    return g;
}

void ParamGradients::set_zero() {
    std::fill(dW.values.begin(), dW.values.end(), 0.0);
    std::fill(dU.values.begin(), dU.values.end(), 0.0);
    std::fill(dB.begin(), dB.end(), 0.0);
    std::fill(dV.values.begin(), dV.values.end(), 0.0);
    std::fill(dHeadB.begin(), dHeadB.end(), 0.0);
}

std::vector<std::span<double>> ParamGradients::tensor_views() {
    return {std::span<double>(dW.values), std::span<double>(dU.values), std::span<double>(dB),
            std::span<double>(dV.values), std::span<double>(dHeadB)};
}

std::vector<std::span<const double>> ParamGradients::tensor_views() const {
    return {std::span<const double>(dW.values), std::span<const double>(dU.values),
            std::span<const double>(dB), std::span<const double>(dV.values),
            std::span<const double>(dHeadB)};
}

namespace {

// One recurrence step; writes every cached quantity except the dropout mask.
void step_core(const LstmParams& p, const RealVector& x, const RealVector& h_prev,
               const RealVector& c_prev, LstmStepCache& out) {
    const std::size_t h = p.hidden_size;
    if (x.size() != p.input_size) {
        throw ContractError("lstm_step: input has " + std::to_string(x.size()) +
                            " entries, layer expects " + std::to_string(p.input_size));
    }
    if (h_prev.size() != h || c_prev.size() != h) {
        throw ContractError("lstm_step: state size does not match hidden size");
    }

    RealVector pre = matvec_add(p.W, x, p.b);
    const RealVector rec = matvec(p.U, h_prev);
    for (std::size_t k = 0; k < pre.size(); ++k) pre[k] += rec[k];

    out.x = x;
    out.i.resize(h);
    out.f.resize(h);
    out.g.resize(h);
    out.o.resize(h);
    out.c.resize(h);
    out.tanh_c.resize(h);
    out.h.resize(h);
    for (std::size_t j = 0; j < h; ++j) {
        out.i[j] = sigmoid(pre[kGateInput * h + j]);
        out.f[j] = sigmoid(pre[kGateForget * h + j]);
        out.g[j] = std::tanh(pre[kGateCell * h + j]);
        out.o[j] = sigmoid(pre[kGateOutput * h + j]);
        out.c[j] = out.f[j] * c_prev[j] + out.i[j] * out.g[j];
        out.tanh_c[j] = std::tanh(out.c[j]);
        out.h[j] = out.o[j] * out.tanh_c[j];
    }
}

}  // namespace

LstmState lstm_step(const LstmParams& p, const RealVector& x, const LstmState& s) {
    LstmStepCache cache;
    step_core(p, x, s.h, s.c, cache);
    return LstmState{cache.h, cache.c};
}

std::vector<LstmState> LstmForwardCache::states() const {
    std::vector<LstmState> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(LstmState{s.emitted, s.c});
    return out;
}

LstmForwardCache lstm_forward(const LstmParams& p, const std::vector<RealVector>& xs,
                              const DropoutSpec& dropout) {
    if (xs.empty()) throw ContractError("lstm_forward: empty sequence");
    check_dropout(dropout);

    const std::size_t h = p.hidden_size;
    const bool masking = dropout.training && dropout.rate > 0.0;
    const double keep_scale = masking ? 1.0 / (1.0 - dropout.rate) : 1.0;

    LstmForwardCache cache;
    cache.steps.resize(xs.size());
    RealVector h_prev(h, 0.0);
    RealVector c_prev(h, 0.0);
    for (std::size_t t = 0; t < xs.size(); ++t) {
        LstmStepCache& step = cache.steps[t];
        step_core(p, xs[t], h_prev, c_prev, step);
        step.mask.assign(h, 1.0);
        if (masking) {
            for (std::size_t j = 0; j < h; ++j) {
                step.mask[j] = dropout.rng->uniform(0.0, 1.0) < dropout.rate ? 0.0 : keep_scale;
            }
        }
        step.emitted.resize(h);
        for (std::size_t j = 0; j < h; ++j) step.emitted[j] = step.h[j] * step.mask[j];
        h_prev = step.h;  // recurrence carries the unmasked hidden state
        c_prev = step.c;
    }
    return cache;
}

RealVector apply_prediction_head(const LinearHead& head, const RealVector& h) {
    return matvec_add(head.V, h, head.b);
}

RealVector apply_classification_head(const LinearHead& head, const RealVector& h) {
    return softmax(matvec_add(head.V, h, head.b));
}

namespace {

void check_task(const StageParams& p, const std::vector<RealVector>& xs,
                const SequenceTask& task) {
    if (xs.empty()) throw ContractError("bptt: empty sequence");
    if (task.kind == LossKind::Prediction) {
        if (task.target_frames == nullptr || task.target_frames->size() != xs.size()) {
            throw ContractError("bptt: prediction targets misaligned with inputs");
        }
        for (const auto& frame : *task.target_frames) {
            if (frame.size() != p.head.out_size()) {
                throw ContractError("bptt: target frame width differs from head output");
            }
        }
    } else {
        if (task.label >= p.head.out_size()) {
            throw ContractError("bptt: label out of range for classification head");
        }
    }
}

// Shared forward(+optional backward) driver.
double run_sequence(const StageParams& p, const std::vector<RealVector>& xs,
                    const SequenceTask& task, double frame_weight, const DropoutSpec& dropout,
                    ParamGradients* grads) {
    check_task(p, xs, task);
    const LstmForwardCache cache = lstm_forward(p.lstm, xs, dropout);
    const std::size_t T = xs.size();
    const std::size_t h = p.lstm.hidden_size;
    const std::size_t out_dim = p.head.out_size();

    double data_loss = 0.0;
    std::vector<RealVector> dout(grads != nullptr ? T : 0);

    for (std::size_t t = 0; t < T; ++t) {
        const RealVector out = matvec_add(p.head.V, cache.steps[t].emitted, p.head.b);
        if (task.kind == LossKind::Prediction) {
            const RealVector& target = (*task.target_frames)[t];
            data_loss += frame_weight * mse_data_term(target, out);
            if (grads != nullptr) {
                dout[t].resize(out_dim);
                const double scale = frame_weight * 2.0 / static_cast<double>(out_dim);
                for (std::size_t k = 0; k < out_dim; ++k) {
                    dout[t][k] = scale * (out[k] - target[k]);
                }
            }
        } else {
            const RealVector dist = softmax(out);
            data_loss += frame_weight * cross_entropy_at(dist, task.label);
            if (grads != nullptr) {
                dout[t].assign(out_dim, 0.0);
                if (dist[task.label] > kProbClamp) {
                    for (std::size_t k = 0; k < out_dim; ++k) {
                        dout[t][k] = frame_weight * dist[k];
                    }
                    dout[t][task.label] -= frame_weight;
                }
            }
        }
    }
    if (grads == nullptr) return data_loss;

    // Backward through time.
    const RealVector zeros(h, 0.0);
    RealVector dh_next(h, 0.0);
    RealVector dc_next(h, 0.0);
    RealVector da(4 * h, 0.0);
    for (std::size_t ti = T; ti-- > 0;) {
        const LstmStepCache& step = cache.steps[ti];
        const RealVector& h_prev = ti > 0 ? cache.steps[ti - 1].h : zeros;
        const RealVector& c_prev = ti > 0 ? cache.steps[ti - 1].c : zeros;

        // Head.
        for (std::size_t k = 0; k < out_dim; ++k) {
            const double dy = dout[ti][k];
            if (dy == 0.0) continue;
            grads->dHeadB[k] += dy;
            double* vrow = grads->dV.values.data() + k * h;
            const double* hrow = step.emitted.data();
            for (std::size_t j = 0; j < h; ++j) vrow[j] += dy * hrow[j];
        }
        RealVector dh(h, 0.0);
        for (std::size_t k = 0; k < out_dim; ++k) {
            const double dy = dout[ti][k];
            if (dy == 0.0) continue;
            const double* vrow = p.head.V.values.data() + k * h;
            for (std::size_t j = 0; j < h; ++j) dh[j] += vrow[j] * dy;
        }
        // Mask scales the emitted path only; the recurrent path adds directly.
        for (std::size_t j = 0; j < h; ++j) dh[j] = dh[j] * step.mask[j] + dh_next[j];

        for (std::size_t j = 0; j < h; ++j) {
            const double d_o = dh[j] * step.tanh_c[j];
            const double dc = dh[j] * step.o[j] * (1.0 - step.tanh_c[j] * step.tanh_c[j]) +
                              dc_next[j];
            const double d_i = dc * step.g[j];
            const double d_f = dc * c_prev[j];
            const double d_g = dc * step.i[j];
            da[kGateInput * h + j] = d_i * step.i[j] * (1.0 - step.i[j]);
            da[kGateForget * h + j] = d_f * step.f[j] * (1.0 - step.f[j]);
            da[kGateCell * h + j] = d_g * (1.0 - step.g[j] * step.g[j]);
            da[kGateOutput * h + j] = d_o * step.o[j] * (1.0 - step.o[j]);
            dc_next[j] = dc * step.f[j];
        }

        const std::size_t d_in = p.lstm.input_size;
        for (std::size_t r = 0; r < 4 * h; ++r) {
            const double a = da[r];
            if (a == 0.0) continue;
            grads->dB[r] += a;
            double* wrow = grads->dW.values.data() + r * d_in;
            const double* xrow = step.x.data();
            for (std::size_t c = 0; c < d_in; ++c) wrow[c] += a * xrow[c];
            double* urow = grads->dU.values.data() + r * h;
            const double* hrow = h_prev.data();
            for (std::size_t c = 0; c < h; ++c) urow[c] += a * hrow[c];
        }
        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        for (std::size_t r = 0; r < 4 * h; ++r) {
            const double a = da[r];
            if (a == 0.0) continue;
            const double* urow = p.lstm.U.values.data() + r * h;
            for (std::size_t j = 0; j < h; ++j) dh_next[j] += urow[j] * a;
        }
    }
    return data_loss;
}

}  // namespace

double sequence_backward(const StageParams& p, const std::vector<RealVector>& xs,
                         const SequenceTask& task, double frame_weight,
                         const DropoutSpec& dropout, ParamGradients& grads) {
    return run_sequence(p, xs, task, frame_weight, dropout, &grads);
}

double sequence_data_loss(const StageParams& p, const std::vector<RealVector>& xs,
                          const SequenceTask& task, double frame_weight,
                          const DropoutSpec& dropout) {
    return run_sequence(p, xs, task, frame_weight, dropout, nullptr);
}

BpttResult bptt(const StageParams& p, const std::vector<RealVector>& xs, const SequenceTask& task,
                const RegularizationSpec& reg, bool penalize_head, const DropoutSpec& dropout) {
    BpttResult result;
    result.grads = ParamGradients::zeros_like(p);
    const double weight = 1.0 / static_cast<double>(xs.empty() ? 1 : xs.size());
    result.loss.data_term = sequence_backward(p, xs, task, weight, dropout, result.grads);
    result.loss.penalty_term = elastic_net_penalty(p.penalty_views(penalize_head), reg);
    result.loss.total = result.loss.data_term + result.loss.penalty_term;

    const auto params = p.penalty_views(penalize_head);
    auto grad_views = result.grads.tensor_views();
    for (std::size_t i = 0; i < params.size(); ++i) {
        accumulate_penalty_gradient(params[i], grad_views[i], reg);
    }
    return result;
}

}  // namespace terra
