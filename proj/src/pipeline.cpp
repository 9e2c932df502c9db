#include "terra/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <utility>

#include "terra/errors.hpp"
#include "terra/optim.hpp"

namespace terra {

namespace {

// Sub-stream ids so the independent random consumers never share draw order.
constexpr std::uint64_t kStreamStage1Init = 1;
constexpr std::uint64_t kStreamStage2Init = 2;
constexpr std::uint64_t kStreamStage1Split = 3;
constexpr std::uint64_t kStreamStage1Shuffle = 4;
constexpr std::uint64_t kStreamStage1Dropout = 5;
constexpr std::uint64_t kStreamStage2Shuffle = 6;
constexpr std::uint64_t kStreamStage2Dropout = 7;
constexpr std::uint64_t kStreamKfoldSplit = 8;
constexpr std::uint64_t kStreamKfoldBase = 100;  // two streams per fold

}  // namespace

const std::string& cascade_mode_name(CascadeMode mode) {
    static const std::string predictive = "predictive";
    static const std::string hidden = "hidden";
    return mode == CascadeMode::Predictive ? predictive : hidden;
}

CascadeMode cascade_mode_from_name(const std::string& name) {
    if (name == "predictive") return CascadeMode::Predictive;
    if (name == "hidden") return CascadeMode::Hidden;
    throw ContractError("unknown cascade mode '" + name + "'");
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ContractError("TrainConfig: batch_size must be at least 1");
    if (k < 1) throw ContractError("TrainConfig: k must be at least 1");
    if (hidden_size < 1) throw ContractError("TrainConfig: hidden_size must be at least 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw ContractError("TrainConfig: dropout must lie in [0, 1)");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ContractError("TrainConfig: learning_rate must be positive and finite");
    }
    if (clip_norm < 0.0 || !std::isfinite(clip_norm)) {
        throw ContractError("TrainConfig: clip_norm must be >= 0 and finite");
    }
    reg.validate();
}

namespace {

std::size_t stage2_input_for(const TrainConfig& config, std::size_t input_dim) {
    return config.cascade_mode == CascadeMode::Predictive ? input_dim : config.hidden_size;
}

}  // namespace

ModelState::ModelState(std::size_t input_dim, std::size_t class_count, const TrainConfig& config)
    : input_dim_(input_dim),
      class_count_(class_count),
      config_(config),
      stage1_(config.hidden_size, input_dim, input_dim),
      stage2_(config.hidden_size, stage2_input_for(config, input_dim), class_count) {
    config_.validate();
    if (input_dim_ < 1) throw ContractError("ModelState: input_dim must be at least 1");
    if (class_count_ < 2) throw ContractError("ModelState: class_count must be at least 2");
    norm_.mean.assign(input_dim_, 0.0);
    norm_.stddev.assign(input_dim_, 1.0);
}

std::size_t ModelState::stage2_input_dim() const {
    return stage2_input_for(config_, input_dim_);
}

void ModelState::set_norm(NormStats stats) {
    if (stats.mean.size() != input_dim_ || stats.stddev.size() != input_dim_) {
        throw ContractError("ModelState::set_norm: stats width differs from input_dim");
    }
    for (double s : stats.stddev) {
        if (!(s > 0.0)) throw ContractError("ModelState::set_norm: stddev entries must be > 0");
    }
    norm_ = std::move(stats);
}

StageParams& ModelState::stage1_mutable() {
    if (stage1_frozen_) {
        throw ContractError("stage-1 weights are frozen and can no longer change");
    }
    return stage1_;
}

ModelState init_model(std::size_t input_dim, std::size_t class_count, const TrainConfig& config) {
    ModelState model(input_dim, class_count, config);
    SeededRng rng1(derive_stream(config.seed, kStreamStage1Init));
    model.stage1_mutable().init_weights(rng1);
    SeededRng rng2(derive_stream(config.seed, kStreamStage2Init));
    model.stage2_mutable().init_weights(rng2);
    return model;
}

namespace {

// Inputs X_{1..T-1} (ReLU-transformed when configured) and targets X_{2..T}.
struct PredictorSequence {
    std::vector<RealVector> inputs;
    std::vector<RealVector> targets;
};

PredictorSequence make_predictor_pairs(const SequenceSample& sample, std::size_t input_dim,
                                       bool input_relu) {
    if (sample.frames.size() < 2) {
        throw ContractError("stage 1 needs sequences of at least 2 frames; '" + sample.seq_id +
                            "' has " + std::to_string(sample.frames.size()));
    }
    PredictorSequence p;
    p.inputs.reserve(sample.frames.size() - 1);
    p.targets.reserve(sample.frames.size() - 1);
    for (std::size_t t = 0; t + 1 < sample.frames.size(); ++t) {
        if (sample.frames[t].size() != input_dim) {
            throw ContractError("sequence '" + sample.seq_id + "' has frames of width " +
                                std::to_string(sample.frames[t].size()) + ", model expects " +
                                std::to_string(input_dim));
        }
        p.inputs.push_back(input_relu ? apply_activation(Activation::Relu, sample.frames[t])
                                      : sample.frames[t]);
        p.targets.push_back(sample.frames[t + 1]);
    }
    return p;
}

double pooled_prediction_loss(const StageParams& params,
                              const std::vector<PredictorSequence>& seqs,
                              std::span<const std::size_t> subset) {
    std::size_t n_frames = 0;
    for (std::size_t idx : subset) n_frames += seqs[idx].inputs.size();
    const double weight = 1.0 / static_cast<double>(n_frames);
    const DropoutSpec eval;
    double loss = 0.0;
    for (std::size_t idx : subset) {
        SequenceTask task;
        task.kind = LossKind::Prediction;
        task.target_frames = &seqs[idx].targets;
        loss += sequence_data_loss(params, seqs[idx].inputs, task, weight, eval);
    }
    return loss;
}

void add_penalty_gradients(const StageParams& params, const TrainConfig& cfg,
                           ParamGradients& grads) {
    const auto views = params.penalty_views(cfg.penalize_head);
    auto gviews = grads.tensor_views();
    for (std::size_t i = 0; i < views.size(); ++i) {
        accumulate_penalty_gradient(views[i], gviews[i], cfg.reg);
    }
}

AdamConfig adam_config_for(const TrainConfig& cfg) {
    AdamConfig a;
    a.learning_rate = cfg.learning_rate;
    a.clip_norm = cfg.clip_norm;
    return a;
}

void shuffle_in_place(std::vector<std::size_t>& idx, SeededRng& rng) {
    for (std::size_t i = idx.size(); i-- > 1;) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
        std::swap(idx[i], idx[j]);
    }
}

}  // namespace

History train_stage1(ModelState& model, const std::vector<SequenceSample>& normalized) {
    const TrainConfig& cfg = model.config();
    if (normalized.empty()) throw ContractError("train_stage1: no sequences");
    StageParams& params = model.stage1_mutable();

    std::vector<PredictorSequence> seqs;
    seqs.reserve(normalized.size());
    for (const auto& sample : normalized) {
        seqs.push_back(make_predictor_pairs(sample, model.input_dim(), cfg.input_relu));
    }

    SeededRng split_rng(derive_stream(cfg.seed, kStreamStage1Split));
    std::vector<std::size_t> order = shuffled_indices(seqs.size(), split_rng);
    const std::size_t n_val = seqs.size() / 5;
    std::vector<std::size_t> val_idx;
    std::vector<std::size_t> train_idx;
    if (n_val == 0) {
        val_idx = order;  // too few sequences for a held-out fifth
        train_idx = order;
    } else {
        val_idx.assign(order.begin(), order.begin() + n_val);
        train_idx.assign(order.begin() + n_val, order.end());
    }

    History history;
    if (cfg.epochs == 0) return history;

    AdamState adam = adam_init(std::as_const(params).tensor_views());
    const AdamConfig adam_cfg = adam_config_for(cfg);
    SeededRng shuffle_rng(derive_stream(cfg.seed, kStreamStage1Shuffle));
    SeededRng dropout_rng(derive_stream(cfg.seed, kStreamStage1Dropout));
    ParamGradients grads = ParamGradients::zeros_like(params);

    StageParams best = params;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_in_place(train_idx, shuffle_rng);
        for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, train_idx.size());
            grads.set_zero();
            std::size_t batch_frames = 0;
            for (std::size_t b = start; b < end; ++b) {
                batch_frames += seqs[train_idx[b]].inputs.size();
            }
            const double weight = 1.0 / static_cast<double>(batch_frames);
            for (std::size_t b = start; b < end; ++b) {
                const PredictorSequence& seq = seqs[train_idx[b]];
                SequenceTask task;
                task.kind = LossKind::Prediction;
                task.target_frames = &seq.targets;
                DropoutSpec drop{cfg.dropout, true, &dropout_rng};
                sequence_backward(params, seq.inputs, task, weight, drop, grads);
            }
            add_penalty_gradients(params, cfg, grads);
            adam_step(params.tensor_views(), std::as_const(grads).tensor_views(), adam, adam_cfg);
        }

        const double penalty = elastic_net_penalty(params.penalty_views(cfg.penalize_head),
                                                   cfg.reg);
        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = pooled_prediction_loss(params, seqs, train_idx) + penalty;
        record.val_loss = pooled_prediction_loss(params, seqs, val_idx) + penalty;
        history.push_back(record);
        if (record.val_loss < best_val) {
            best_val = record.val_loss;
            best = params;
        }
    }
    params = best;
    return history;
}

double stage1_data_term(const ModelState& model, const std::vector<SequenceSample>& normalized) {
    if (normalized.empty()) throw ContractError("stage1_data_term: no sequences");
    std::vector<PredictorSequence> seqs;
    seqs.reserve(normalized.size());
    for (const auto& sample : normalized) {
        seqs.push_back(make_predictor_pairs(sample, model.input_dim(), model.config().input_relu));
    }
    std::vector<std::size_t> all(seqs.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return pooled_prediction_loss(model.stage1(), seqs, all);
}

std::vector<RealVector> cascade_features(const ModelState& model,
                                         const std::vector<RealVector>& normalized_frames) {
    const TrainConfig& cfg = model.config();
    for (const auto& frame : normalized_frames) {
        if (frame.size() != model.input_dim()) {
            throw ContractError("cascade_features: frame width " +
                                std::to_string(frame.size()) + ", model expects " +
                                std::to_string(model.input_dim()));
        }
    }
    const DropoutSpec eval;
    std::vector<RealVector> features;
    if (cfg.cascade_mode == CascadeMode::Predictive) {
        if (normalized_frames.size() < 2) {
            throw ContractError("cascade_features: predictive mode needs at least 2 frames");
        }
        std::vector<RealVector> inputs;
        inputs.reserve(normalized_frames.size() - 1);
        for (std::size_t t = 0; t + 1 < normalized_frames.size(); ++t) {
            inputs.push_back(cfg.input_relu
                                 ? apply_activation(Activation::Relu, normalized_frames[t])
                                 : normalized_frames[t]);
        }
        const LstmForwardCache cache = lstm_forward(model.stage1().lstm, inputs, eval);
        features.reserve(cache.steps.size());
        for (const auto& step : cache.steps) {
            features.push_back(apply_prediction_head(model.stage1().head, step.emitted));
        }
    } else {
        if (normalized_frames.empty()) {
            throw ContractError("cascade_features: empty sequence");
        }
        std::vector<RealVector> inputs;
        inputs.reserve(normalized_frames.size());
        for (const auto& frame : normalized_frames) {
            inputs.push_back(cfg.input_relu ? apply_activation(Activation::Relu, frame) : frame);
        }
        const LstmForwardCache cache = lstm_forward(model.stage1().lstm, inputs, eval);
        features.reserve(cache.steps.size());
        for (const auto& step : cache.steps) features.push_back(step.emitted);
    }
    return features;
}

namespace {

std::size_t argmax_first(const RealVector& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

RealVector mean_distribution(const StageParams& params, const std::vector<RealVector>& inputs) {
    const DropoutSpec eval;
    const LstmForwardCache cache = lstm_forward(params.lstm, inputs, eval);
    RealVector mean(params.head.out_size(), 0.0);
    for (const auto& step : cache.steps) {
        const RealVector dist = apply_classification_head(params.head, step.emitted);
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += dist[k];
    }
    for (double& v : mean) v /= static_cast<double>(cache.steps.size());
    return mean;
}

double classifier_loss(const StageParams& params,
                       const std::vector<std::vector<RealVector>>& inputs,
                       const std::vector<int>& labels, std::span<const std::size_t> idx,
                       const TrainConfig& cfg) {
    const DropoutSpec eval;
    double loss = 0.0;
    for (std::size_t i : idx) {
        SequenceTask task;
        task.kind = LossKind::Classification;
        task.label = static_cast<std::size_t>(labels[i]);
        const double weight =
            1.0 / (static_cast<double>(idx.size()) * static_cast<double>(inputs[i].size()));
        loss += sequence_data_loss(params, inputs[i], task, weight, eval);
    }
    return loss + elastic_net_penalty(params.penalty_views(cfg.penalize_head), cfg.reg);
}

double classifier_accuracy(const StageParams& params,
                           const std::vector<std::vector<RealVector>>& inputs,
                           const std::vector<int>& labels, std::span<const std::size_t> idx) {
    std::size_t hits = 0;
    for (std::size_t i : idx) {
        const RealVector mean = mean_distribution(params, inputs[i]);
        if (argmax_first(mean) == static_cast<std::size_t>(labels[i])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(idx.size());
}

// Adam training of one classifier over precomputed stage-2 input sequences.
// train_inputs feed the gradients, eval_inputs feed metrics and checkpoint
// selection (they differ only in raw-cascade training mode).
History fit_classifier(StageParams& params, const std::vector<std::vector<RealVector>>& train_inputs,
                       const std::vector<std::vector<RealVector>>& eval_inputs,
                       const std::vector<int>& labels, std::span<const std::size_t> train_idx,
                       const std::vector<std::vector<RealVector>>& val_inputs,
                       const std::vector<int>& val_labels, std::span<const std::size_t> val_idx,
                       const TrainConfig& cfg, std::uint64_t shuffle_stream,
                       std::uint64_t dropout_stream, double* final_val_accuracy) {
    History history;
    StageParams best = params;
    double best_val = std::numeric_limits<double>::infinity();

    if (cfg.epochs > 0) {
        AdamState adam = adam_init(std::as_const(params).tensor_views());
        const AdamConfig adam_cfg = adam_config_for(cfg);
        SeededRng shuffle_rng(derive_stream(cfg.seed, shuffle_stream));
        SeededRng dropout_rng(derive_stream(cfg.seed, dropout_stream));
        ParamGradients grads = ParamGradients::zeros_like(params);
        std::vector<std::size_t> epoch_order(train_idx.begin(), train_idx.end());

        for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
            shuffle_in_place(epoch_order, shuffle_rng);
            for (std::size_t start = 0; start < epoch_order.size(); start += cfg.batch_size) {
                const std::size_t end = std::min(start + cfg.batch_size, epoch_order.size());
                grads.set_zero();
                const double batch = static_cast<double>(end - start);
                for (std::size_t b = start; b < end; ++b) {
                    const std::size_t i = epoch_order[b];
                    SequenceTask task;
                    task.kind = LossKind::Classification;
                    task.label = static_cast<std::size_t>(labels[i]);
                    const double weight =
                        1.0 / (batch * static_cast<double>(train_inputs[i].size()));
                    DropoutSpec drop{cfg.dropout, true, &dropout_rng};
                    sequence_backward(params, train_inputs[i], task, weight, drop, grads);
                }
                add_penalty_gradients(params, cfg, grads);
                adam_step(params.tensor_views(), std::as_const(grads).tensor_views(), adam,
                          adam_cfg);
            }

            EpochRecord record;
            record.epoch = epoch;
            record.has_accuracy = true;
            record.train_loss = classifier_loss(params, eval_inputs, labels, train_idx, cfg);
            record.val_loss = classifier_loss(params, val_inputs, val_labels, val_idx, cfg);
            record.train_acc = classifier_accuracy(params, eval_inputs, labels, train_idx);
            record.val_acc = classifier_accuracy(params, val_inputs, val_labels, val_idx);
            history.push_back(record);
            if (record.val_loss < best_val) {
                best_val = record.val_loss;
                best = params;
            }
        }
        params = best;
    }
    if (final_val_accuracy != nullptr) {
        *final_val_accuracy = classifier_accuracy(params, val_inputs, val_labels, val_idx);
    }
    return history;
}

}  // namespace

History train_stage2(ModelState& model, const std::vector<SequenceSample>& labeled_train,
                     const std::vector<SequenceSample>& labeled_val, KfoldStats* kfold) {
    const TrainConfig& cfg = model.config();
    if (!model.stage1_frozen()) {
        throw ContractError("train_stage2: stage 1 must be frozen first");
    }
    if (labeled_train.empty() || labeled_val.empty()) {
        throw ContractError("train_stage2: labeled train and validation sets must be non-empty");
    }
    const auto check_label = [&](const SequenceSample& s) {
        if (s.label == kUnlabeled) {
            throw ContractError("train_stage2: sequence '" + s.seq_id + "' is unlabeled");
        }
        if (s.label < 0 || static_cast<std::size_t>(s.label) >= model.class_count()) {
            throw ContractError("train_stage2: sequence '" + s.seq_id + "' has label " +
                                std::to_string(s.label) + " outside the " +
                                std::to_string(model.class_count()) + "-class model");
        }
    };
    for (const auto& s : labeled_train) check_label(s);
    for (const auto& s : labeled_val) check_label(s);

    const bool raw_cascade =
        cfg.cascade_mode == CascadeMode::Predictive && cfg.cascade_train_raw;
    std::vector<std::vector<RealVector>> train_eval_inputs;
    std::vector<std::vector<RealVector>> train_inputs;
    std::vector<int> train_labels;
    train_eval_inputs.reserve(labeled_train.size());
    train_inputs.reserve(labeled_train.size());
    for (const auto& s : labeled_train) {
        train_eval_inputs.push_back(cascade_features(model, s.frames));
        train_inputs.push_back(raw_cascade ? s.frames : train_eval_inputs.back());
        train_labels.push_back(s.label);
    }
    std::vector<std::vector<RealVector>> val_inputs;
    std::vector<int> val_labels;
    val_inputs.reserve(labeled_val.size());
    for (const auto& s : labeled_val) {
        val_inputs.push_back(cascade_features(model, s.frames));
        val_labels.push_back(s.label);
    }

    if (kfold != nullptr && cfg.k >= 2 && labeled_train.size() >= cfg.k) {
        const auto folds = kfold_partition(labeled_train.size(), cfg.k,
                                           derive_stream(cfg.seed, kStreamKfoldSplit));
        for (std::size_t f = 0; f < folds.size(); ++f) {
            std::vector<std::size_t> fold_train;
            for (std::size_t g = 0; g < folds.size(); ++g) {
                if (g == f) continue;
                fold_train.insert(fold_train.end(), folds[g].begin(), folds[g].end());
            }
            StageParams fold_params = model.stage2();
            double fold_acc = 0.0;
            fit_classifier(fold_params, train_inputs, train_eval_inputs, train_labels, fold_train,
                           train_eval_inputs, train_labels, folds[f], cfg,
                           kStreamKfoldBase + 2 * f, kStreamKfoldBase + 2 * f + 1, &fold_acc);
            kfold->fold_accuracies.push_back(fold_acc);
        }
        double sum = 0.0;
        for (double a : kfold->fold_accuracies) sum += a;
        kfold->mean = sum / static_cast<double>(kfold->fold_accuracies.size());
        double sq = 0.0;
        for (double a : kfold->fold_accuracies) sq += (a - kfold->mean) * (a - kfold->mean);
        kfold->stddev = std::sqrt(sq / static_cast<double>(kfold->fold_accuracies.size()));
    }

    std::vector<std::size_t> all_train(labeled_train.size());
    for (std::size_t i = 0; i < all_train.size(); ++i) all_train[i] = i;
    std::vector<std::size_t> all_val(labeled_val.size());
    for (std::size_t i = 0; i < all_val.size(); ++i) all_val[i] = i;

    History history =
        fit_classifier(model.stage2_mutable(), train_inputs, train_eval_inputs, train_labels,
                       all_train, val_inputs, val_labels, all_val, cfg, kStreamStage2Shuffle,
                       kStreamStage2Dropout, nullptr);
    model.set_stage2_trained(true);
    return history;
}

Prediction predict_normalized(const ModelState& model, const std::vector<RealVector>& frames) {
    if (!model.stage2_trained()) {
        throw ContractError("predict: the model's classifier has not been trained");
    }
    const std::vector<RealVector> features = cascade_features(model, frames);
    Prediction p;
    p.distribution = mean_distribution(model.stage2(), features);
    p.label = static_cast<int>(argmax_first(p.distribution));
    return p;
}

namespace {

std::vector<RealVector> normalize_for_model(const ModelState& model,
                                            const std::vector<RealVector>& frames) {
    std::vector<RealVector> normalized;
    normalized.reserve(frames.size());
    for (const auto& frame : frames) {
        if (frame.size() != model.input_dim()) {
            throw ContractError("predict: data frames have width " +
                                std::to_string(frame.size()) + ", model expects " +
                                std::to_string(model.input_dim()));
        }
        normalized.push_back(normalize_frame(frame, model.norm()));
    }
    return normalized;
}

}  // namespace

Prediction predict_sequence(const ModelState& model, const SequenceSample& raw) {
    return predict_normalized(model, normalize_for_model(model, raw.frames));
}

std::vector<RealVector> step_distributions(const ModelState& model, const SequenceSample& raw) {
    if (!model.stage2_trained()) {
        throw ContractError("predict: the model's classifier has not been trained");
    }
    const std::vector<RealVector> features =
        cascade_features(model, normalize_for_model(model, raw.frames));
    const DropoutSpec eval;
    const LstmForwardCache cache = lstm_forward(model.stage2().lstm, features, eval);
    std::vector<RealVector> dists;
    dists.reserve(cache.steps.size());
    for (const auto& step : cache.steps) {
        dists.push_back(apply_classification_head(model.stage2().head, step.emitted));
    }
    return dists;
}

namespace {

constexpr const char* kModelMagic = "terra-model";
constexpr int kFormatVersion = 1;

const std::array<const char*, 10> kTensorNames = {
    "stage1.W", "stage1.U", "stage1.b", "stage1.head_V", "stage1.head_b",
    "stage2.W", "stage2.U", "stage2.b", "stage2.head_V", "stage2.head_b",
};

void write_values(std::ostream& out, const char* name, std::span<const double> values) {
    out << name << ' ' << values.size();
    for (double v : values) out << ' ' << format_real(v);
    out << '\n';
}

class TokenReader {
public:
    explicit TokenReader(std::istream& in) : in_(in) {}

    std::string next(const char* what) {
        std::string token;
        if (!(in_ >> token)) {
            throw DataError("model file truncated while reading " + std::string(what));
        }
        return token;
    }

    void expect(const char* literal) {
        const std::string token = next(literal);
        if (token != literal) {
            throw DataError("model file: expected '" + std::string(literal) + "', found '" +
                            token + "'");
        }
    }

    double real(const char* what) {
        const std::string token = next(what);
        double v = 0.0;
        if (!try_parse_real(token, v)) {
            throw DataError("model file: bad number '" + token + "' for " + what);
        }
        return v;
    }

    std::uint64_t count(const char* what) {
        const std::string token = next(what);
        const char* begin = token.c_str();
        char* end = nullptr;
        errno = 0;
        const unsigned long long v = std::strtoull(begin, &end, 10);
        if (token.empty() || end != begin + token.size() || errno == ERANGE ||
            token.front() == '-') {
            throw DataError("model file: bad count '" + token + "' for " + what);
        }
        return v;
    }

    bool flag(const char* what) {
        const std::uint64_t v = count(what);
        if (v > 1) throw DataError("model file: flag " + std::string(what) + " must be 0 or 1");
        return v == 1;
    }

    bool at_end() {
        std::string token;
        return !(in_ >> token);
    }

private:
    std::istream& in_;
};

void read_values(TokenReader& reader, const char* name, std::span<double> out) {
    reader.expect(name);
    const std::uint64_t n = reader.count(name);
    if (n != out.size()) {
        throw DataError("model file: " + std::string(name) + " holds " + std::to_string(n) +
                        " values, expected " + std::to_string(out.size()));
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = reader.real(name);
}

}  // namespace

void save_model(const ModelState& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    const TrainConfig& cfg = model.config();

    out << kModelMagic << '\n';
    out << "format_version " << kFormatVersion << '\n';
    out << "gate_order " << kGateOrderTag << '\n';
    out << "input_dim " << model.input_dim() << '\n';
    out << "class_count " << model.class_count() << '\n';
    out << "stage1_frozen " << (model.stage1_frozen() ? 1 : 0) << '\n';
    out << "stage2_trained " << (model.stage2_trained() ? 1 : 0) << '\n';
    out << "config epochs " << cfg.epochs << '\n';
    out << "config batch_size " << cfg.batch_size << '\n';
    out << "config learning_rate " << format_real(cfg.learning_rate) << '\n';
    out << "config dropout " << format_real(cfg.dropout) << '\n';
    out << "config k " << cfg.k << '\n';
    out << "config hidden_size " << cfg.hidden_size << '\n';
    out << "config lambda " << format_real(cfg.reg.lambda) << '\n';
    out << "config gamma " << format_real(cfg.reg.gamma) << '\n';
    out << "config seed " << cfg.seed << '\n';
    out << "config input_relu " << (cfg.input_relu ? 1 : 0) << '\n';
    out << "config cascade_mode " << cascade_mode_name(cfg.cascade_mode) << '\n';
    out << "config paper_literal_split " << (cfg.paper_literal_split ? 1 : 0) << '\n';
    out << "config cascade_train_raw " << (cfg.cascade_train_raw ? 1 : 0) << '\n';
    out << "config penalize_head " << (cfg.penalize_head ? 1 : 0) << '\n';
    out << "config clip_norm " << format_real(cfg.clip_norm) << '\n';
    write_values(out, "norm_mean", std::span<const double>(model.norm().mean));
    write_values(out, "norm_std", std::span<const double>(model.norm().stddev));

    const auto s1 = model.stage1().tensor_views();
    const auto s2 = model.stage2().tensor_views();
    for (std::size_t i = 0; i < s1.size(); ++i) {
        out << "tensor ";
        write_values(out, kTensorNames[i], s1[i]);
    }
    for (std::size_t i = 0; i < s2.size(); ++i) {
        out << "tensor ";
        write_values(out, kTensorNames[5 + i], s2[i]);
    }
    out << "end\n";
    if (!out) throw IoError("write to '" + path + "' failed");
}

ModelState load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    TokenReader reader(in);

    reader.expect(kModelMagic);
    reader.expect("format_version");
    const std::uint64_t version = reader.count("format_version");
    if (version != static_cast<std::uint64_t>(kFormatVersion)) {
        throw DataError("unsupported model format_version " + std::to_string(version) +
                        "; this build reads version " + std::to_string(kFormatVersion));
    }
    reader.expect("gate_order");
    const std::string gate_order = reader.next("gate_order");
    if (gate_order != kGateOrderTag) {
        throw DataError("model file uses gate order '" + gate_order + "', this build uses '" +
                        kGateOrderTag + "'");
    }
    reader.expect("input_dim");
    const std::size_t input_dim = reader.count("input_dim");
    reader.expect("class_count");
    const std::size_t class_count = reader.count("class_count");
    reader.expect("stage1_frozen");
    const bool frozen = reader.flag("stage1_frozen");
    reader.expect("stage2_trained");
    const bool trained = reader.flag("stage2_trained");

    TrainConfig cfg;
    reader.expect("config");
    reader.expect("epochs");
    cfg.epochs = reader.count("epochs");
    reader.expect("config");
    reader.expect("batch_size");
    cfg.batch_size = reader.count("batch_size");
    reader.expect("config");
    reader.expect("learning_rate");
    cfg.learning_rate = reader.real("learning_rate");
    reader.expect("config");
    reader.expect("dropout");
    cfg.dropout = reader.real("dropout");
    reader.expect("config");
    reader.expect("k");
    cfg.k = reader.count("k");
    reader.expect("config");
    reader.expect("hidden_size");
    cfg.hidden_size = reader.count("hidden_size");
    reader.expect("config");
    reader.expect("lambda");
    cfg.reg.lambda = reader.real("lambda");
    reader.expect("config");
    reader.expect("gamma");
    cfg.reg.gamma = reader.real("gamma");
    reader.expect("config");
    reader.expect("seed");
    cfg.seed = reader.count("seed");
    reader.expect("config");
    reader.expect("input_relu");
    cfg.input_relu = reader.flag("input_relu");
    reader.expect("config");
    reader.expect("cascade_mode");
    cfg.cascade_mode = cascade_mode_from_name(reader.next("cascade_mode"));
    reader.expect("config");
    reader.expect("paper_literal_split");
    cfg.paper_literal_split = reader.flag("paper_literal_split");
    reader.expect("config");
    reader.expect("cascade_train_raw");
    cfg.cascade_train_raw = reader.flag("cascade_train_raw");
    reader.expect("config");
    reader.expect("penalize_head");
    cfg.penalize_head = reader.flag("penalize_head");
    reader.expect("config");
    reader.expect("clip_norm");
    cfg.clip_norm = reader.real("clip_norm");

    ModelState model(input_dim, class_count, cfg);

    NormStats norm;
    norm.mean.resize(input_dim);
    norm.stddev.resize(input_dim);
    read_values(reader, "norm_mean", std::span<double>(norm.mean));
    read_values(reader, "norm_std", std::span<double>(norm.stddev));
    model.set_norm(std::move(norm));

    auto s1 = model.stage1_mutable().tensor_views();
    for (std::size_t i = 0; i < s1.size(); ++i) {
        reader.expect("tensor");
        read_values(reader, kTensorNames[i], s1[i]);
    }
    auto s2 = model.stage2_mutable().tensor_views();
    for (std::size_t i = 0; i < s2.size(); ++i) {
        reader.expect("tensor");
        read_values(reader, kTensorNames[5 + i], s2[i]);
    }
    reader.expect("end");
    if (!reader.at_end()) throw DataError("model file: unexpected content after 'end'");

    if (frozen) model.freeze_stage1();
    model.set_stage2_trained(trained);
    return model;
}

namespace {

std::vector<SequenceSample> collect(const std::vector<SequenceSample>& samples,
                                    std::span<const std::size_t> idx) {
    std::vector<SequenceSample> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(samples[i]);
    return out;
}

}  // namespace

TrainOutcome run_training(const std::vector<SequenceSample>& raw, const TrainConfig& config) {
    config.validate();
    if (raw.empty()) throw ContractError("run_training: no sequences");
    const std::size_t dim = raw.front().frames.empty() ? 0 : raw.front().frames.front().size();

    SplitResult split = split_semi_supervised(raw.size(), config.seed);

    for (const auto& bucket : {&split.classifier_train, &split.classifier_val}) {
        for (std::size_t i : *bucket) {
            if (raw[i].label == kUnlabeled) {
                throw DataError("sequence '" + raw[i].seq_id +
                                "' landed in the labeled split but carries no label");
            }
            if (raw[i].label < 0 || static_cast<std::size_t>(raw[i].label) >= kClassCount) {
                throw DataError("sequence '" + raw[i].seq_id + "' has out-of-range label " +
                                std::to_string(raw[i].label));
            }
        }
    }

    std::vector<std::size_t> predictor_pool = split.predictor;
    if (!config.paper_literal_split) {
        std::vector<std::size_t> test_sorted = split.test;
        std::sort(test_sorted.begin(), test_sorted.end());
        std::erase_if(predictor_pool, [&](std::size_t i) {
            return std::binary_search(test_sorted.begin(), test_sorted.end(), i);
        });
    }

    const NormStats norm = config.paper_literal_split
                               ? compute_norm_stats(raw)
                               : compute_norm_stats(raw, predictor_pool);
    std::vector<SequenceSample> normalized = raw;
    apply_normalization(normalized, norm);

    ModelState model = init_model(dim, kClassCount, config);
    model.set_norm(norm);

    History stage1_history = train_stage1(model, collect(normalized, predictor_pool));
    model.freeze_stage1();

    KfoldStats kfold;
    History stage2_history =
        train_stage2(model, collect(normalized, split.classifier_train),
                     collect(normalized, split.classifier_val), &kfold);

    return TrainOutcome{std::move(model), std::move(stage1_history), std::move(stage2_history),
                        std::move(kfold), std::move(split)};
}

}  // namespace terra
