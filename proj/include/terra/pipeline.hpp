#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "terra/data.hpp"
#include "terra/objective.hpp"
#include "terra/recurrent.hpp"
#include "terra/seqcore.hpp"

namespace terra {

enum class CascadeMode { Predictive, Hidden };

const std::string& cascade_mode_name(CascadeMode mode);
CascadeMode cascade_mode_from_name(const std::string& name);

struct TrainConfig {
    std::size_t epochs = 300;  // upper bound; best-validation weights are kept
    std::size_t batch_size = 512;
    double learning_rate = 0.005;
    double dropout = 0.2;
    std::size_t k = 5;
    std::size_t hidden_size = 200;
    RegularizationSpec reg;
    std::uint64_t seed = 42;
    bool input_relu = true;
    CascadeMode cascade_mode = CascadeMode::Predictive;
    bool paper_literal_split = false;
    bool cascade_train_raw = false;  // stage 2 trains on raw frames instead of predictions
    bool penalize_head = true;       // restrict the penalty to W, U, b when false
    double clip_norm = 0.0;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    bool has_accuracy = false;  // stage-2 records carry accuracies
    double train_acc = 0.0;
    double val_acc = 0.0;
};

using History = std::vector<EpochRecord>;

// The full stacked model. Stage-1 tensors are reachable only through
// stage1_mutable(), which refuses access once the stage is frozen.
class ModelState {
public:
    ModelState(std::size_t input_dim, std::size_t class_count, const TrainConfig& config);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t hidden_size() const { return config_.hidden_size; }
    std::size_t class_count() const { return class_count_; }
    std::size_t stage2_input_dim() const;

    const TrainConfig& config() const { return config_; }
    const NormStats& norm() const { return norm_; }
    void set_norm(NormStats stats);

    const StageParams& stage1() const { return stage1_; }
    StageParams& stage1_mutable();
    const StageParams& stage2() const { return stage2_; }
    StageParams& stage2_mutable() { return stage2_; }

    bool stage1_frozen() const { return stage1_frozen_; }
    bool stage2_trained() const { return stage2_trained_; }
    void freeze_stage1() { stage1_frozen_ = true; }  // idempotent
    void set_stage2_trained(bool trained) { stage2_trained_ = trained; }

private:
    std::size_t input_dim_;
    std::size_t class_count_;
    TrainConfig config_;
    NormStats norm_;
    StageParams stage1_;
    StageParams stage2_;
    bool stage1_frozen_ = false;
    bool stage2_trained_ = false;
};

// Fresh model with seeded weight initialisation and identity normalization.
ModelState init_model(std::size_t input_dim, std::size_t class_count, const TrainConfig& config);

// Next-step predictor training on normalized sequences. Calling it again on a
// model that already holds trained weights resumes from them (optimizer
// moments start fresh). epochs = 0 leaves the model untouched.
History train_stage1(ModelState& model, const std::vector<SequenceSample>& normalized);

// Pooled per-frame prediction error of stage 1 over a normalized dataset,
// dropout off, penalty excluded.
double stage1_data_term(const ModelState& model, const std::vector<SequenceSample>& normalized);

// Stage-2 input sequence for one normalized sequence: next-step predictions
// (length T - 1) in predictive mode, stage-1 hidden states (length T) in
// hidden mode.
std::vector<RealVector> cascade_features(const ModelState& model,
                                         const std::vector<RealVector>& normalized_frames);

struct KfoldStats {
    std::vector<double> fold_accuracies;
    double mean = 0.0;
    double stddev = 0.0;
};

// Classifier training through the frozen cascade. When kfold is non-null and
// config.k >= 2, first trains one throwaway model per fold on the labeled
// training data and records fold validation accuracies; the returned history
// always belongs to the final model trained on all of labeled_train.
History train_stage2(ModelState& model, const std::vector<SequenceSample>& labeled_train,
                     const std::vector<SequenceSample>& labeled_val, KfoldStats* kfold = nullptr);

struct Prediction {
    int label = 0;
    RealVector distribution;
};

// Time-averaged class distribution and its argmax. predict_sequence applies
// the model's stored normalization to raw frames first; predict_normalized
// expects already-normalized frames.
Prediction predict_normalized(const ModelState& model, const std::vector<RealVector>& frames);
Prediction predict_sequence(const ModelState& model, const SequenceSample& raw);

// Per-timestep class distributions for one raw sequence, dropout off.
std::vector<RealVector> step_distributions(const ModelState& model, const SequenceSample& raw);

void save_model(const ModelState& model, const std::string& path);
ModelState load_model(const std::string& path);

struct TrainOutcome {
    ModelState model;
    History stage1_history;
    History stage2_history;
    KfoldStats kfold;
    SplitResult split;
};

// The whole procedure on raw sequences: split, normalize, stage 1, freeze,
// stage 2 (with k-fold when config.k >= 2). By default the held-out test
// sequences are excluded from stage-1 training and from normalization
// fitting; paper_literal_split restores the overlapping protocol and fits
// normalization on the full dataset.
TrainOutcome run_training(const std::vector<SequenceSample>& raw, const TrainConfig& config);

}  // namespace terra
