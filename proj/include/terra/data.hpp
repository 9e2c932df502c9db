#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "terra/seqcore.hpp"

namespace terra {

enum class TerrainLabel : int {
    Concrete = 0,
    Grassy = 1,
    Gravel = 2,
    Mulch = 3,
    Dirt = 4,
    Sandy = 5,
};

inline constexpr std::size_t kClassCount = 6;
inline constexpr std::size_t kForceDims = 12;
inline constexpr std::size_t kFrameDim = 22;  // 12 force + 3 accel + 3 gyro + 4 orientation
inline constexpr int kUnlabeled = -1;

const std::array<std::string, kClassCount>& label_names();
const std::string& label_name(int label);
int label_from_name(const std::string& name);  // -1 when unknown

// One walking sequence: T frames of kFrameDim sensor channels. label is a
// TerrainLabel code, or kUnlabeled when the CSV left the column empty.
struct SequenceSample {
    std::string seq_id;
    std::vector<RealVector> frames;
    int label = kUnlabeled;
};

const std::string& csv_header();

// Maps a foreign column name to its canonical one, e.g. {"force_0", "f0"}.
using HeaderMap = std::map<std::string, std::string>;

std::vector<SequenceSample> ingest_csv(std::istream& in, const HeaderMap* header_map = nullptr);
std::vector<SequenceSample> ingest_csv_file(const std::string& path,
                                            const HeaderMap* header_map = nullptr);

void emit_csv(std::ostream& out, const std::vector<SequenceSample>& samples);
void emit_csv_file(const std::string& path, const std::vector<SequenceSample>& samples);

// Per-channel mean and population standard deviation (divisor N). Channels
// with zero variance get stddev 1 so normalization maps them to 0.
struct NormStats {
    RealVector mean;
    RealVector stddev;
};

NormStats compute_norm_stats(const std::vector<SequenceSample>& samples);
NormStats compute_norm_stats(const std::vector<SequenceSample>& samples,
                             std::span<const std::size_t> subset);

RealVector normalize_frame(const RealVector& frame, const NormStats& stats);
void apply_normalization(std::vector<SequenceSample>& samples, const NormStats& stats);

// Index buckets into the source sample vector. The test bucket is resampled
// from the predictor bucket, so those two overlap by design; the other parts
// are pairwise disjoint and together cover every sequence.
struct SplitResult {
    std::vector<std::size_t> predictor;
    std::vector<std::size_t> classifier_train;
    std::vector<std::size_t> classifier_val;
    std::vector<std::size_t> test;
};

SplitResult split_semi_supervised(std::size_t n_sequences, std::uint64_t seed);

std::vector<std::size_t> shuffled_indices(std::size_t n, SeededRng& rng);

std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n_sequences, std::size_t k,
                                                      std::uint64_t seed);

struct SynthSpec {
    std::size_t n_sequences = 300;
    std::size_t t_min = 40;
    std::size_t t_max = 80;
    std::uint64_t seed = 42;
    std::size_t class_count = kClassCount;
    std::size_t dim = kFrameDim;
    double noise_scale = 1.0;

    void validate() const;
};

// Deterministic gait-like oscillations, one parametric model per class:
//   value(t, j) = A_j * (o_c(j) + sin(2*pi*f_c*t + phi_j + psi1)
//                        + a_c * sin(4*pi*f_c*t + 2*phi_j + psi2)) + noise
// with fundamental f_c = 0.04 + 0.03*c, second-harmonic mix a_c = 0.1 + 0.06*c,
// stance offset pattern o_c(j) = 0.5*cos((c + 1)*phi_j), noise sigma_c =
// 0.03 + 0.01*c (times noise_scale), channel amplitude A_j = 1 for force
// channels and 0.6 otherwise, channel phase phi_j = 2*pi*j/dim, and
// per-sequence random phases psi1, psi2. Sequence s gets label s mod
// class_count and draws from its own stream derived from (seed, s), so the
// first n sequences do not depend on n_sequences.
std::vector<SequenceSample> synth_generate(const SynthSpec& spec);

}  // namespace terra
