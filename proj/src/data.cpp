#include "terra/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "terra/errors.hpp"

namespace terra {

const std::array<std::string, kClassCount>& label_names() {
    static const std::array<std::string, kClassCount> names = {"concrete", "grassy", "gravel",
                                                               "mulch",    "dirt",   "sandy"};
    return names;
}

const std::string& label_name(int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= kClassCount) {
        throw ContractError("label_name: code " + std::to_string(label) + " out of range");
    }
    return label_names()[static_cast<std::size_t>(label)];
}

int label_from_name(const std::string& name) {
    const auto& names = label_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    return -1;
}

const std::string& csv_header() {
    static const std::string header = [] {
        std::string h = "seq_id,t";
        for (std::size_t j = 0; j < kForceDims; ++j) h += ",f" + std::to_string(j);
        h += ",ax,ay,az,gx,gy,gz,qw,qx,qy,qz,label";
        return h;
    }();
    return header;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
    throw DataError("line " + std::to_string(line_no) + ": " + what);
}

bool parse_time_index(const std::string& token, long long& out) {
    if (token.empty()) return false;
    const char* begin = token.c_str();
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(begin, &end, 10);
    if (end != begin + token.size() || errno == ERANGE || v < 0) return false;
    out = v;
    return true;
}

// Positions of each canonical column inside the file's header row.
struct ColumnLayout {
    std::size_t n_file_columns = 0;
    std::size_t seq_id = 0;
    std::size_t t = 0;
    std::size_t label = 0;
    std::vector<std::size_t> frame;  // kFrameDim entries, canonical order
};

ColumnLayout resolve_header(const std::string& header_line, const HeaderMap* header_map) {
    const std::vector<std::string> canonical = split_fields(csv_header());
    std::vector<std::string> file_columns = split_fields(header_line);
    if (header_map != nullptr) {
        for (auto& name : file_columns) {
            const auto it = header_map->find(name);
            if (it != header_map->end()) name = it->second;
        }
    }

    ColumnLayout layout;
    layout.n_file_columns = file_columns.size();
    layout.frame.resize(kFrameDim);
    for (std::size_t c = 0; c < canonical.size(); ++c) {
        std::size_t pos = file_columns.size();
        for (std::size_t k = 0; k < file_columns.size(); ++k) {
            if (file_columns[k] != canonical[c]) continue;
            if (pos != file_columns.size()) {
                parse_fail(1, "duplicate column '" + canonical[c] + "' in header");
            }
            pos = k;
        }
        if (pos == file_columns.size()) {
            parse_fail(1, "header is missing column '" + canonical[c] + "'");
        }
        if (canonical[c] == "seq_id") {
            layout.seq_id = pos;
        } else if (canonical[c] == "t") {
            layout.t = pos;
        } else if (canonical[c] == "label") {
            layout.label = pos;
        } else {
            layout.frame[c - 2] = pos;  // canonical order: seq_id, t, 22 channels, label
        }
    }
    return layout;
}

}  // namespace

std::vector<SequenceSample> ingest_csv(std::istream& in, const HeaderMap* header_map) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("line 1: empty input, expected a header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const ColumnLayout layout = resolve_header(line, header_map);

    std::vector<SequenceSample> samples;
    std::vector<std::string> seen_ids;
    long long prev_t = -1;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        const std::vector<std::string> fields = split_fields(line);
        if (fields.size() != layout.n_file_columns) {
            parse_fail(line_no, "expected " + std::to_string(layout.n_file_columns) +
                                    " fields, found " + std::to_string(fields.size()));
        }

        const std::string& id = fields[layout.seq_id];
        if (id.empty()) parse_fail(line_no, "empty seq_id");

        long long t = 0;
        if (!parse_time_index(fields[layout.t], t)) {
            parse_fail(line_no, "time index '" + fields[layout.t] +
                                    "' is not a non-negative integer");
        }

        int label = kUnlabeled;
        const std::string& label_field = fields[layout.label];
        if (!label_field.empty()) {
            label = label_from_name(label_field);
            if (label < 0) parse_fail(line_no, "unknown label '" + label_field + "'");
        }

        RealVector frame(kFrameDim);
        for (std::size_t j = 0; j < kFrameDim; ++j) {
            const std::string& token = fields[layout.frame[j]];
            double v = 0.0;
            if (!try_parse_real(token, v)) {
                parse_fail(line_no, "cannot parse value '" + token + "'");
            }
            if (!std::isfinite(v)) parse_fail(line_no, "non-finite value '" + token + "'");
            frame[j] = v;
        }

        if (samples.empty() || samples.back().seq_id != id) {
            if (std::find(seen_ids.begin(), seen_ids.end(), id) != seen_ids.end()) {
                parse_fail(line_no, "seq_id '" + id + "' reappears; sequence rows must be "
                                    "contiguous");
            }
            if (!samples.empty() && samples.back().frames.size() < 2) {
                parse_fail(line_no, "sequence '" + samples.back().seq_id +
                                        "' has fewer than 2 frames");
            }
            seen_ids.push_back(id);
            samples.push_back(SequenceSample{id, {}, label});
            prev_t = -1;
        } else if (samples.back().label != label) {
            parse_fail(line_no, "label changes within sequence '" + id + "'");
        }
        if (t <= prev_t) {
            parse_fail(line_no, "time index " + std::to_string(t) +
                                    " does not increase within sequence '" + id + "'");
        }
        prev_t = t;
        samples.back().frames.push_back(std::move(frame));
    }
    if (samples.empty()) throw DataError("input contains no data rows");
    if (samples.back().frames.size() < 2) {
        throw DataError("sequence '" + samples.back().seq_id + "' has fewer than 2 frames");
    }
    return samples;
}

std::vector<SequenceSample> ingest_csv_file(const std::string& path, const HeaderMap* header_map) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return ingest_csv(in, header_map);
}

void emit_csv(std::ostream& out, const std::vector<SequenceSample>& samples) {
    out << csv_header() << '\n';
    for (const auto& sample : samples) {
        for (std::size_t t = 0; t < sample.frames.size(); ++t) {
            const RealVector& frame = sample.frames[t];
            if (frame.size() != kFrameDim) {
                throw ContractError("emit_csv: frame width " + std::to_string(frame.size()) +
                                    " differs from " + std::to_string(kFrameDim));
            }
            out << sample.seq_id << ',' << t;
            for (double v : frame) out << ',' << format_real(v);
            out << ',';
            if (sample.label != kUnlabeled) out << label_name(sample.label);
            out << '\n';
        }
    }
}

void emit_csv_file(const std::string& path, const std::vector<SequenceSample>& samples) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    emit_csv(out, samples);
    if (!out) throw IoError("write to '" + path + "' failed");
}

NormStats compute_norm_stats(const std::vector<SequenceSample>& samples) {
    std::vector<std::size_t> all(samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return compute_norm_stats(samples, all);
}

NormStats compute_norm_stats(const std::vector<SequenceSample>& samples,
                             std::span<const std::size_t> subset) {
    std::size_t n_frames = 0;
    std::size_t dim = 0;
    for (std::size_t idx : subset) {
        if (idx >= samples.size()) throw ContractError("compute_norm_stats: index out of range");
        const auto& frames = samples[idx].frames;
        if (dim == 0 && !frames.empty()) dim = frames.front().size();
        for (const auto& frame : frames) {
            if (frame.size() != dim) {
                throw ContractError("compute_norm_stats: inconsistent frame widths");
            }
        }
        n_frames += frames.size();
    }
    if (n_frames == 0) throw ContractError("compute_norm_stats: no frames to fit on");

    NormStats stats;
    stats.mean.assign(dim, 0.0);
    stats.stddev.assign(dim, 0.0);
    for (std::size_t idx : subset) {
        for (const auto& frame : samples[idx].frames) {
            for (std::size_t j = 0; j < dim; ++j) stats.mean[j] += frame[j];
        }
    }
    for (std::size_t j = 0; j < dim; ++j) stats.mean[j] /= static_cast<double>(n_frames);
    for (std::size_t idx : subset) {
        for (const auto& frame : samples[idx].frames) {
            for (std::size_t j = 0; j < dim; ++j) {
                const double d = frame[j] - stats.mean[j];
                stats.stddev[j] += d * d;
            }
        }
    }
    for (std::size_t j = 0; j < dim; ++j) {
        const double var = stats.stddev[j] / static_cast<double>(n_frames);
        stats.stddev[j] = var == 0.0 ? 1.0 : std::sqrt(var);
    }
    return stats;
}

RealVector normalize_frame(const RealVector& frame, const NormStats& stats) {
    if (frame.size() != stats.mean.size()) {
        throw ContractError("normalize_frame: frame width differs from stats");
    }
    RealVector out(frame.size());
    for (std::size_t j = 0; j < frame.size(); ++j) {
        out[j] = (frame[j] - stats.mean[j]) / stats.stddev[j];
    }
    return out;
}

void apply_normalization(std::vector<SequenceSample>& samples, const NormStats& stats) {
    for (auto& sample : samples) {
        for (auto& frame : sample.frames) frame = normalize_frame(frame, stats);
    }
}

std::vector<std::size_t> shuffled_indices(std::size_t n, SeededRng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i-- > 1;) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
        std::swap(idx[i], idx[j]);
    }
    return idx;
}

SplitResult split_semi_supervised(std::size_t n_sequences, std::uint64_t seed) {
    if (n_sequences < 20) {
        throw ContractError("split_semi_supervised: need at least 20 sequences, got " +
                            std::to_string(n_sequences));
    }
    SeededRng rng(derive_stream(seed, 0xA11CE));
    const std::vector<std::size_t> order = shuffled_indices(n_sequences, rng);

    const std::size_t n_part = n_sequences / 20;  // floor(5%)
    SplitResult split;
    split.classifier_train.assign(order.begin(), order.begin() + n_part);
    split.classifier_val.assign(order.begin() + n_part, order.begin() + 2 * n_part);
    split.predictor.assign(order.begin() + 2 * n_part, order.end());

    const std::size_t n_test = n_sequences / 10;  // floor(10%)
    std::vector<std::size_t> pool = split.predictor;
    for (std::size_t i = pool.size(); i-- > 1;) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
        std::swap(pool[i], pool[j]);
    }
    split.test.assign(pool.begin(), pool.begin() + n_test);
    return split;
}

std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n_sequences, std::size_t k,
                                                      std::uint64_t seed) {
    if (k < 2) throw ContractError("kfold_partition: k must be at least 2");
    if (n_sequences < k) {
        throw ContractError("kfold_partition: need at least k sequences, got " +
                            std::to_string(n_sequences));
    }
    SeededRng rng(derive_stream(seed, 0xF01D));
    const std::vector<std::size_t> order = shuffled_indices(n_sequences, rng);
    std::vector<std::vector<std::size_t>> folds(k);
    for (std::size_t i = 0; i < order.size(); ++i) folds[i % k].push_back(order[i]);
    return folds;
}

void SynthSpec::validate() const {
    if (class_count < 2 || class_count > kClassCount) {
        throw ContractError("SynthSpec: class_count must lie in [2, " +
                            std::to_string(kClassCount) + "]");
    }
    if (n_sequences < class_count) {
        throw ContractError("SynthSpec: need at least one sequence per class");
    }
    if (t_min < 2 || t_min > t_max) {
        throw ContractError("SynthSpec: require 2 <= t_min <= t_max");
    }
    if (dim == 0) throw ContractError("SynthSpec: dim must be positive");
    if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
        throw ContractError("SynthSpec: noise_scale must be >= 0 and finite");
    }
}

std::vector<SequenceSample> synth_generate(const SynthSpec& spec) {
    spec.validate();
    const double two_pi = 2.0 * std::numbers::pi;

    std::vector<SequenceSample> samples;
    samples.reserve(spec.n_sequences);
    for (std::size_t s = 0; s < spec.n_sequences; ++s) {
        const std::size_t c = s % spec.class_count;
        const double f = 0.04 + 0.03 * static_cast<double>(c);
        const double harmonic = 0.1 + 0.06 * static_cast<double>(c);
        const double sigma = (0.03 + 0.01 * static_cast<double>(c)) * spec.noise_scale;

        SeededRng rng(derive_stream(spec.seed, s));
        const std::size_t span = spec.t_max - spec.t_min + 1;
        const std::size_t T = spec.t_min + static_cast<std::size_t>(rng.next_u64() % span);
        const double psi1 = rng.uniform(0.0, two_pi);
        const double psi2 = rng.uniform(0.0, two_pi);

        SequenceSample sample;
        sample.seq_id = std::to_string(s);
        sample.label = static_cast<int>(c);
        sample.frames.resize(T, RealVector(spec.dim));
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t j = 0; j < spec.dim; ++j) {
                const double amp = j < kForceDims ? 1.0 : 0.6;
                const double phi = two_pi * static_cast<double>(j) / static_cast<double>(spec.dim);
                const double offset = 0.5 * std::cos(static_cast<double>(c + 1) * phi);
                const double base = std::sin(two_pi * f * static_cast<double>(t) + phi + psi1) +
                                    harmonic * std::sin(2.0 * two_pi * f * static_cast<double>(t) +
                                                        2.0 * phi + psi2);
                sample.frames[t][j] = amp * (offset + base) + rng.gaussian(0.0, sigma);
            }
        }
        samples.push_back(std::move(sample));
    }
    return samples;
}

}  // namespace terra
