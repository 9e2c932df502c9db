#include "terra/seqcore.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <string>

#include "terra/errors.hpp"

namespace terra {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double relu(double x) { return x > 0.0 ? x : 0.0; }

RealVector matvec(const RealMatrix& m, const RealVector& v) {
    if (m.cols != v.size()) {
        throw ContractError("matvec: matrix has " + std::to_string(m.cols) +
                            " columns but vector has " + std::to_string(v.size()) + " entries");
    }
    RealVector out(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        double acc = 0.0;
        const double* row = m.values.data() + r * m.cols;
        for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * v[c];
        out[r] = acc;
    }
    return out;
}

RealVector matvec_add(const RealMatrix& m, const RealVector& v, const RealVector& b) {
    if (m.rows != b.size()) {
        throw ContractError("matvec_add: matrix has " + std::to_string(m.rows) +
                            " rows but bias has " + std::to_string(b.size()) + " entries");
    }
    RealVector out = matvec(m, v);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

RealVector apply_activation(Activation kind, const RealVector& v) {
    RealVector out(v.size());
    switch (kind) {
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < v.size(); ++i) out[i] = sigmoid(v[i]);
            break;
        case Activation::Tanh:
            for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
            break;
        case Activation::Relu:
            for (std::size_t i = 0; i < v.size(); ++i) out[i] = relu(v[i]);
            break;
    }
    return out;
}

RealVector softmax(const RealVector& logits) {
    if (logits.empty()) throw ContractError("softmax: empty input");
    const double zmax = *std::max_element(logits.begin(), logits.end());
    RealVector out(logits.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - zmax);
        denom += out[i];
    }
    for (double& p : out) p /= denom;
    return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr double kInv53 = 1.0 / 9007199254740992.0;  // 2^-53

}  // namespace

std::uint64_t SeededRng::next_u64() { return splitmix64(state_); }

double SeededRng::uniform(double lo, double hi) {
    if (!(lo < hi)) {
        throw ContractError("SeededRng::uniform: invalid range [" + std::to_string(lo) + ", " +
                            std::to_string(hi) + ")");
    }
    const double u = static_cast<double>(next_u64() >> 11) * kInv53;  // [0, 1)
    return lo + (hi - lo) * u;
}

double SeededRng::gaussian(double mean, double stddev) {
    if (stddev < 0.0) throw ContractError("SeededRng::gaussian: negative stddev");
    if (stddev == 0.0) return mean;
    if (has_spare_) {
        has_spare_ = false;
        return mean + stddev * spare_;
    }
    // Box-Muller; u1 on (0, 1] keeps the log finite.
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * kInv53;
    const double u2 = static_cast<double>(next_u64() >> 11) * kInv53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
}

std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t state = seed ^ (stream_id * 0xD1B54A32D192ED03ULL);
    return splitmix64(state);
}

std::string format_real(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

bool try_parse_real(const std::string& token, double& out) {
    if (token.empty()) return false;
    const char* begin = token.c_str();
    char* end = nullptr;
    errno = 0;
    const double parsed = std::strtod(begin, &end);
    if (end != begin + token.size() || errno == ERANGE) return false;
    out = parsed;
    return true;
}

}  // namespace terra
