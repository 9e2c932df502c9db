#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace terra {

using RealVector = std::vector<double>;

// Dense row-major matrix of doubles.
struct RealMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    RealMatrix() = default;
    RealMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), values(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    std::size_t size() const { return values.size(); }
};

enum class Activation { Sigmoid, Tanh, Relu };

double sigmoid(double x);
double relu(double x);

// out[i] = sum_j m(i,j) * v[j]; m.cols must equal v.size().
RealVector matvec(const RealMatrix& m, const RealVector& v);

// y = m v + b.
RealVector matvec_add(const RealMatrix& m, const RealVector& v, const RealVector& b);

RealVector apply_activation(Activation kind, const RealVector& v);

// Max-subtracted softmax; output sums to 1, entries in (0, 1].
RealVector softmax(const RealVector& logits);

// Shortest decimal form that round-trips a double exactly (17 significant digits).
std::string format_real(double value);

// Strict parse: the whole token must be one finite-or-inf double literal.
bool try_parse_real(const std::string& token, double& out);

// Deterministic splitmix64-backed generator. Identical seeds produce
// identical streams within one build of this library; cross-implementation
// bit equality is not promised.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64();

    // Uniform draw on [lo, hi); requires lo < hi.
    double uniform(double lo, double hi);

    // Gaussian draw; requires stddev >= 0. stddev == 0 returns mean exactly
    // and consumes no stream state.
    double gaussian(double mean, double stddev);

private:
    std::uint64_t seed_;
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;  // cached unit normal from Box-Muller
};

// Deterministic sub-stream seed so independent consumers (init, dropout,
// splits) never share draw order.
std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t stream_id);

}  // namespace terra
