#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "terra/data.hpp"
#include "terra/pipeline.hpp"

namespace terra {

// Rows index the true class, columns the predicted class.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t n_classes);

    std::size_t n_classes() const { return n_; }
    void add(std::size_t truth, std::size_t predicted);
    std::uint64_t at(std::size_t truth, std::size_t predicted) const;
    std::uint64_t row_sum(std::size_t truth) const;
    std::uint64_t total() const;
    double accuracy() const;  // trace / total

private:
    std::size_t n_;
    std::vector<std::uint64_t> counts_;
};

struct EvalResult {
    double accuracy = 0.0;           // one vote per sequence
    double timestep_accuracy = 0.0;  // per-step argmax agreement
    ConfusionMatrix confusion;
};

EvalResult evaluate(const ModelState& model, const std::vector<SequenceSample>& labeled);

// History CSV: epoch,train_loss,val_loss,train_acc,val_acc with the accuracy
// columns left empty for records that carry none (stage-1 training).
void emit_history(std::ostream& out, const History& history);
void emit_history_file(const std::string& path, const History& history);

void write_eval_report(std::ostream& out, const EvalResult& result);  // human-readable
void write_eval_csv(std::ostream& out, const EvalResult& result);

}  // namespace terra
