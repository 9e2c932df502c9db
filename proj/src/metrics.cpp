#include "terra/metrics.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>

#include "terra/errors.hpp"

namespace terra {

ConfusionMatrix::ConfusionMatrix(std::size_t n_classes) : n_(n_classes), counts_(n_ * n_, 0) {
    if (n_ < 1) throw ContractError("ConfusionMatrix: need at least one class");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
    if (truth >= n_ || predicted >= n_) {
        throw ContractError("ConfusionMatrix::add: class index out of range");
    }
    ++counts_[truth * n_ + predicted];
}

std::uint64_t ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const {
    if (truth >= n_ || predicted >= n_) {
        throw ContractError("ConfusionMatrix::at: class index out of range");
    }
    return counts_[truth * n_ + predicted];
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
    if (truth >= n_) throw ContractError("ConfusionMatrix::row_sum: class index out of range");
    std::uint64_t sum = 0;
    for (std::size_t c = 0; c < n_; ++c) sum += counts_[truth * n_ + c];
    return sum;
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t sum = 0;
    for (std::uint64_t c : counts_) sum += c;
    return sum;
}

double ConfusionMatrix::accuracy() const {
    const std::uint64_t n = total();
    if (n == 0) throw ContractError("ConfusionMatrix::accuracy: no observations");
    std::uint64_t trace = 0;
    for (std::size_t i = 0; i < n_; ++i) trace += counts_[i * n_ + i];
    return static_cast<double>(trace) / static_cast<double>(n);
}

EvalResult evaluate(const ModelState& model, const std::vector<SequenceSample>& labeled) {
    if (labeled.empty()) throw ContractError("evaluate: no sequences");
    EvalResult result{0.0, 0.0, ConfusionMatrix(model.class_count())};

    std::uint64_t steps_total = 0;
    std::uint64_t steps_correct = 0;
    for (const auto& sample : labeled) {
        if (sample.label == kUnlabeled) {
            throw ContractError("evaluate: sequence '" + sample.seq_id + "' is unlabeled");
        }
        if (sample.label < 0 || static_cast<std::size_t>(sample.label) >= model.class_count()) {
            throw ContractError("evaluate: sequence '" + sample.seq_id +
                                "' has out-of-range label " + std::to_string(sample.label));
        }
        const std::size_t truth = static_cast<std::size_t>(sample.label);
        const Prediction p = predict_sequence(model, sample);
        result.confusion.add(truth, static_cast<std::size_t>(p.label));

        for (const RealVector& dist : step_distributions(model, sample)) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < dist.size(); ++i) {
                if (dist[i] > dist[best]) best = i;
            }
            ++steps_total;
            if (best == truth) ++steps_correct;
        }
    }
    result.accuracy = result.confusion.accuracy();
    result.timestep_accuracy =
        static_cast<double>(steps_correct) / static_cast<double>(steps_total);
    return result;
}

void emit_history(std::ostream& out, const History& history) {
    if (history.empty()) throw ContractError("emit_history: empty history");
    out << "epoch,train_loss,val_loss,train_acc,val_acc\n";
    for (const EpochRecord& r : history) {
        out << r.epoch << ',' << format_real(r.train_loss) << ',' << format_real(r.val_loss)
            << ',';
        if (r.has_accuracy) {
            out << format_real(r.train_acc) << ',' << format_real(r.val_acc);
        } else {
            out << ',';
        }
        out << '\n';
    }
}

void emit_history_file(const std::string& path, const History& history) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    emit_history(out, history);
    if (!out) throw IoError("write to '" + path + "' failed");
}

namespace {

std::string class_display_name(std::size_t n_classes, std::size_t index) {
    if (n_classes == kClassCount) return label_name(static_cast<int>(index));
    return "class" + std::to_string(index);
}

}  // namespace

void write_eval_report(std::ostream& out, const EvalResult& result) {
    out << "sequences evaluated: " << result.confusion.total() << '\n';
    out << "accuracy: " << format_real(result.accuracy) << '\n';
    out << "timestep accuracy: " << format_real(result.timestep_accuracy) << '\n';
    out << "confusion matrix (rows = truth, columns = predicted):\n";
    const std::size_t n = result.confusion.n_classes();
    out << std::left << std::setw(12) << "";
    for (std::size_t c = 0; c < n; ++c) {
        out << std::setw(10) << class_display_name(n, c);
    }
    out << '\n';
    for (std::size_t r = 0; r < n; ++r) {
        out << std::setw(12) << class_display_name(n, r);
        for (std::size_t c = 0; c < n; ++c) {
            out << std::setw(10) << result.confusion.at(r, c);
        }
        out << '\n';
    }
}

void write_eval_csv(std::ostream& out, const EvalResult& result) {
    out << "accuracy," << format_real(result.accuracy) << '\n';
    out << "timestep_accuracy," << format_real(result.timestep_accuracy) << '\n';
    const std::size_t n = result.confusion.n_classes();
    out << "label";
    for (std::size_t c = 0; c < n; ++c) out << ',' << class_display_name(n, c);
    out << '\n';
    for (std::size_t r = 0; r < n; ++r) {
        out << class_display_name(n, r);
        for (std::size_t c = 0; c < n; ++c) out << ',' << result.confusion.at(r, c);
        out << '\n';
    }
}

}  // namespace terra
