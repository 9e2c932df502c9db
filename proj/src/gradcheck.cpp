#include "terra/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <utility>

#include "terra/errors.hpp"
#include "terra/seqcore.hpp"

namespace terra {

void GradCheckConfig::validate() const {
    if (hidden_size < 1 || input_dim < 1 || class_count < 2 || n_sequences < 1) {
        throw ContractError("GradCheckConfig: degenerate net dimensions");
    }
    if (seq_len < 1) throw ContractError("GradCheckConfig: seq_len must be at least 1");
    if (!(fd_step > 0.0) || !(tolerance > 0.0) || exclude_below < 0.0) {
        throw ContractError("GradCheckConfig: fd_step and tolerance must be positive");
    }
}

namespace {

struct ToySequence {
    std::vector<RealVector> xs;
    std::vector<RealVector> targets;
    std::size_t label = 0;
};

// Pushes every parameter at least 5e-3 away from zero so that neither the
// finite-difference step nor the kink exclusion interferes with the check.
void nudge_from_zero(StageParams& params) {
    for (auto view : params.tensor_views()) {
        for (double& w : view) {
            if (std::abs(w) < 5e-3) w += w >= 0.0 ? 5e-3 : -5e-3;
        }
    }
}

struct Scenario {
    std::string name;
    LossKind kind = LossKind::Prediction;
    RegularizationSpec reg;
};

std::vector<Scenario> make_scenarios() {
    std::vector<Scenario> out;
    const std::pair<const char*, LossKind> kinds[] = {
        {"prediction", LossKind::Prediction},
        {"classification", LossKind::Classification},
    };
    for (const auto& [kind_name, kind] : kinds) {
        {
            Scenario s;
            s.name = std::string(kind_name) + " lambda=0";
            s.kind = kind;
            s.reg.lambda = 0.0;
            s.reg.gamma = 0.5;
            out.push_back(s);
        }
        for (double gamma : {0.0, 0.5, 1.0}) {
            Scenario s;
            s.name = std::string(kind_name) + " lambda=0.1 gamma=" + format_real(gamma);
            s.kind = kind;
            s.reg.lambda = 0.1;
            s.reg.gamma = gamma;
            out.push_back(s);
        }
    }
    return out;
}

SequenceTask task_for(const Scenario& scenario, const ToySequence& seq) {
    SequenceTask task;
    task.kind = scenario.kind;
    if (scenario.kind == LossKind::Prediction) {
        task.target_frames = &seq.targets;
    } else {
        task.label = seq.label;
    }
    return task;
}

// Total scenario loss under the batch conventions: prediction pools frames
// across sequences, classification averages each sequence over time and then
// over sequences; the penalty enters once.
double scenario_loss(const StageParams& params, const Scenario& scenario,
                     const std::vector<ToySequence>& seqs) {
    const DropoutSpec eval;
    double loss = 0.0;
    if (scenario.kind == LossKind::Prediction) {
        std::size_t frames = 0;
        for (const auto& s : seqs) frames += s.xs.size();
        const double weight = 1.0 / static_cast<double>(frames);
        for (const auto& s : seqs) {
            loss += sequence_data_loss(params, s.xs, task_for(scenario, s), weight, eval);
        }
    } else {
        for (const auto& s : seqs) {
            const double weight =
                1.0 / (static_cast<double>(seqs.size()) * static_cast<double>(s.xs.size()));
            loss += sequence_data_loss(params, s.xs, task_for(scenario, s), weight, eval);
        }
    }
    return loss + elastic_net_penalty(params.penalty_views(true), scenario.reg);
}

ParamGradients scenario_gradients(const StageParams& params, const Scenario& scenario,
                                  const std::vector<ToySequence>& seqs) {
    const DropoutSpec eval;
    ParamGradients grads = ParamGradients::zeros_like(params);
    if (scenario.kind == LossKind::Prediction) {
        std::size_t frames = 0;
        for (const auto& s : seqs) frames += s.xs.size();
        const double weight = 1.0 / static_cast<double>(frames);
        for (const auto& s : seqs) {
            sequence_backward(params, s.xs, task_for(scenario, s), weight, eval, grads);
        }
    } else {
        for (const auto& s : seqs) {
            const double weight =
                1.0 / (static_cast<double>(seqs.size()) * static_cast<double>(s.xs.size()));
            sequence_backward(params, s.xs, task_for(scenario, s), weight, eval, grads);
        }
    }
    const auto views = params.penalty_views(true);
    auto gviews = grads.tensor_views();
    for (std::size_t i = 0; i < views.size(); ++i) {
        accumulate_penalty_gradient(views[i], gviews[i], scenario.reg);
    }
    return grads;
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckConfig& config) {
    config.validate();
    static const char* tensor_names[] = {"W", "U", "b", "head_V", "head_b"};

    GradCheckReport report;
    report.passed = true;
    SeededRng data_rng(derive_stream(config.seed, 0xDA7A));

    for (const Scenario& scenario : make_scenarios()) {
        const std::size_t out_dim =
            scenario.kind == LossKind::Prediction ? config.input_dim : config.class_count;
        StageParams params(config.hidden_size, config.input_dim, out_dim);
        SeededRng init_rng(derive_stream(config.seed, 0x1717));
        params.init_weights(init_rng);
        nudge_from_zero(params);

        std::vector<ToySequence> seqs(config.n_sequences);
        for (std::size_t s = 0; s < seqs.size(); ++s) {
            seqs[s].label = s % config.class_count;
            seqs[s].xs.resize(config.seq_len);
            seqs[s].targets.resize(config.seq_len);
            for (std::size_t t = 0; t < config.seq_len; ++t) {
                seqs[s].xs[t].resize(config.input_dim);
                seqs[s].targets[t].resize(config.input_dim);
                for (std::size_t j = 0; j < config.input_dim; ++j) {
                    seqs[s].xs[t][j] = data_rng.uniform(-1.0, 1.0);
                    seqs[s].targets[t][j] = data_rng.uniform(-1.0, 1.0);
                }
            }
        }

        ParamGradients grads = scenario_gradients(params, scenario, seqs);
        if (config.corrupt) {
            grads.tensor_views().front()[0] += 1e-2;
        }

        ScenarioResult result;
        result.name = scenario.name;
        result.passed = true;
        auto param_views = params.tensor_views();
        const auto grad_views = std::as_const(grads).tensor_views();
        for (std::size_t ti = 0; ti < param_views.size(); ++ti) {
            TensorCheck check;
            check.tensor = tensor_names[ti];
            auto view = param_views[ti];
            for (std::size_t i = 0; i < view.size(); ++i) {
                const double w = view[i];
                if (std::abs(w) <= config.exclude_below) {
                    ++check.skipped;
                    continue;
                }
                view[i] = w + config.fd_step;
                const double loss_hi = scenario_loss(params, scenario, seqs);
                view[i] = w - config.fd_step;
                const double loss_lo = scenario_loss(params, scenario, seqs);
                view[i] = w;
                const double fd = (loss_hi - loss_lo) / (2.0 * config.fd_step);
                const double analytic = grad_views[ti][i];
                // The denominator floor keeps finite-difference roundoff from
                // dominating when the true gradient is vanishingly small.
                const double rel = std::abs(analytic - fd) /
                                   std::max({std::abs(analytic), std::abs(fd), 1e-4});
                check.max_rel_error = std::max(check.max_rel_error, rel);
                ++check.checked;
            }
            if (check.max_rel_error >= config.tolerance) result.passed = false;
            result.tensors.push_back(std::move(check));
        }
        if (!result.passed) report.passed = false;
        report.scenarios.push_back(std::move(result));
    }
    return report;
}

void write_gradcheck_report(std::ostream& out, const GradCheckReport& report) {
    for (const ScenarioResult& scenario : report.scenarios) {
        out << "scenario " << scenario.name << '\n';
        for (const TensorCheck& t : scenario.tensors) {
            out << "  tensor " << t.tensor << " max_rel_error " << format_real(t.max_rel_error)
                << " checked " << t.checked << " skipped " << t.skipped << '\n';
        }
        out << "  " << (scenario.passed ? "pass" : "FAIL") << '\n';
    }
    out << (report.passed ? "gradcheck pass" : "gradcheck FAIL") << '\n';
}

}  // namespace terra
