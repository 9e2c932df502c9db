// Acceptance gate: one check per shipping criterion, one verdict line each.
// Run with --cli <path-to-terra-binary>; exits 0 only if every criterion holds.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "terra/data.hpp"
#include "terra/errors.hpp"
#include "terra/metrics.hpp"
#include "terra/objective.hpp"
#include "terra/optim.hpp"
#include "terra/pipeline.hpp"
#include "terra/recurrent.hpp"
#include "terra/seqcore.hpp"

namespace fs = std::filesystem;
using terra::RealVector;

namespace {

std::string g_cli;
fs::path g_tmp;

int run_cmd(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    return -1;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string serialize_tensors(const terra::StageParams& params) {
    std::string out;
    for (const auto view : params.tensor_views()) {
        for (double w : view) {
            out += terra::format_real(w);
            out += ' ';
        }
    }
    return out;
}

std::vector<terra::SequenceSample> collect(const std::vector<terra::SequenceSample>& samples,
                                           const std::vector<std::size_t>& idx) {
    std::vector<terra::SequenceSample> out;
    for (std::size_t i : idx) out.push_back(samples[i]);
    return out;
}

bool nearly(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// ---- criterion 1: gradient correctness via the CLI harness ----------------
bool criterion_gradcheck() {
    const auto t0 = std::chrono::steady_clock::now();
    const int rc = run_cmd("'" + g_cli + "' gradcheck > '" + (g_tmp / "gradcheck.log").string() +
                           "' 2>&1");
    const double dt = seconds_since(t0);
    if (rc != 0) {
        std::cerr << "  gradcheck exited with " << rc << "\n";
        return false;
    }
    if (dt >= 60.0) {
        std::cerr << "  gradcheck took " << dt << " s\n";
        return false;
    }
    const int rc_bad = run_cmd("'" + g_cli + "' gradcheck --corrupt > /dev/null 2>&1");
    if (rc_bad == 0) {
        std::cerr << "  corrupted-gradient hook was not detected\n";
        return false;
    }
    return true;
}

// ---- criterion 2: loss identities ------------------------------------------
bool criterion_loss_identities() {
    bool ok = true;
    const RealVector weights = {2.0, -3.0, 0.5, -0.25};
    const terra::TensorViews views = {std::span<const double>(weights)};

    const RealVector x = {1.0, 0.0};
    const RealVector x_hat = {0.0, 0.0};
    const terra::LossValue p0 = terra::predicting_loss(x, x_hat, views, {0.0, 0.5});
    ok &= p0.total == p0.data_term && p0.penalty_term == 0.0 && p0.data_term == 0.5;

    const RealVector y = {1.0, 0.0};
    const RealVector y_hat = {0.75, 0.25};
    const terra::LossValue c0 = terra::classifying_loss(y, y_hat, views, {0.0, 0.5});
    ok &= c0.total == c0.data_term && c0.penalty_term == 0.0;
    ok &= nearly(c0.data_term, -std::log(0.75), 1e-12);

    double l1 = 0.0;
    double l2 = 0.0;
    for (double w : weights) {
        l1 += std::fabs(w);
        l2 += w * w;
    }
    ok &= terra::elastic_net_penalty(views, {0.7, 1.0}) == 0.7 * l1;
    ok &= terra::elastic_net_penalty(views, {0.7, 0.0}) == 0.7 * l2;

    const RealVector single = {2.0};
    const terra::TensorViews sview = {std::span<const double>(single)};
    ok &= terra::elastic_net_penalty(sview, {1.0, 1.0}) == 2.0;
    ok &= nearly(terra::elastic_net_penalty(sview, {0.5, 0.25}), 1.75, 1e-12);
    ok &= nearly(terra::penalty_gradient_entry(2.0, {1.0, 0.5}), 2.5, 1e-12);
    ok &= terra::penalty_gradient_entry(0.0, {1.0, 0.3}) == 0.0;

    const RealVector half = {0.5};
    const terra::TensorViews hview = {std::span<const double>(half)};
    ok &= nearly(terra::predicting_loss(x, x_hat, hview, {0.1, 0.5}).total, 0.5375, 1e-12);

    const RealVector uniform(6, 1.0 / 6.0);
    RealVector onehot(6, 0.0);
    onehot[2] = 1.0;
    const terra::LossValue u = terra::classifying_loss(onehot, uniform, {}, {0.0, 0.5});
    ok &= nearly(u.total, std::log(6.0), 1e-9);
    ok &= nearly(u.total, 1.791759469228055, 1e-9);
    return ok;
}

// ---- criterion 3: freeze invariance -----------------------------------------
bool criterion_freeze() {
    terra::SynthSpec spec;
    spec.n_sequences = 30;
    spec.t_min = 6;
    spec.t_max = 10;
    spec.seed = 3;
    const auto samples = terra::synth_generate(spec);

    terra::TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.hidden_size = 8;
    cfg.k = 1;
    cfg.seed = 3;

    const terra::NormStats norm = terra::compute_norm_stats(samples);
    std::vector<terra::SequenceSample> normalized = samples;
    terra::apply_normalization(normalized, norm);

    terra::ModelState model = terra::init_model(terra::kFrameDim, terra::kClassCount, cfg);
    model.set_norm(norm);
    std::vector<terra::SequenceSample> predictor(normalized.begin(), normalized.begin() + 20);
    std::vector<terra::SequenceSample> cls_train(normalized.begin() + 20,
                                                 normalized.begin() + 26);
    std::vector<terra::SequenceSample> cls_val(normalized.begin() + 26, normalized.end());
    terra::train_stage1(model, predictor);
    model.freeze_stage1();
    const std::string snapshot = serialize_tensors(model.stage1());

    bool frozen_guard = false;
    try {
        model.stage1_mutable();
    } catch (const terra::ContractError&) {
        frozen_guard = true;
    }

    terra::train_stage2(model, cls_train, cls_val, nullptr);
    const std::string after = serialize_tensors(model.stage1());
    if (after != snapshot) {
        std::cerr << "  stage-1 tensors changed during stage-2 training\n";
        return false;
    }
    if (!frozen_guard) {
        std::cerr << "  frozen stage-1 tensors were still reachable for writing\n";
        return false;
    }
    return true;
}

// ---- criterion 4: end-to-end synthetic learning -----------------------------
bool criterion_end_to_end() {
    terra::SynthSpec spec;
    spec.n_sequences = 300;
    spec.t_min = 40;
    spec.t_max = 80;
    spec.seed = 11;
    const auto samples = terra::synth_generate(spec);

    terra::TrainConfig cfg;
    cfg.hidden_size = 32;
    cfg.epochs = 100;
    cfg.seed = 11;

    const auto t0 = std::chrono::steady_clock::now();
    const terra::TrainOutcome outcome = terra::run_training(samples, cfg);
    const auto held_out = collect(samples, outcome.split.test);
    const terra::EvalResult result = terra::evaluate(outcome.model, held_out);
    const double dt = seconds_since(t0);

    bool ok = true;
    if (result.accuracy < 0.90) {
        std::cerr << "  held-out accuracy " << result.accuracy << " below 0.90\n";
        ok = false;
    }
    if (dt >= 300.0) {
        std::cerr << "  training took " << dt << " s\n";
        ok = false;
    }

    // CLI smoke on a schema-conforming CSV: train + eval must run end to end
    // and emit a report; no accuracy assertion.
    const fs::path csv = g_tmp / "smoke.csv";
    terra::SynthSpec small = spec;
    small.n_sequences = 40;
    small.t_min = 10;
    small.t_max = 16;
    terra::emit_csv_file(csv.string(), terra::synth_generate(small));
    const fs::path run_dir = g_tmp / "smoke_run";
    const fs::path report = g_tmp / "smoke_eval.csv";
    int rc = run_cmd("'" + g_cli + "' train --data '" + csv.string() + "' --out '" +
                     run_dir.string() + "' --hidden 8 --epochs 2 --k 2 --seed 5 > /dev/null 2>&1");
    if (rc != 0) {
        std::cerr << "  CLI train smoke exited with " << rc << "\n";
        return false;
    }
    rc = run_cmd("'" + g_cli + "' eval --model '" + (run_dir / "model.txt").string() +
                 "' --data '" + csv.string() + "' --out '" + report.string() +
                 "' > /dev/null 2>&1");
    if (rc != 0) {
        std::cerr << "  CLI eval smoke exited with " << rc << "\n";
        return false;
    }
    const std::string report_text = read_file(report);
    if (report_text.rfind("accuracy,", 0) != 0 ||
        report_text.find("\nlabel,concrete,") == std::string::npos) {
        std::cerr << "  eval report lacks accuracy/confusion rows\n";
        return false;
    }
    return ok;
}

// ---- criterion 5: Adam oracle ----------------------------------------------
bool criterion_adam() {
    RealVector w = {1.0};
    const RealVector g = {2.0};
    terra::AdamState state = terra::adam_init({std::span<const double>(w)});
    terra::AdamConfig cfg;
    terra::adam_step({std::span<double>(w)}, {std::span<const double>(g)}, state, cfg);
    const double expected = 1.0 - 0.005 * 2.0 / (2.0 + 1e-8);
    if (!nearly(w[0], expected, 1e-9)) {
        std::cerr << "  first Adam step gave " << terra::format_real(w[0]) << "\n";
        return false;
    }

    RealVector w2 = {1.234};
    const RealVector g2 = {0.0};
    terra::AdamState s2 = terra::adam_init({std::span<const double>(w2)});
    terra::adam_step({std::span<double>(w2)}, {std::span<const double>(g2)}, s2, cfg);
    if (w2[0] != 1.234) {
        std::cerr << "  zero gradient moved the parameter\n";
        return false;
    }
    return true;
}

// ---- criterion 6: data pipeline ---------------------------------------------
bool criterion_data_pipeline() {
    bool ok = true;

    terra::SynthSpec spec;
    spec.n_sequences = 40;
    spec.t_min = 8;
    spec.t_max = 14;
    spec.seed = 9;
    auto samples = terra::synth_generate(spec);
    const terra::NormStats stats = terra::compute_norm_stats(samples);
    terra::apply_normalization(samples, stats);
    const terra::NormStats refit = terra::compute_norm_stats(samples);
    for (std::size_t j = 0; j < refit.mean.size(); ++j) {
        ok &= std::abs(refit.mean[j]) < 1e-9;
        ok &= std::abs(refit.stddev[j] - 1.0) < 1e-9;
    }
    if (!ok) std::cerr << "  normalization did not standardize the fitting subset\n";

    const auto folds = terra::kfold_partition(11, 5, 77);
    std::vector<std::size_t> sizes;
    std::vector<bool> seen(11, false);
    bool fold_ok = folds.size() == 5;
    for (const auto& fold : folds) {
        sizes.push_back(fold.size());
        for (std::size_t i : fold) {
            if (i >= 11 || seen[i]) fold_ok = false;
            if (i < 11) seen[i] = true;
        }
    }
    for (bool s : seen) fold_ok &= s;
    std::sort(sizes.begin(), sizes.end());
    fold_ok &= sizes == std::vector<std::size_t>({2, 2, 2, 2, 3});
    if (!fold_ok) std::cerr << "  k-fold partition violated its properties\n";
    ok &= fold_ok;

    const terra::SplitResult split = terra::split_semi_supervised(100, 123);
    bool split_ok = split.predictor.size() == 90 && split.classifier_train.size() == 5 &&
                    split.classifier_val.size() == 5 && split.test.size() == 10;
    std::vector<bool> covered(100, false);
    for (const auto* bucket : {&split.predictor, &split.classifier_train, &split.classifier_val}) {
        for (std::size_t i : *bucket) {
            if (covered[i]) split_ok = false;  // the three primary parts are disjoint
            covered[i] = true;
        }
    }
    for (bool c : covered) split_ok &= c;
    if (!split_ok) std::cerr << "  semi-supervised split violated 90/5/5\n";
    ok &= split_ok;

    terra::SynthSpec rt = spec;
    rt.n_sequences = 10;
    const auto original = terra::synth_generate(rt);
    std::stringstream io;
    terra::emit_csv(io, original);
    const auto reread = terra::ingest_csv(io);
    bool rt_ok = reread.size() == original.size();
    for (std::size_t i = 0; rt_ok && i < original.size(); ++i) {
        rt_ok &= reread[i].seq_id == original[i].seq_id;
        rt_ok &= reread[i].label == original[i].label;
        rt_ok &= reread[i].frames == original[i].frames;
    }
    if (!rt_ok) std::cerr << "  CSV round-trip was not exact\n";
    ok &= rt_ok;
    return ok;
}

// ---- criterion 7: determinism and persistence --------------------------------
bool criterion_determinism() {
    terra::SynthSpec spec;
    spec.n_sequences = 60;
    spec.t_min = 20;
    spec.t_max = 30;
    spec.seed = 7;
    const auto samples = terra::synth_generate(spec);
    const fs::path csv = g_tmp / "det.csv";
    terra::emit_csv_file(csv.string(), samples);

    const std::string common = "' train --data '" + csv.string() +
                               "' --hidden 8 --epochs 4 --k 2 --batch 8 --seed 13 --out '";
    int rc = run_cmd("'" + g_cli + common + (g_tmp / "runA").string() + "' > /dev/null 2>&1");
    rc |= run_cmd("'" + g_cli + common + (g_tmp / "runB").string() + "' > /dev/null 2>&1");
    if (rc != 0) {
        std::cerr << "  CLI training runs failed\n";
        return false;
    }
    const std::string model_a = read_file(g_tmp / "runA" / "model.txt");
    const std::string model_b = read_file(g_tmp / "runB" / "model.txt");
    if (model_a.empty() || model_a != model_b) {
        std::cerr << "  model files differ between identical runs\n";
        return false;
    }

    terra::TrainConfig cfg;
    cfg.hidden_size = 8;
    cfg.epochs = 4;
    cfg.k = 2;
    cfg.batch_size = 8;
    cfg.seed = 13;
    const terra::TrainOutcome outcome = terra::run_training(samples, cfg);
    const fs::path saved = g_tmp / "roundtrip_model.txt";
    terra::save_model(outcome.model, saved.string());
    const terra::ModelState loaded = terra::load_model(saved.string());
    for (const auto& sample : samples) {
        const terra::Prediction a = terra::predict_sequence(outcome.model, sample);
        const terra::Prediction b = terra::predict_sequence(loaded, sample);
        if (a.label != b.label || a.distribution != b.distribution) {
            std::cerr << "  reloaded model predicts differently\n";
            return false;
        }
    }
    return true;
}

// ---- criterion 8: history emission -------------------------------------------
bool criterion_history() {
    terra::SynthSpec spec;
    spec.n_sequences = 40;
    spec.t_min = 10;
    spec.t_max = 16;
    spec.seed = 21;
    const auto samples = terra::synth_generate(spec);
    terra::TrainConfig cfg;
    cfg.hidden_size = 8;
    cfg.epochs = 5;
    cfg.k = 1;
    cfg.batch_size = 8;
    cfg.seed = 21;
    const terra::TrainOutcome outcome = terra::run_training(samples, cfg);

    bool ok = outcome.stage1_history.size() == cfg.epochs &&
              outcome.stage2_history.size() == cfg.epochs;
    for (std::size_t i = 0; i < outcome.stage1_history.size(); ++i) {
        const auto& r = outcome.stage1_history[i];
        ok &= r.epoch == i + 1 && std::isfinite(r.train_loss) && std::isfinite(r.val_loss);
        ok &= !r.has_accuracy;
    }
    for (std::size_t i = 0; i < outcome.stage2_history.size(); ++i) {
        const auto& r = outcome.stage2_history[i];
        ok &= r.epoch == i + 1 && std::isfinite(r.train_loss) && std::isfinite(r.val_loss);
        ok &= r.has_accuracy;
        ok &= r.train_acc >= 0.0 && r.train_acc <= 1.0 && r.val_acc >= 0.0 && r.val_acc <= 1.0;
    }
    if (!ok) {
        std::cerr << "  history rows malformed\n";
        return false;
    }

    std::stringstream s1;
    terra::emit_history(s1, outcome.stage1_history);
    std::string line;
    std::size_t lines = 0;
    bool empty_acc = true;
    while (std::getline(s1, line)) {
        if (lines > 0) empty_acc &= line.substr(line.size() - 2) == ",,";
        ++lines;
    }
    if (lines != cfg.epochs + 1 || !empty_acc) {
        std::cerr << "  stage-1 history CSV malformed\n";
        return false;
    }
    std::stringstream s2;
    terra::emit_history(s2, outcome.stage2_history);
    lines = 0;
    while (std::getline(s2, line)) ++lines;
    if (lines != cfg.epochs + 1) {
        std::cerr << "  stage-2 history CSV malformed\n";
        return false;
    }
    return true;
}

struct Criterion {
    const char* name;
    bool (*fn)();
};

}  // namespace

int main(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--cli") g_cli = argv[i + 1];
    }
    if (g_cli.empty()) {
        std::cerr << "usage: acceptance --cli <path-to-terra-binary>\n";
        return 2;
    }
    g_tmp = fs::temp_directory_path() /
            ("terra_acceptance_" + std::to_string(static_cast<long>(::getpid())));
    fs::create_directories(g_tmp);

    const Criterion criteria[] = {
        {"gradient correctness", criterion_gradcheck},
        {"loss identities", criterion_loss_identities},
        {"freeze invariance", criterion_freeze},
        {"end-to-end synthetic learning", criterion_end_to_end},
        {"Adam oracle", criterion_adam},
        {"data pipeline", criterion_data_pipeline},
        {"determinism and persistence", criterion_determinism},
        {"history emission", criterion_history},
    };

    int failed = 0;
    int index = 0;
    for (const Criterion& c : criteria) {
        ++index;
        bool ok = false;
        try {
            ok = c.fn();
        } catch (const std::exception& e) {
            std::cerr << "  exception: " << e.what() << "\n";
        }
        std::cout << "criterion " << index << " (" << c.name << "): " << (ok ? "PASS" : "FAIL")
                  << std::endl;
        if (!ok) ++failed;
    }

    std::error_code ec;
    fs::remove_all(g_tmp, ec);
    if (failed > 0) {
        std::cout << failed << " of 8 criteria failed" << std::endl;
        return 1;
    }
    std::cout << "all 8 criteria passed" << std::endl;
    return 0;
}
