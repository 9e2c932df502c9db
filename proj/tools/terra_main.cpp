#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "terra/data.hpp"
#include "terra/errors.hpp"
#include "terra/gradcheck.hpp"
#include "terra/metrics.hpp"
#include "terra/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitContract = 3;

std::string fnv1a64_of_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw terra::IoError("cannot open '" + path + "' for hashing");
    std::uint64_t hash = 0xCBF29CE484222325ULL;
    char buf[1 << 14];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 0x100000001B3ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
    return hex;
}

struct SynthArgs {
    terra::SynthSpec spec;
    std::string out = "synth.csv";
    std::string config_path;
};

struct TrainArgs {
    std::string data;
    std::string out_dir = "run";
    terra::TrainConfig config;
    std::string cascade = "predictive";
    std::string config_path;
};

struct EvalArgs {
    std::string model;
    std::string data;
    std::string out = "eval.csv";
    std::string config_path;
};

// ---- flat key=value config files -------------------------------------------
// Keys mirror the long flag names (without the leading --); values given on
// the command line always win over file values.

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::pair<std::string, std::string>> read_flat_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw terra::IoError("cannot open config file '" + path + "'");
    std::vector<std::pair<std::string, std::string>> items;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string text = trim(line);
        if (text.empty() || text[0] == '#') continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw terra::DataError("config file " + path + " line " + std::to_string(line_no) +
                                   ": expected key=value");
        }
        items.emplace_back(trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
    }
    return items;
}

std::uint64_t config_count(const std::string& key, const std::string& value) {
    if (value.empty()) throw terra::DataError("config key '" + key + "': empty value");
    const char* begin = value.c_str();
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(begin, &end, 10);
    if (end != begin + value.size() || errno == ERANGE || value[0] == '-') {
        throw terra::DataError("config key '" + key + "': '" + value +
                               "' is not a non-negative integer");
    }
    return v;
}

double config_real(const std::string& key, const std::string& value) {
    double v = 0.0;
    if (!terra::try_parse_real(value, v)) {
        throw terra::DataError("config key '" + key + "': '" + value + "' is not a number");
    }
    return v;
}

bool config_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw terra::DataError("config key '" + key + "': '" + value +
                           "' is not a boolean (true/false/1/0)");
}

using ConfigTable = std::map<std::string, std::function<void(const std::string&)>>;

void apply_config_file(const CLI::App& cmd, const std::string& path, const ConfigTable& table) {
    for (const auto& [key, value] : read_flat_config(path)) {
        const auto it = table.find(key);
        if (it == table.end()) {
            throw terra::DataError("config file " + path + ": unknown key '" + key + "'");
        }
        if (cmd.count("--" + key) > 0) continue;  // the explicit flag wins
        it->second(value);
    }
}

void apply_synth_config(const CLI::App& cmd, SynthArgs& args) {
    ConfigTable table;
    table["n"] = [&](const std::string& v) { args.spec.n_sequences = config_count("n", v); };
    table["t-min"] = [&](const std::string& v) { args.spec.t_min = config_count("t-min", v); };
    table["t-max"] = [&](const std::string& v) { args.spec.t_max = config_count("t-max", v); };
    table["seed"] = [&](const std::string& v) { args.spec.seed = config_count("seed", v); };
    table["classes"] = [&](const std::string& v) {
        args.spec.class_count = config_count("classes", v);
    };
    table["dim"] = [&](const std::string& v) { args.spec.dim = config_count("dim", v); };
    table["noise-scale"] = [&](const std::string& v) {
        args.spec.noise_scale = config_real("noise-scale", v);
    };
    table["out"] = [&](const std::string& v) { args.out = v; };
    apply_config_file(cmd, args.config_path, table);
}

void apply_train_config(const CLI::App& cmd, TrainArgs& args) {
    terra::TrainConfig& c = args.config;
    ConfigTable table;
    table["data"] = [&](const std::string& v) { args.data = v; };
    table["out"] = [&](const std::string& v) { args.out_dir = v; };
    table["seed"] = [&](const std::string& v) { c.seed = config_count("seed", v); };
    table["epochs"] = [&](const std::string& v) { c.epochs = config_count("epochs", v); };
    table["lr"] = [&](const std::string& v) { c.learning_rate = config_real("lr", v); };
    table["batch"] = [&](const std::string& v) { c.batch_size = config_count("batch", v); };
    table["dropout"] = [&](const std::string& v) { c.dropout = config_real("dropout", v); };
    table["lambda"] = [&](const std::string& v) { c.reg.lambda = config_real("lambda", v); };
    table["gamma"] = [&](const std::string& v) { c.reg.gamma = config_real("gamma", v); };
    table["k"] = [&](const std::string& v) { c.k = config_count("k", v); };
    table["hidden"] = [&](const std::string& v) { c.hidden_size = config_count("hidden", v); };
    table["cascade"] = [&](const std::string& v) { args.cascade = v; };
    table["input-relu"] = [&](const std::string& v) {
        c.input_relu = config_bool("input-relu", v);
    };
    table["paper-literal-split"] = [&](const std::string& v) {
        c.paper_literal_split = config_bool("paper-literal-split", v);
    };
    table["cascade-train-raw"] = [&](const std::string& v) {
        c.cascade_train_raw = config_bool("cascade-train-raw", v);
    };
    table["penalize-head"] = [&](const std::string& v) {
        c.penalize_head = config_bool("penalize-head", v);
    };
    table["clip-norm"] = [&](const std::string& v) { c.clip_norm = config_real("clip-norm", v); };
    apply_config_file(cmd, args.config_path, table);
}

void apply_eval_config(const CLI::App& cmd, EvalArgs& args) {
    ConfigTable table;
    table["model"] = [&](const std::string& v) { args.model = v; };
    table["data"] = [&](const std::string& v) { args.data = v; };
    table["out"] = [&](const std::string& v) { args.out = v; };
    apply_config_file(cmd, args.config_path, table);
}

struct GradcheckArgs {
    terra::GradCheckConfig config;
};

int cmd_synth(const SynthArgs& args) {
    const auto samples = terra::synth_generate(args.spec);
    terra::emit_csv_file(args.out, samples);
    std::cout << "wrote " << samples.size() << " sequences to " << args.out << '\n';
    return kExitOk;
}

int cmd_train(const TrainArgs& args) {
    terra::TrainConfig config = args.config;
    config.cascade_mode = terra::cascade_mode_from_name(args.cascade);
    config.validate();

    const auto samples = terra::ingest_csv_file(args.data);
    fs::create_directories(args.out_dir);
    const fs::path out_dir(args.out_dir);
    const std::string model_path = (out_dir / "model.txt").string();
    const std::string h1_path = (out_dir / "stage1_history.csv").string();
    const std::string h2_path = (out_dir / "stage2_history.csv").string();
    const std::string manifest_path = (out_dir / "manifest.json").string();

    try {
        const terra::TrainOutcome outcome = terra::run_training(samples, config);
        terra::save_model(outcome.model, model_path);
        if (!outcome.stage1_history.empty()) {
            terra::emit_history_file(h1_path, outcome.stage1_history);
        }
        if (!outcome.stage2_history.empty()) {
            terra::emit_history_file(h2_path, outcome.stage2_history);
        }

        nlohmann::json manifest;
        manifest["command"] = "train";
        manifest["data"] = args.data;
        manifest["dataset_hash"] = fnv1a64_of_file(args.data);
        manifest["config"] = {
            {"epochs", config.epochs},
            {"batch_size", config.batch_size},
            {"learning_rate", config.learning_rate},
            {"dropout", config.dropout},
            {"k", config.k},
            {"hidden_size", config.hidden_size},
            {"lambda", config.reg.lambda},
            {"gamma", config.reg.gamma},
            {"seed", config.seed},
            {"input_relu", config.input_relu},
            {"cascade_mode", terra::cascade_mode_name(config.cascade_mode)},
            {"paper_literal_split", config.paper_literal_split},
            {"cascade_train_raw", config.cascade_train_raw},
            {"penalize_head", config.penalize_head},
            {"clip_norm", config.clip_norm},
        };
        manifest["split"] = {
            {"predictor", outcome.split.predictor.size()},
            {"classifier_train", outcome.split.classifier_train.size()},
            {"classifier_val", outcome.split.classifier_val.size()},
            {"test", outcome.split.test.size()},
        };
        if (!outcome.kfold.fold_accuracies.empty()) {
            manifest["kfold"] = {
                {"fold_accuracies", outcome.kfold.fold_accuracies},
                {"mean", outcome.kfold.mean},
                {"stddev", outcome.kfold.stddev},
            };
        }
        manifest["outputs"] = {
            {"model", model_path},
            {"stage1_history", h1_path},
            {"stage2_history", h2_path},
        };
        std::ofstream mout(manifest_path);
        if (!mout) throw terra::IoError("cannot open '" + manifest_path + "' for writing");
        mout << manifest.dump(2) << '\n';
        if (!mout) throw terra::IoError("write to '" + manifest_path + "' failed");

        std::cout << "trained on " << samples.size() << " sequences\n";
        if (!outcome.kfold.fold_accuracies.empty()) {
            std::cout << "k-fold validation accuracy: " << terra::format_real(outcome.kfold.mean)
                      << " +/- " << terra::format_real(outcome.kfold.stddev) << '\n';
        }
        if (!outcome.stage2_history.empty()) {
            std::cout << "final validation accuracy: "
                      << terra::format_real(outcome.stage2_history.back().val_acc) << '\n';
        }
        std::cout << "model written to " << model_path << '\n';
        return kExitOk;
    } catch (...) {
        for (const auto& p : {model_path, h1_path, h2_path, manifest_path}) {
            std::error_code ec;
            fs::remove(p, ec);
        }
        throw;
    }
}

int cmd_eval(const EvalArgs& args) {
    const terra::ModelState model = terra::load_model(args.model);
    const auto samples = terra::ingest_csv_file(args.data);
    const terra::EvalResult result = terra::evaluate(model, samples);
    terra::write_eval_report(std::cout, result);
    std::ofstream out(args.out);
    if (!out) throw terra::IoError("cannot open '" + args.out + "' for writing");
    terra::write_eval_csv(out, result);
    if (!out) throw terra::IoError("write to '" + args.out + "' failed");
    std::cout << "report written to " << args.out << '\n';
    return kExitOk;
}

int cmd_gradcheck(const GradcheckArgs& args) {
    const terra::GradCheckReport report = terra::run_gradcheck(args.config);
    terra::write_gradcheck_report(std::cout, report);
    return report.passed ? kExitOk : kExitContract;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semi-supervised stacked-LSTM terrain classification"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic gait dataset CSV");
    synth->add_option("--config", synth_args.config_path,
                      "flat key=value config file; flags override it");
    synth->add_option("--n", synth_args.spec.n_sequences, "number of sequences");
    synth->add_option("--t-min", synth_args.spec.t_min, "shortest sequence length");
    synth->add_option("--t-max", synth_args.spec.t_max, "longest sequence length");
    synth->add_option("--seed", synth_args.spec.seed, "generator seed");
    synth->add_option("--classes", synth_args.spec.class_count, "number of terrain classes");
    synth->add_option("--dim", synth_args.spec.dim, "channels per frame");
    synth->add_option("--noise-scale", synth_args.spec.noise_scale, "noise multiplier");
    synth->add_option("--out", synth_args.out, "output CSV path");

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "train the two-stage model on a dataset CSV");
    train->add_option("--config", train_args.config_path,
                      "flat key=value config file; flags override it");
    train->add_option("--data", train_args.data, "dataset CSV path");
    train->add_option("--out", train_args.out_dir, "output directory");
    train->add_option("--seed", train_args.config.seed, "run seed");
    train->add_option("--epochs", train_args.config.epochs, "epoch cap per stage");
    train->add_option("--lr", train_args.config.learning_rate, "Adam learning rate");
    train->add_option("--batch", train_args.config.batch_size, "batch size in sequences");
    train->add_option("--dropout", train_args.config.dropout, "dropout rate on LSTM outputs");
    train->add_option("--lambda", train_args.config.reg.lambda, "elastic-net strength");
    train->add_option("--gamma", train_args.config.reg.gamma, "elastic-net l1/l2 mix");
    train->add_option("--k", train_args.config.k, "k-fold count (1 disables)");
    train->add_option("--hidden", train_args.config.hidden_size, "LSTM hidden units");
    train->add_option("--cascade", train_args.cascade, "stage-2 input: predictive or hidden");
    train->add_option("--input-relu", train_args.config.input_relu,
                      "apply ReLU to stage-1 inputs");
    train->add_option("--paper-literal-split", train_args.config.paper_literal_split,
                      "overlapping test resample and global normalization");
    train->add_option("--cascade-train-raw", train_args.config.cascade_train_raw,
                      "train stage 2 on raw frames instead of predictions");
    train->add_option("--penalize-head", train_args.config.penalize_head,
                      "include head tensors in the penalty");
    train->add_option("--clip-norm", train_args.config.clip_norm,
                      "global gradient-norm clip (0 disables)");

    EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a trained model on a dataset CSV");
    eval->add_option("--config", eval_args.config_path,
                     "flat key=value config file; flags override it");
    eval->add_option("--model", eval_args.model, "model file path");
    eval->add_option("--data", eval_args.data, "dataset CSV path");
    eval->add_option("--out", eval_args.out, "report CSV path");

    GradcheckArgs grad_args;
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "compare BPTT gradients to finite differences");
    gradcheck->add_option("--seed", grad_args.config.seed, "toy net seed");
    gradcheck->add_flag("--corrupt", grad_args.config.corrupt, "sanity hook: corrupt one entry")
        ->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (synth->parsed()) {
            if (!synth_args.config_path.empty()) apply_synth_config(*synth, synth_args);
            return cmd_synth(synth_args);
        }
        if (train->parsed()) {
            if (!train_args.config_path.empty()) apply_train_config(*train, train_args);
            if (train_args.data.empty()) {
                std::cerr << "error: train needs --data (as a flag or a config-file key)\n";
                return kExitUsage;
            }
            return cmd_train(train_args);
        }
        if (eval->parsed()) {
            if (!eval_args.config_path.empty()) apply_eval_config(*eval, eval_args);
            if (eval_args.model.empty() || eval_args.data.empty()) {
                std::cerr << "error: eval needs --model and --data"
                             " (as flags or config-file keys)\n";
                return kExitUsage;
            }
            return cmd_eval(eval_args);
        }
        if (gradcheck->parsed()) return cmd_gradcheck(grad_args);
        std::cerr << "error: no command given\n";
        return kExitUsage;
    } catch (const terra::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const terra::IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kExitData;
    } catch (const terra::ContractError& e) {
        std::cerr << "contract error: " << e.what() << '\n';
        return kExitContract;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitContract;
    }
}
