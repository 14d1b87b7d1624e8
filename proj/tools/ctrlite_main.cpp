// ctrlite: train, prune, compile and benchmark CTR models.
//
// Subcommands: preprocess, train, compile, eval, bench. Every option can
// also come from a key=value config file (--config); explicit flags win.

#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "ctrlite/cli.hpp"

namespace {

using ctrlite::RunConfig;

struct Overrides {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> entries;  // command-line order
};

// Registers a flag that funnels its raw value into apply_config_entry, so
// the config file and the command line share one validation path.
void map_option(CLI::App* cmd, Overrides& ov, const std::string& flag, const std::string& key,
                const std::string& help) {
    cmd->add_option_function<std::string>(
           flag, [&ov, key](const std::string& v) { ov.entries.emplace_back(key, v); }, help)
        ->type_name("VALUE");
}

void add_common(CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--config", ov.config_path, "key=value config file")
        ->check(CLI::ExistingFile);
    cmd->add_option_function<std::vector<std::string>>(
           "--set",
           [&ov](const std::vector<std::string>& pairs) {
               for (const std::string& kv : pairs) {
                   const std::size_t eq = kv.find('=');
                   if (eq == std::string::npos) {
                       throw CLI::ValidationError("--set expects key=value, got '" + kv + "'");
                   }
                   ov.entries.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
               }
           },
           "override any config key (key=value, repeatable)")
        ->type_name("KEY=VALUE");
    map_option(cmd, ov, "--seed", "seed", "RNG seed");
}

RunConfig build_config(const Overrides& ov) {
    RunConfig cfg;
    if (!ov.config_path.empty()) {
        for (const auto& [k, v] : ctrlite::parse_config_file(ov.config_path)) {
            ctrlite::apply_config_entry(cfg, k, v);
        }
    }
    for (const auto& [k, v] : ov.entries) ctrlite::apply_config_entry(cfg, k, v);
    return cfg;
}

int validated_run(const Overrides& ov, const std::string& command,
                  const std::function<int(const RunConfig&)>& body) {
    const RunConfig cfg = build_config(ov);
    const std::vector<std::string> problems = ctrlite::validate_run_config(cfg, command);
    if (!problems.empty()) {
        for (const std::string& p : problems) std::cerr << "error: " << p << "\n";
        return ctrlite::kExitValidation;
    }
    return body(cfg);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CTR model training, pruning and sparse inference"};
    app.require_subcommand(1);
    int exit_code = ctrlite::kExitOk;

    Overrides pre_ov;
    CLI::App* pre = app.add_subcommand("preprocess", "build dictionary and encode a TSV file");
    add_common(pre, pre_ov);
    map_option(pre, pre_ov, "--input", "data.input", "raw TSV input (label + fields)");
    map_option(pre, pre_ov, "--numeric", "data.n_numeric", "leading numeric columns");
    map_option(pre, pre_ov, "--categorical", "data.n_categorical", "trailing categorical columns");
    map_option(pre, pre_ov, "--min-freq", "data.min_freq", "rare-token threshold");
    map_option(pre, pre_ov, "--floor-log", "data.floor_log", "floor the squared-log transform");
    map_option(pre, pre_ov, "--fraction", "data.train_fraction", "train split fraction");
    map_option(pre, pre_ov, "--dict", "paths.dictionary", "dictionary output path");
    map_option(pre, pre_ov, "--out-train", "paths.train_data", "encoded train output");
    map_option(pre, pre_ov, "--out-test", "paths.test_data", "encoded test output (enables split)");
    pre->callback([&] { exit_code = validated_run(pre_ov, "preprocess", ctrlite::run_preprocess); });

    Overrides tr_ov;
    CLI::App* tr = app.add_subcommand("train", "train a model, optionally pruning");
    add_common(tr, tr_ov);
    map_option(tr, tr_ov, "--train-data", "paths.train_data", "encoded training set");
    map_option(tr, tr_ov, "--test-data", "paths.test_data", "encoded test set (per-epoch metrics)");
    map_option(tr, tr_ov, "--checkpoint", "paths.checkpoint", "checkpoint output path");
    map_option(tr, tr_ov, "--csv", "paths.csv", "metrics CSV output");
    map_option(tr, tr_ov, "--resume", "paths.resume", "checkpoint to resume from");
    map_option(tr, tr_ov, "--model", "model.kind", "lr | fm | fwfm | deepfwfm");
    map_option(tr, tr_ov, "--embed-dim", "model.embed_dim", "embedding dimension");
    map_option(tr, tr_ov, "--mlp", "model.mlp_widths", "hidden widths, e.g. 400,400,400");
    map_option(tr, tr_ov, "--dropout", "model.dropout", "hidden-layer dropout rate");
    map_option(tr, tr_ov, "--epochs", "train.epochs", "epochs to run");
    map_option(tr, tr_ov, "--lr", "train.learning_rate", "learning rate");
    map_option(tr, tr_ov, "--l2", "train.l2", "L2 strength on weights");
    map_option(tr, tr_ov, "--batch", "train.batch_size", "mini-batch size");
    map_option(tr, tr_ov, "--threads", "train.threads", "gradient worker threads");
    map_option(tr, tr_ov, "--parallel", "train.parallel", "enable threaded gradients");
    map_option(tr, tr_ov, "--prune-dnn", "prune.target_dnn", "target DNN sparsity");
    map_option(tr, tr_ov, "--prune-r", "prune.target_r", "target field-matrix sparsity");
    map_option(tr, tr_ov, "--prune-emb", "prune.target_emb", "target embedding sparsity");
    map_option(tr, tr_ov, "--prune-warmup", "prune.warmup_epochs", "warm-up epochs");
    map_option(tr, tr_ov, "--prune-every", "prune.every", "iterations between prune events");
    map_option(tr, tr_ov, "--emb-mode", "prune.emb_mode", "global | per_field");
    map_option(tr, tr_ov, "--freeze-masks", "prune.freeze_masks", "keep pruned weights at zero");
    tr->callback([&] { exit_code = validated_run(tr_ov, "train", ctrlite::run_train); });

    Overrides co_ov;
    CLI::App* co = app.add_subcommand("compile", "compile a checkpoint to sparse serving form");
    add_common(co, co_ov);
    map_option(co, co_ov, "--checkpoint", "paths.checkpoint", "dense checkpoint input");
    map_option(co, co_ov, "--output", "paths.output", "compiled checkpoint output");
    map_option(co, co_ov, "--card", "paths.card", "model card output (default <output>.card)");
    co->callback([&] { exit_code = validated_run(co_ov, "compile", ctrlite::run_compile); });

    Overrides ev_ov;
    CLI::App* ev = app.add_subcommand("eval", "score a dataset and report LogLoss/AUC");
    add_common(ev, ev_ov);
    map_option(ev, ev_ov, "--checkpoint", "paths.checkpoint", "checkpoint (dense or compiled)");
    map_option(ev, ev_ov, "--data", "paths.test_data", "encoded dataset to score");
    map_option(ev, ev_ov, "--csv", "paths.csv", "eval CSV output");
    ev->callback([&] { exit_code = validated_run(ev_ov, "eval", ctrlite::run_eval); });

    Overrides be_ov;
    ctrlite::BenchArgs bench_args;
    CLI::App* be = app.add_subcommand("bench", "measure single-sample latency per checkpoint");
    add_common(be, be_ov);
    be->add_option("checkpoints", bench_args.checkpoints, "checkpoints; first is the baseline")
        ->required();
    be->add_option("--data", bench_args.data_path, "encoded dataset to draw samples from")
        ->required();
    be->add_option("--csv", bench_args.csv_path, "bench CSV output");
    be->add_option("--reps", bench_args.repetitions, "timed passes over the sample list");
    be->add_option("--warmup", bench_args.warmup, "untimed warm-up passes");
    be->add_option("--max-samples", bench_args.max_samples, "samples cycled during timing");
    be->add_option("--qps-threads", bench_args.qps_threads, "threads for throughput mode");
    be->callback([&] {
        exit_code = validated_run(be_ov, "bench", [&](const RunConfig& cfg) {
            return ctrlite::run_bench(cfg, bench_args);
        });
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) != 0 ? ctrlite::kExitValidation : ctrlite::kExitOk;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ctrlite::kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ctrlite::kExitRuntime;
    }
    return exit_code;
}
