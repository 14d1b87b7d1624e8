#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ctrlite/data.hpp"
#include "ctrlite/model.hpp"
#include "ctrlite/pruning.hpp"
#include "ctrlite/training.hpp"

namespace ctrlite {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitValidation = 2;

// Flat key=value view of the run configuration. Precedence: command-line
// flags > config file > defaults. Keys use section prefixes, e.g.
// prune.target_dnn=0.99.
struct RunConfig {
    // data
    std::string data_input;
    int n_numeric = 13;
    int n_categorical = 26;
    std::uint64_t min_freq = 8;
    bool floor_log = false;
    double train_fraction = 0.9;

    // model; n_fields/n_features are filled in from the encoded dataset
    ModelConfig model{ModelKind::DeepFwFM, 0, 10, 0, {400, 400, 400}, 0.5};

    // training
    TrainConfig train;

    // pruning
    PruneSchedule prune;

    // paths
    std::string dictionary_path;
    std::string train_data_path;
    std::string test_data_path;
    std::string checkpoint_path;
    std::string output_path;   // compiled checkpoint, eval csv, bench csv
    std::string csv_path;
    std::string card_path;
    std::string resume_path;

    std::uint64_t seed = 1;

    // Echoed into every output artifact.
    std::vector<std::pair<std::string, std::string>> to_key_values() const;
};

// Parses key=value lines ('#' comments, blank lines allowed). Unknown keys
// are validation errors. Returns the raw pairs for override layering.
std::map<std::string, std::string> parse_config_file(const std::string& path);

// Applies one key=value pair; throws ConfigError on unknown key/bad value.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

// Collects every validation problem instead of stopping at the first.
std::vector<std::string> validate_run_config(const RunConfig& cfg, const std::string& command);

int run_preprocess(const RunConfig& cfg);
int run_train(const RunConfig& cfg);
int run_compile(const RunConfig& cfg);
int run_eval(const RunConfig& cfg);

struct BenchArgs {
    std::vector<std::string> checkpoints;
    std::string data_path;
    std::string csv_path;
    int repetitions = 50;
    int warmup = 5;
    std::size_t max_samples = 200;  // samples cycled during timing
    int qps_threads = 0;            // optional throughput mode
};

int run_bench(const RunConfig& cfg, const BenchArgs& args);

}  // namespace ctrlite
