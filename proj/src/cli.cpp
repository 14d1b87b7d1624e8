#include "ctrlite/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ctrlite/bench.hpp"
#include "ctrlite/checkpoint.hpp"
#include "ctrlite/metrics.hpp"
#include "ctrlite/sparse.hpp"

namespace ctrlite {

namespace {

std::string join_widths(const std::vector<int>& widths) {
    std::string out;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(widths[i]);
    }
    return out;
}

std::vector<int> parse_widths(const std::string& s) {
    std::vector<int> out;
    if (s.empty()) return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t pos = 0;
        const int w = std::stoi(item, &pos);
        if (pos != item.size()) throw ConfigError("bad mlp width '" + item + "'");
        out.push_back(w);
    }
    return out;
}

long long parse_ll(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long long out;
    try {
        out = std::stoll(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError(key + ": not an integer: '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError(key + ": not an integer: '" + v + "'");
    return out;
}

double parse_d(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double out;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError(key + ": not a number: '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError(key + ": not a number: '" + v + "'");
    return out;
}

bool parse_b(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError(key + ": not a boolean: '" + v + "'");
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> RunConfig::to_key_values() const {
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("data.input", data_input);
    kv.emplace_back("data.n_numeric", std::to_string(n_numeric));
    kv.emplace_back("data.n_categorical", std::to_string(n_categorical));
    kv.emplace_back("data.min_freq", std::to_string(min_freq));
    kv.emplace_back("data.floor_log", floor_log ? "1" : "0");
    kv.emplace_back("data.train_fraction", fmt(train_fraction));
    kv.emplace_back("model.kind", to_string(model.kind));
    kv.emplace_back("model.embed_dim", std::to_string(model.embed_dim));
    kv.emplace_back("model.mlp_widths", join_widths(model.mlp_widths));
    kv.emplace_back("model.dropout", fmt(model.dropout_rate));
    kv.emplace_back("train.learning_rate", fmt(train.learning_rate));
    kv.emplace_back("train.l2", fmt(train.l2));
    kv.emplace_back("train.batch_size", std::to_string(train.batch_size));
    kv.emplace_back("train.epochs", std::to_string(train.epochs));
    kv.emplace_back("train.init_std", fmt(train.init_std));
    kv.emplace_back("train.parallel", train.parallel ? "1" : "0");
    kv.emplace_back("train.threads", std::to_string(train.threads));
    kv.emplace_back("prune.target_dnn", fmt(prune.target_dnn));
    kv.emplace_back("prune.target_r", fmt(prune.target_r));
    kv.emplace_back("prune.target_emb", fmt(prune.target_emb));
    kv.emplace_back("prune.damping", fmt(prune.damping));
    kv.emplace_back("prune.damping_freq", fmt(prune.damping_freq));
    kv.emplace_back("prune.every", std::to_string(prune.prune_every));
    kv.emplace_back("prune.warmup_epochs", std::to_string(prune.warmup_epochs));
    kv.emplace_back("prune.emb_mode", to_string(prune.emb_mode));
    kv.emplace_back("prune.freeze_masks", prune.freeze_masks ? "1" : "0");
    kv.emplace_back("paths.dictionary", dictionary_path);
    kv.emplace_back("paths.train_data", train_data_path);
    kv.emplace_back("paths.test_data", test_data_path);
    kv.emplace_back("paths.checkpoint", checkpoint_path);
    kv.emplace_back("paths.output", output_path);
    kv.emplace_back("paths.csv", csv_path);
    kv.emplace_back("paths.card", card_path);
    kv.emplace_back("paths.resume", resume_path);
    kv.emplace_back("seed", std::to_string(seed));
    return kv;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos || line[start] == '#') continue;
        const std::size_t eq = line.find('=', start);
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key=value");
        }
        std::string key = line.substr(start, eq - start);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        std::string val = line.substr(eq + 1);
        const std::size_t vstart = val.find_first_not_of(" \t");
        val = vstart == std::string::npos ? "" : val.substr(vstart);
        while (!val.empty() && (val.back() == ' ' || val.back() == '\t')) val.pop_back();
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        }
        out[key] = val;  // later lines win
    }
    return out;
}

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "data.input") cfg.data_input = value;
    else if (key == "data.n_numeric") cfg.n_numeric = static_cast<int>(parse_ll(key, value));
    else if (key == "data.n_categorical") cfg.n_categorical = static_cast<int>(parse_ll(key, value));
    else if (key == "data.min_freq") cfg.min_freq = static_cast<std::uint64_t>(parse_ll(key, value));
    else if (key == "data.floor_log") cfg.floor_log = parse_b(key, value);
    else if (key == "data.train_fraction") cfg.train_fraction = parse_d(key, value);
    else if (key == "model.kind") cfg.model.kind = model_kind_from_string(value);
    else if (key == "model.embed_dim") cfg.model.embed_dim = static_cast<int>(parse_ll(key, value));
    else if (key == "model.mlp_widths") cfg.model.mlp_widths = parse_widths(value);
    else if (key == "model.dropout") cfg.model.dropout_rate = parse_d(key, value);
    else if (key == "train.learning_rate") cfg.train.learning_rate = parse_d(key, value);
    else if (key == "train.l2") cfg.train.l2 = parse_d(key, value);
    else if (key == "train.batch_size") cfg.train.batch_size = static_cast<int>(parse_ll(key, value));
    else if (key == "train.epochs") cfg.train.epochs = static_cast<int>(parse_ll(key, value));
    else if (key == "train.init_std") cfg.train.init_std = parse_d(key, value);
    else if (key == "train.parallel") cfg.train.parallel = parse_b(key, value);
    else if (key == "train.threads") cfg.train.threads = static_cast<int>(parse_ll(key, value));
    else if (key == "prune.target_dnn") cfg.prune.target_dnn = parse_d(key, value);
    else if (key == "prune.target_r") cfg.prune.target_r = parse_d(key, value);
    else if (key == "prune.target_emb") cfg.prune.target_emb = parse_d(key, value);
    else if (key == "prune.damping") cfg.prune.damping = parse_d(key, value);
    else if (key == "prune.damping_freq") cfg.prune.damping_freq = parse_d(key, value);
    else if (key == "prune.every") cfg.prune.prune_every = parse_ll(key, value);
    else if (key == "prune.warmup_epochs") cfg.prune.warmup_epochs = static_cast<int>(parse_ll(key, value));
    else if (key == "prune.emb_mode") cfg.prune.emb_mode = embedding_prune_mode_from_string(value);
    else if (key == "prune.freeze_masks") cfg.prune.freeze_masks = parse_b(key, value);
    else if (key == "paths.dictionary") cfg.dictionary_path = value;
    else if (key == "paths.train_data") cfg.train_data_path = value;
    else if (key == "paths.test_data") cfg.test_data_path = value;
    else if (key == "paths.checkpoint") cfg.checkpoint_path = value;
    else if (key == "paths.output") cfg.output_path = value;
    else if (key == "paths.csv") cfg.csv_path = value;
    else if (key == "paths.card") cfg.card_path = value;
    else if (key == "paths.resume") cfg.resume_path = value;
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_ll(key, value));
    else throw ConfigError("unknown config key '" + key + "'");
}

namespace {

// The model dimensions only deep models use are cleared so a shared config
// file can drive several kinds without tripping shape validation.
ModelConfig effective_model_config(const RunConfig& cfg) {
    ModelConfig m = cfg.model;
    if (m.kind == ModelKind::LR) m.embed_dim = 0;
    if (m.kind != ModelKind::DeepFwFM) m.mlp_widths.clear();
    return m;
}

void collect(std::vector<std::string>& problems, const std::function<void()>& check) {
    try {
        check();
    } catch (const std::exception& e) {
        problems.emplace_back(e.what());
    }
}

}  // namespace

std::vector<std::string> validate_run_config(const RunConfig& cfg, const std::string& command) {
    std::vector<std::string> problems;
    auto require_path = [&](const std::string& value, const char* what) {
        if (value.empty()) problems.push_back(std::string(what) + " is required");
    };

    if (command == "preprocess") {
        require_path(cfg.data_input, "data.input");
        require_path(cfg.dictionary_path, "paths.dictionary");
        require_path(cfg.train_data_path, "paths.train_data");
        if (cfg.n_numeric < 0) problems.push_back("data.n_numeric must be >= 0");
        if (cfg.n_categorical < 0) problems.push_back("data.n_categorical must be >= 0");
        if (cfg.n_numeric + cfg.n_categorical < 1) {
            problems.push_back("need at least one field");
        }
        if (cfg.min_freq < 1) problems.push_back("data.min_freq must be >= 1");
        if (!cfg.test_data_path.empty() &&
            !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
            problems.push_back("data.train_fraction must be in (0, 1) when splitting");
        }
    } else if (command == "train") {
        require_path(cfg.train_data_path, "paths.train_data");
        require_path(cfg.checkpoint_path, "paths.checkpoint");
        collect(problems, [&] {
            ModelConfig m = effective_model_config(cfg);
            m.n_fields = 1;      // placeholders; real values come from the dataset
            m.n_features = 1;
            m.validate();
        });
        collect(problems, [&] { cfg.train.validate(); });
        collect(problems, [&] { cfg.prune.validate(); });
        if (cfg.prune.enabled() && cfg.prune.target_emb > 0 && cfg.model.kind == ModelKind::LR) {
            problems.push_back("prune.target_emb set but lr has no embeddings");
        }
    } else if (command == "compile") {
        require_path(cfg.checkpoint_path, "paths.checkpoint");
        require_path(cfg.output_path, "paths.output");
    } else if (command == "eval") {
        require_path(cfg.checkpoint_path, "paths.checkpoint");
        require_path(cfg.test_data_path, "paths.test_data");
    } else if (command != "bench") {
        problems.push_back("unknown command '" + command + "'");
    }
    return problems;
}

namespace {

void echo_config(std::ostream& out, const RunConfig& cfg) {
    for (const auto& [k, v] : cfg.to_key_values()) {
        out << "# " << k << "=" << v << "\n";
    }
}

Metadata config_metadata(const RunConfig& cfg) {
    Metadata meta;
    for (const auto& [k, v] : cfg.to_key_values()) meta["config." + k] = v;
    return meta;
}

std::uint64_t metadata_u64(const Metadata& meta, const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) return 0;
    return std::stoull(it->second);
}

std::ofstream open_out(const std::string& path, const char* what) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(std::string("cannot write ") + what + ": " + path);
    return out;
}

}  // namespace

int run_preprocess(const RunConfig& cfg) {
    const FieldSchema schema =
        FieldSchema::numeric_then_categorical(cfg.n_numeric, cfg.n_categorical);

    DictionaryBuilder builder(schema);
    std::size_t rows = 0;
    for_each_tsv_row(cfg.data_input, schema,
                     [&](const std::vector<std::string>& cols, std::size_t ln) {
                         builder.count_row(cols, ln);
                         ++rows;
                     });
    if (rows == 0) throw InputError("input has no rows: " + cfg.data_input);

    const FeatureDictionary dict = builder.finish(cfg.min_freq);
    const Dataset all = encode_file(cfg.data_input, dict, cfg.floor_log);

    dict.save(cfg.dictionary_path);
    if (!cfg.test_data_path.empty()) {
        auto [train, test] = split_dataset(all, cfg.train_fraction, cfg.seed);
        train.save(cfg.train_data_path);
        test.save(cfg.test_data_path);
        std::cout << "train_samples=" << train.samples.size()
                  << " test_samples=" << test.samples.size() << "\n";
    } else {
        all.save(cfg.train_data_path);
        std::cout << "samples=" << all.samples.size() << "\n";
    }

    std::cout << "fields=" << schema.n_fields << " features=" << dict.total_features
              << " dict_hash=" << dict.hash() << "\n";
    for (int f = 0; f < schema.n_fields; ++f) {
        const auto [begin, end] = dict.field_range[static_cast<std::size_t>(f)];
        std::cout << "field " << f << (schema.is_numeric(f) ? " numeric" : " categorical")
                  << " cardinality=" << (end - begin) << "\n";
    }
    return kExitOk;
}

int run_train(const RunConfig& cfg) {
    const Dataset train_ds = Dataset::load(cfg.train_data_path);
    Dataset test_ds;
    if (!cfg.test_data_path.empty()) {
        test_ds = Dataset::load(cfg.test_data_path);
        if (test_ds.dict_hash != train_ds.dict_hash) {
            throw InputError("train and test sets use different dictionaries");
        }
    }

    ModelConfig mc = effective_model_config(cfg);
    mc.n_fields = train_ds.n_fields;
    mc.n_features = train_ds.n_features;
    mc.validate();

    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;

    ModelParams params;
    AdamState adam;
    TrainRun run;
    run.train = &train_ds;
    run.test = cfg.test_data_path.empty() ? nullptr : &test_ds;

    if (!cfg.resume_path.empty()) {
        LoadedCheckpoint ckpt = load_checkpoint(cfg.resume_path);
        if (ckpt.sparse) throw InputError("cannot resume from a compiled checkpoint");
        if (!ckpt.adam) throw InputError("resume checkpoint has no optimizer state");
        const std::uint64_t h = metadata_u64(ckpt.metadata, "dict_hash");
        if (h != 0 && h != train_ds.dict_hash) {
            throw InputError("resume checkpoint was trained with a different dictionary");
        }
        params = std::move(ckpt.params);
        adam = std::move(*ckpt.adam);
        if (params.config.kind != mc.kind || params.config.n_features != mc.n_features ||
            params.config.n_fields != mc.n_fields) {
            throw InputError("resume checkpoint does not match the requested model");
        }
        run.epoch_base = static_cast<int>(metadata_u64(ckpt.metadata, "epochs_done"));
        run.iter_base = static_cast<std::int64_t>(metadata_u64(ckpt.metadata, "iterations_done"));
    } else {
        params = init_model(mc, cfg.seed, cfg.train.init_std);
        adam = make_adam_state(params);
    }

    PruneDriver driver(cfg.prune, train_ds.field_range);
    const IterationHook hook = cfg.prune.enabled() ? driver.hook() : IterationHook{};

    const std::vector<EpochMetrics> history = train_epochs(run, params, adam, tc, hook);

    for (const EpochMetrics& em : history) {
        std::cout << "epoch=" << em.epoch << " train_loss=" << em.train_loss;
        if (em.test_logloss >= 0) {
            std::cout << " test_logloss=" << em.test_logloss << " test_auc=" << em.test_auc;
        }
        std::cout << " wall_seconds=" << em.wall_seconds << "\n";
    }
    const SparsityReport sr = sparsity_report(params);
    std::cout << "sparsity dnn=" << sr.dnn.sparsity() << " r=" << sr.field_matrix.sparsity()
              << " emb=" << sr.embeddings.sparsity() << "\n";

    const std::size_t n = train_ds.samples.size();
    const auto batch = static_cast<std::size_t>(tc.batch_size);
    const std::uint64_t iters_done =
        static_cast<std::uint64_t>(run.iter_base) +
        static_cast<std::uint64_t>(tc.epochs) * ((n + batch - 1) / batch);

    Metadata meta = config_metadata(cfg);
    meta["dict_hash"] = std::to_string(train_ds.dict_hash);
    meta["epochs_done"] = std::to_string(run.epoch_base + tc.epochs);
    meta["iterations_done"] = std::to_string(iters_done);
    save_checkpoint(params, &adam, cfg.checkpoint_path, meta);

    if (!cfg.csv_path.empty()) {
        std::ofstream csv = open_out(cfg.csv_path, "metrics csv");
        echo_config(csv, cfg);
        csv << "kind,epoch,iter,train_loss,test_logloss,test_auc,wall_seconds,s_dnn,s_r,s_emb\n";
        for (const EpochMetrics& em : history) {
            csv << "epoch," << em.epoch << ",," << fmt(em.train_loss) << ","
                << (em.test_logloss >= 0 ? fmt(em.test_logloss) : "") << ","
                << (em.test_auc >= 0 ? fmt(em.test_auc) : "") << "," << fmt(em.wall_seconds)
                << ",,,\n";
        }
        for (const PruneEvent& ev : driver.events()) {
            csv << "prune,," << ev.k << ",,,,," << fmt(ev.s_dnn) << "," << fmt(ev.s_r) << ","
                << fmt(ev.s_emb) << "\n";
        }
        if (!csv) throw IoError("failed writing metrics csv: " + cfg.csv_path);
    }
    return kExitOk;
}

int run_compile(const RunConfig& cfg) {
    LoadedCheckpoint ckpt = load_checkpoint(cfg.checkpoint_path);
    if (ckpt.sparse) throw InputError("checkpoint is already compiled: " + cfg.checkpoint_path);
    const std::uint64_t dict_hash = metadata_u64(ckpt.metadata, "dict_hash");

    const SparseModel model = compile_sparse(ckpt.params, dict_hash);

    Metadata meta;
    for (const auto& [k, v] : ckpt.metadata) {
        if (k.rfind("config.", 0) == 0 || k == "dict_hash") meta[k] = v;
    }
    meta["source_checkpoint"] = cfg.checkpoint_path;
    save_sparse_checkpoint(model, cfg.output_path, meta);

    const ParamCounts dense_counts = count_parameters(ckpt.params.config);
    const ParamCounts nnz_counts = compiled_param_counts(model);
    const FlopsEstimate dense_flops = flops_estimate(ckpt.params.config);
    const double sparse_flops = compiled_flops(model);
    const SparsityReport& sr = model.source_sparsity;

    std::ostringstream card;
    card << "kind=" << to_string(model.config.kind) << "\n"
         << "n_fields=" << model.config.n_fields << "\n"
         << "embed_dim=" << model.config.embed_dim << "\n"
         << "n_features=" << model.config.n_features << "\n"
         << "mlp_widths=" << join_widths(model.config.mlp_widths) << "\n"
         << "dict_hash=" << dict_hash << "\n"
         << "params_dense=" << dense_counts.total() << "\n"
         << "params_nonzero=" << nnz_counts.total() << "\n"
         << "pairs_kept=" << model.pairs.size() << "\n"
         << "sparsity_dnn=" << fmt(sr.dnn.sparsity()) << "\n"
         << "sparsity_r=" << fmt(sr.field_matrix.sparsity()) << "\n"
         << "sparsity_emb=" << fmt(sr.embeddings.sparsity()) << "\n"
         << "flops_dense=" << fmt(dense_flops.total()) << "\n"
         << "flops_sparse=" << fmt(sparse_flops) << "\n";

    const std::string card_path =
        cfg.card_path.empty() ? cfg.output_path + ".card" : cfg.card_path;
    {
        std::ofstream out = open_out(card_path, "model card");
        out << card.str();
        if (!out) throw IoError("failed writing model card: " + card_path);
    }
    std::cout << card.str();
    return kExitOk;
}

namespace {

// Either flavor behind one scoring closure; keeps eval/bench code shared.
std::function<double(const Sample&)> make_scorer(const LoadedCheckpoint& ckpt) {
    if (ckpt.sparse) {
        return [scorer = SparseScorer(ckpt.model)](const Sample& s) mutable {
            return scorer(s);
        };
    }
    return [scorer = DenseScorer(ckpt.params)](const Sample& s) mutable { return scorer(s); };
}

std::uint64_t checkpoint_dict_hash(const LoadedCheckpoint& ckpt) {
    return ckpt.sparse ? ckpt.model.dict_hash : metadata_u64(ckpt.metadata, "dict_hash");
}

void check_dict_hash(const LoadedCheckpoint& ckpt, const Dataset& ds, const std::string& what) {
    const std::uint64_t h = checkpoint_dict_hash(ckpt);
    if (h != 0 && ds.dict_hash != 0 && h != ds.dict_hash) {
        throw InputError(what + ": checkpoint dictionary hash " + std::to_string(h) +
                         " does not match dataset hash " + std::to_string(ds.dict_hash) +
                         "; re-encode the data with the matching dictionary");
    }
}

}  // namespace

int run_eval(const RunConfig& cfg) {
    const LoadedCheckpoint ckpt = load_checkpoint(cfg.checkpoint_path);
    const Dataset ds = Dataset::load(cfg.test_data_path);
    check_dict_hash(ckpt, ds, "eval");

    const EvalResult r = evaluate(make_scorer(ckpt), ds.samples);
    std::cout << "logloss=" << fmt(r.logloss) << " auc=" << fmt(r.auc)
              << " n_samples=" << r.n_samples << "\n";

    if (!cfg.csv_path.empty()) {
        std::ofstream csv = open_out(cfg.csv_path, "eval csv");
        echo_config(csv, cfg);
        csv << "checkpoint,logloss,auc,n_samples\n";
        csv << cfg.checkpoint_path << "," << fmt(r.logloss) << "," << fmt(r.auc) << ","
            << r.n_samples << "\n";
        if (!csv) throw IoError("failed writing eval csv: " + cfg.csv_path);
    }
    return kExitOk;
}

int run_bench(const RunConfig& cfg, const BenchArgs& args) {
    if (args.checkpoints.empty()) throw InputError("bench: need at least one checkpoint");
    if (args.data_path.empty()) throw InputError("bench: need an encoded dataset");
    if (args.repetitions < 1) throw InputError("bench: repetitions must be >= 1");
    if (args.repetitions < 30) {
        std::cerr << "warning: repetitions < 30 gives noisy latency estimates\n";
    }
    if (args.max_samples < 1) throw InputError("bench: max_samples must be >= 1");

    const Dataset ds = Dataset::load(args.data_path);
    if (ds.samples.empty()) throw InputError("bench: dataset is empty");
    const std::size_t n = std::min(args.max_samples, ds.samples.size());
    const std::span<const Sample> samples(ds.samples.data(), n);

    pin_current_thread();

    struct Row {
        LatencyReport rep;
        SparsityReport sparsity;
        std::uint64_t params_nnz = 0;
        double flops = 0;
        double qps = 0;
    };
    std::vector<Row> rows;
    for (std::size_t i = 0; i < args.checkpoints.size(); ++i) {
        const LoadedCheckpoint ckpt = load_checkpoint(args.checkpoints[i]);
        check_dict_hash(ckpt, ds, "bench");
        Row row;
        if (ckpt.sparse) {
            row.sparsity = ckpt.model.source_sparsity;
            row.params_nnz = compiled_param_counts(ckpt.model).total();
            row.flops = compiled_flops(ckpt.model);
        } else {
            row.sparsity = sparsity_report(ckpt.params);
            row.params_nnz = count_parameters(ckpt.params).total();
            row.flops = flops_estimate(ckpt.params.config).total();
        }
        auto scorer = make_scorer(ckpt);
        row.rep.name = args.checkpoints[i];
        row.rep.repetitions = args.repetitions;
        row.rep.warmup = args.warmup;
        row.rep.stats = bench_latency(scorer, samples, args.repetitions, args.warmup);
        row.rep.speedup = rows.empty()
                              ? 1.0
                              : rows.front().rep.stats.median_ms / row.rep.stats.median_ms;
        if (args.qps_threads > 0) {
            row.qps = bench_throughput_qps([&]() { return make_scorer(ckpt); }, samples,
                                           args.qps_threads, 1.0);
        }
        rows.push_back(std::move(row));
    }

    std::ostringstream csv;
    echo_config(csv, cfg);
    csv << "model_name,sparsity_dnn,sparsity_r,sparsity_emb,mean_ms,median_ms,p99_ms,"
           "speedup,params_nnz,flops_est,n_timed,repetitions,warmup,qps\n";
    for (const Row& row : rows) {
        csv << row.rep.name << "," << fmt(row.sparsity.dnn.sparsity()) << ","
            << fmt(row.sparsity.field_matrix.sparsity()) << ","
            << fmt(row.sparsity.embeddings.sparsity()) << "," << fmt(row.rep.stats.mean_ms)
            << "," << fmt(row.rep.stats.median_ms) << "," << fmt(row.rep.stats.p99_ms) << ","
            << fmt(row.rep.speedup) << "," << row.params_nnz << "," << fmt(row.flops) << ","
            << row.rep.stats.n_timed << "," << row.rep.repetitions << "," << row.rep.warmup
            << "," << fmt(row.qps) << "\n";
    }
    if (!args.csv_path.empty()) {
        std::ofstream out = open_out(args.csv_path, "bench csv");
        out << csv.str();
        if (!out) throw IoError("failed writing bench csv: " + args.csv_path);
    }
    std::cout << csv.str();
    return kExitOk;
}

}  // namespace ctrlite
