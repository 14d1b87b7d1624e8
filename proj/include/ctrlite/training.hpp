#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ctrlite/data.hpp"
#include "ctrlite/model.hpp"

namespace ctrlite {

struct TrainConfig {
    double learning_rate = 0.001;
    double l2 = 3e-7;
    int batch_size = 2048;
    int epochs = 1;
    std::uint64_t seed = 1;
    double init_std = 0.01;
    bool parallel = false;  // data-parallel gradients; deterministic per thread count
    int threads = 0;        // 0 = hardware concurrency

    void validate() const;
};

// Per-parameter Adam accumulators, shape-congruent with the model.
struct AdamState {
    std::int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    ModelParams m;  // first moment
    ModelParams v;  // second moment
};

AdamState make_adam_state(const ModelParams& params);

// log(1 + exp(-y*logit)) with y = 2*label - 1, stabilized for large |logit|.
double loss(double logit, int label);
double dloss_dlogit(double logit, int label);

// Mean gradient of the batch loss plus l2*theta on regularized tensors,
// written into grad (same shape as params). Returns the mean data loss.
// Dropout masks are derived per (seed, iteration, sample position) so the
// result is independent of batch threading.
struct BackwardOptions {
    double l2 = 0.0;
    bool dropout_active = false;
    std::uint64_t seed = 0;
    std::int64_t iteration = 0;
    bool parallel = false;
    int threads = 0;
};

double backward(std::span<const Sample> batch, const ModelParams& params,
                const BackwardOptions& opts, ModelParams& grad);

// Standard bias-corrected Adam update.
void adam_step(ModelParams& params, const ModelParams& grad, AdamState& state,
               double learning_rate);

struct EpochMetrics {
    int epoch = 0;            // global epoch index
    double train_loss = 0;    // mean per-sample data loss over the epoch
    double test_logloss = -1; // -1 when no test set
    double test_auc = -1;
    double wall_seconds = 0;
};

// Passed to the per-iteration hook after each gradient step.
struct IterationContext {
    std::int64_t global_iter = 0;   // 0-based index of the step just completed
    int epoch = 0;
    std::int64_t iters_per_epoch = 0;
};

using IterationHook = std::function<void(const IterationContext&, ModelParams&)>;

// Shuffled mini-batch training. epoch_base/iter_base support bit-exact
// resume: shuffles key off (seed, global epoch), dropout off (seed, global
// iteration), so a resumed run replays the same stream.
struct TrainRun {
    const Dataset* train = nullptr;
    const Dataset* test = nullptr;  // optional, evaluated per epoch
    int epoch_base = 0;
    std::int64_t iter_base = 0;
};

std::vector<EpochMetrics> train_epochs(const TrainRun& run, ModelParams& params,
                                       AdamState& adam, const TrainConfig& config,
                                       const IterationHook& hook = {});

}  // namespace ctrlite
