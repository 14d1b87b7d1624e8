#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctrlite/model.hpp"
#include "ctrlite/training.hpp"

namespace ctrlite {

enum class EmbeddingPruneMode { Global, PerField };

const char* to_string(EmbeddingPruneMode mode);
EmbeddingPruneMode embedding_prune_mode_from_string(const std::string& s);

// Adaptive-rate magnitude pruning schedule. Targets of 0 disable a
// component. Defaults are the standard experimental settings.
struct PruneSchedule {
    double target_dnn = 0.0;   // S_dnn
    double target_r = 0.0;     // S_R
    double target_emb = 0.0;   // S_emb
    double damping = 0.99;     // D
    double damping_freq = 100; // f
    std::int64_t prune_every = 10;
    int warmup_epochs = 2;
    EmbeddingPruneMode emb_mode = EmbeddingPruneMode::Global;
    bool freeze_masks = false;  // keep pruned weights at zero between events

    bool enabled() const { return target_dnn > 0 || target_r > 0 || target_emb > 0; }
    void validate() const;
};

// s(k) = S * (1 - D^(k/f)); non-decreasing in k, bounded by S.
double sparse_rate_at(std::int64_t k, double target, double damping, double damping_freq);

struct PruneMask {
    std::vector<std::uint8_t> keep;  // 1 = kept
    std::size_t n_masked = 0;
    double achieved_sparsity = 0.0;
};

// Zeroes exactly floor(rate * N) smallest-magnitude entries; ties break to
// the lowest flat index. Stateless: previously-zeroed entries compete by
// their current magnitude.
PruneMask prune_to_rate(std::span<double> tensor, double rate);

// Same selection over a scattered component (e.g. all DNN weight matrices
// ranked together); flat index = position in the pointer list.
PruneMask prune_entries(std::span<double* const> entries, double rate);

// Magnitude pruning of the embedding table: Global ranks all m*k entries,
// PerField ranks each field's row block independently (field_ranges gives
// the [begin, end) feature rows per field and is required for PerField).
PruneMask prune_embeddings(ModelParams& params, double rate, EmbeddingPruneMode mode,
                           std::span<const std::pair<std::uint32_t, std::uint32_t>> field_ranges = {});

// Pointer lists defining each component's prunable entries.
std::vector<double*> dnn_weight_entries(ModelParams& params);
std::vector<double*> field_matrix_entries(ModelParams& params);  // strict upper triangle

struct ComponentSparsity {
    std::uint64_t total = 0;
    std::uint64_t nonzero = 0;
    double sparsity() const {
        return total == 0 ? 0.0 : 1.0 - static_cast<double>(nonzero) / static_cast<double>(total);
    }
};

struct SparsityReport {
    ComponentSparsity dnn;
    ComponentSparsity field_matrix;
    ComponentSparsity embeddings;
};

SparsityReport sparsity_report(const ModelParams& params);

struct PruneEvent {
    std::int64_t k = 0;        // post-warm-up iteration counter
    double s_dnn = 0, s_r = 0, s_emb = 0;  // achieved sparsity after the event
};

// Per-iteration driver: no-op during warm-up, then prunes every prune_every
// post-warm-up iterations at the scheduled rate. Masked weights stay
// trainable unless freeze_masks is set.
class PruneDriver {
public:
    explicit PruneDriver(const PruneSchedule& schedule,
                         std::vector<std::pair<std::uint32_t, std::uint32_t>> field_ranges = {})
        : schedule_(schedule), field_ranges_(std::move(field_ranges)) {
        schedule_.validate();
    }

    void on_iteration(const IterationContext& ctx, ModelParams& params);
    IterationHook hook();

    const std::vector<PruneEvent>& events() const { return events_; }

private:
    void apply_freeze(ModelParams& params);

    PruneSchedule schedule_;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> field_ranges_;
    std::vector<PruneEvent> events_;
    // freeze-mode masks, keyed by component entry order
    std::vector<std::uint8_t> frozen_dnn_, frozen_r_, frozen_emb_;
};

}  // namespace ctrlite
