#include "ctrlite/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ctrlite {

const char* to_string(EmbeddingPruneMode mode) {
    return mode == EmbeddingPruneMode::Global ? "global" : "per_field";
}

EmbeddingPruneMode embedding_prune_mode_from_string(const std::string& s) {
    if (s == "global") return EmbeddingPruneMode::Global;
    if (s == "per_field") return EmbeddingPruneMode::PerField;
    throw ConfigError("unknown embedding prune mode '" + s + "' (global|per_field)");
}

void PruneSchedule::validate() const {
    for (double t : {target_dnn, target_r, target_emb}) {
        if (!(t >= 0.0 && t < 1.0)) throw ConfigError("prune targets must be in [0, 1)");
    }
    if (!(damping > 0.0 && damping < 1.0)) throw ConfigError("prune damping must be in (0, 1)");
    if (!(damping_freq > 0.0)) throw ConfigError("prune damping_freq must be > 0");
    if (prune_every < 1) throw ConfigError("prune_every must be >= 1");
    if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be >= 0");
}

double sparse_rate_at(std::int64_t k, double target, double damping, double damping_freq) {
    if (k <= 0 || target <= 0.0) return 0.0;
    return target * (1.0 - std::pow(damping, static_cast<double>(k) / damping_freq));
}

namespace {

// Orders flat indices by (|value|, index); the first `count` get zeroed.
template <typename GetAbs>
std::vector<std::size_t> smallest_indices(std::size_t n, std::size_t count, GetAbs abs_at) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto cmp = [&](std::size_t a, std::size_t b) {
        const double fa = abs_at(a), fb = abs_at(b);
        if (fa != fb) return fa < fb;
        return a < b;
    };
    if (count < n) {
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count),
                         order.end(), cmp);
        order.resize(count);
    }
    return order;
}

}  // namespace

PruneMask prune_to_rate(std::span<double> tensor, double rate) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("prune rate must be in [0, 1]");
    const std::size_t n = tensor.size();
    PruneMask mask;
    mask.keep.assign(n, 1);
    const auto count = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n)));
    for (std::size_t i :
         smallest_indices(n, count, [&](std::size_t i) { return std::fabs(tensor[i]); })) {
        tensor[i] = 0.0;
        mask.keep[i] = 0;
    }
    mask.n_masked = count;
    mask.achieved_sparsity = n == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(n);
    return mask;
}

PruneMask prune_entries(std::span<double* const> entries, double rate) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("prune rate must be in [0, 1]");
    const std::size_t n = entries.size();
    PruneMask mask;
    mask.keep.assign(n, 1);
    const auto count = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n)));
    for (std::size_t i :
         smallest_indices(n, count, [&](std::size_t i) { return std::fabs(*entries[i]); })) {
        *entries[i] = 0.0;
        mask.keep[i] = 0;
    }
    mask.n_masked = count;
    mask.achieved_sparsity = n == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(n);
    return mask;
}

PruneMask prune_embeddings(ModelParams& params, double rate, EmbeddingPruneMode mode,
                           std::span<const std::pair<std::uint32_t, std::uint32_t>> field_ranges) {
    if (params.embeddings.empty()) throw ConfigError("model has no embedding table to prune");
    if (mode == EmbeddingPruneMode::Global) {
        return prune_to_rate(params.embeddings.data, rate);
    }
    if (field_ranges.empty()) {
        throw ConfigError("per_field embedding pruning needs field ranges");
    }
    const std::size_t k = params.embeddings.cols;
    PruneMask mask;
    mask.keep.assign(params.embeddings.size(), 1);
    for (const auto& [begin, end] : field_ranges) {
        if (end > params.embeddings.rows || begin > end) {
            throw ConfigError("field range exceeds embedding table");
        }
        const std::size_t lo = static_cast<std::size_t>(begin) * k;
        const std::size_t len = static_cast<std::size_t>(end - begin) * k;
        std::span<double> block(params.embeddings.data.data() + lo, len);
        const PruneMask sub = prune_to_rate(block, rate);
        std::copy(sub.keep.begin(), sub.keep.end(), mask.keep.begin() + static_cast<std::ptrdiff_t>(lo));
        mask.n_masked += sub.n_masked;
    }
    mask.achieved_sparsity = mask.keep.empty()
                                 ? 0.0
                                 : static_cast<double>(mask.n_masked) /
                                       static_cast<double>(mask.keep.size());
    return mask;
}

std::vector<double*> dnn_weight_entries(ModelParams& params) {
    std::vector<double*> out;
    std::size_t total = 0;
    for (const DenseLayer& l : params.mlp) total += l.w.size();
    out.reserve(total + params.out_w.size());
    for (DenseLayer& l : params.mlp) {
        for (double& v : l.w.data) out.push_back(&v);
    }
    for (double& v : params.out_w) out.push_back(&v);
    return out;
}

std::vector<double*> field_matrix_entries(ModelParams& params) {
    std::vector<double*> out;
    const std::size_t n = params.field_matrix.rows;
    out.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            out.push_back(&params.field_matrix.at(i, j));
        }
    }
    return out;
}

namespace {
ComponentSparsity count_nonzero(std::span<const double> v) {
    ComponentSparsity c;
    c.total = v.size();
    for (double x : v) c.nonzero += (x != 0.0);
    return c;
}
}  // namespace

SparsityReport sparsity_report(const ModelParams& params) {
    SparsityReport r;
    for (const DenseLayer& l : params.mlp) {
        const ComponentSparsity c = count_nonzero(l.w.data);
        r.dnn.total += c.total;
        r.dnn.nonzero += c.nonzero;
    }
    {
        const ComponentSparsity c = count_nonzero(params.out_w);
        r.dnn.total += c.total;
        r.dnn.nonzero += c.nonzero;
    }
    const std::size_t n = params.field_matrix.rows;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            r.field_matrix.total += 1;
            r.field_matrix.nonzero += (params.field_matrix.at(i, j) != 0.0);
        }
    }
    r.embeddings = count_nonzero(params.embeddings.data);
    return r;
}

void PruneDriver::on_iteration(const IterationContext& ctx, ModelParams& params) {
    if (!schedule_.enabled()) return;
    const std::int64_t warmup_iters =
        static_cast<std::int64_t>(schedule_.warmup_epochs) * ctx.iters_per_epoch;
    if (ctx.global_iter < warmup_iters) return;
    const std::int64_t k = ctx.global_iter - warmup_iters + 1;
    if (k % schedule_.prune_every != 0) {
        if (schedule_.freeze_masks) apply_freeze(params);
        return;
    }

    PruneEvent ev;
    ev.k = k;
    if (schedule_.target_dnn > 0 && !params.mlp.empty()) {
        const double rate =
            sparse_rate_at(k, schedule_.target_dnn, schedule_.damping, schedule_.damping_freq);
        const std::vector<double*> entries = dnn_weight_entries(params);
        const PruneMask m = prune_entries(entries, rate);
        ev.s_dnn = m.achieved_sparsity;
        if (schedule_.freeze_masks) frozen_dnn_ = m.keep;
    }
    if (schedule_.target_r > 0 && !params.field_matrix.empty()) {
        const double rate =
            sparse_rate_at(k, schedule_.target_r, schedule_.damping, schedule_.damping_freq);
        const std::vector<double*> entries = field_matrix_entries(params);
        const PruneMask m = prune_entries(entries, rate);
        ev.s_r = m.achieved_sparsity;
        if (schedule_.freeze_masks) frozen_r_ = m.keep;
    }
    if (schedule_.target_emb > 0 && !params.embeddings.empty()) {
        const double rate =
            sparse_rate_at(k, schedule_.target_emb, schedule_.damping, schedule_.damping_freq);
        const PruneMask m = prune_embeddings(params, rate, schedule_.emb_mode, field_ranges_);
        ev.s_emb = m.achieved_sparsity;
        if (schedule_.freeze_masks) frozen_emb_ = m.keep;
    }
    events_.push_back(ev);
}

void PruneDriver::apply_freeze(ModelParams& params) {
    if (!frozen_dnn_.empty()) {
        const std::vector<double*> entries = dnn_weight_entries(params);
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (!frozen_dnn_[i]) *entries[i] = 0.0;
        }
    }
    if (!frozen_r_.empty()) {
        const std::vector<double*> entries = field_matrix_entries(params);
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (!frozen_r_[i]) *entries[i] = 0.0;
        }
    }
    if (!frozen_emb_.empty()) {
        for (std::size_t i = 0; i < frozen_emb_.size(); ++i) {
            if (!frozen_emb_[i]) params.embeddings.data[i] = 0.0;
        }
    }
}

IterationHook PruneDriver::hook() {
    return [this](const IterationContext& ctx, ModelParams& params) {
        on_iteration(ctx, params);
    };
}

}  // namespace ctrlite
