#include "ctrlite/training.hpp"

#include <chrono>
#include <cmath>
#include <thread>

#include "ctrlite/metrics.hpp"

namespace ctrlite {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (l2 < 0.0) throw ConfigError("l2 must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(init_std > 0.0)) throw ConfigError("init_std must be > 0");
    if (threads < 0) throw ConfigError("threads must be >= 0");
}

AdamState make_adam_state(const ModelParams& params) {
    AdamState s;
    s.m = zeros_like(params);
    s.v = zeros_like(params);
    return s;
}

double loss(double logit, int label) {
    const double y = label ? 1.0 : -1.0;
    const double a = -y * logit;
    // log(1 + exp(a)) without overflow
    return a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
}

double dloss_dlogit(double logit, int label) {
    const double y = label ? 1.0 : -1.0;
    return -y / (1.0 + std::exp(y * logit));
}

namespace {

// Per-thread buffers reused across samples.
struct Scratch {
    std::vector<double> input;               // n*k
    std::vector<std::vector<double>> pre;    // per layer
    std::vector<std::vector<double>> act;    // per layer (post relu+dropout)
    std::vector<std::vector<double>> mask;   // dropout multiplier, 0 or 1/keep
    std::vector<std::vector<double>> dact;   // per layer
    std::vector<double> dinput;              // n*k

    void resize(const ModelParams& p) {
        const std::size_t nk = static_cast<std::size_t>(p.config.n_fields) *
                               static_cast<std::size_t>(p.config.embed_dim);
        input.assign(nk, 0.0);
        dinput.assign(nk, 0.0);
        pre.resize(p.mlp.size());
        act.resize(p.mlp.size());
        mask.resize(p.mlp.size());
        dact.resize(p.mlp.size());
        for (std::size_t l = 0; l < p.mlp.size(); ++l) {
            pre[l].assign(p.mlp[l].b.size(), 0.0);
            act[l].assign(p.mlp[l].b.size(), 0.0);
            mask[l].assign(p.mlp[l].b.size(), 1.0);
            dact[l].assign(p.mlp[l].b.size(), 0.0);
        }
    }
};

std::uint64_t dropout_seed(std::uint64_t seed, std::int64_t iteration, std::size_t position) {
    std::uint64_t h = fnv1a64(std::string("dropout"));
    h = fnv1a64_u64(seed, h);
    h = fnv1a64_u64(static_cast<std::uint64_t>(iteration), h);
    h = fnv1a64_u64(static_cast<std::uint64_t>(position), h);
    return h;
}

// Forward + backprop of one sample; accumulates raw (unscaled) gradients.
// `position` is the sample's index within the batch, which keys the dropout
// stream so results do not depend on how the batch is split across threads.
double sample_grad(const Sample& s, const ModelParams& p, const BackwardOptions& opts,
                   std::size_t position, Scratch& sc, ModelParams& g) {
    const std::size_t n = s.idx.size();
    const std::size_t k = p.embeddings.cols;
    double z = p.w0;

    if (p.config.kind == ModelKind::LR || p.config.kind == ModelKind::FM) {
        for (std::size_t f = 0; f < n; ++f) z += s.val[f] * p.linear_w[s.idx[f]];
    }

    std::vector<double>& sum_d = sc.dinput;  // reused as the FM per-dim sums
    if (p.config.kind == ModelKind::FM) {
        double pair = 0.0;
        for (std::size_t d = 0; d < k; ++d) {
            double sum = 0.0, sq = 0.0;
            for (std::size_t f = 0; f < n; ++f) {
                const double t = s.val[f] * p.embeddings.at(s.idx[f], d);
                sum += t;
                sq += t * t;
            }
            sum_d[d] = sum;
            pair += sum * sum - sq;
        }
        z += 0.5 * pair;
    }

    if (p.config.has_field_terms()) {
        for (std::size_t f = 0; f < n; ++f) {
            const double* e = p.embeddings.row(s.idx[f]);
            const double* v = p.field_vectors.row(f);
            double dot = 0.0;
            for (std::size_t d = 0; d < k; ++d) dot += e[d] * v[d];
            z += s.val[f] * dot;
            if (p.config.has_mlp()) {
                double* dst = sc.input.data() + f * k;
                for (std::size_t d = 0; d < k; ++d) dst[d] = s.val[f] * e[d];
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double* ei = p.embeddings.row(s.idx[i]);
            for (std::size_t j = i + 1; j < n; ++j) {
                const double r = p.field_matrix.at(i, j);
                if (r == 0.0) continue;
                const double* ej = p.embeddings.row(s.idx[j]);
                double dot = 0.0;
                for (std::size_t d = 0; d < k; ++d) dot += ei[d] * ej[d];
                z += s.val[i] * s.val[j] * r * dot;
            }
        }
    }

    if (p.config.has_mlp()) {
        Rng rng(dropout_seed(opts.seed, opts.iteration, position));
        const double keep = 1.0 - p.config.dropout_rate;
        const bool drop = opts.dropout_active && p.config.dropout_rate > 0.0;
        std::span<const double> cur = sc.input;
        for (std::size_t l = 0; l < p.mlp.size(); ++l) {
            const DenseLayer& layer = p.mlp[l];
            for (std::size_t o = 0; o < layer.w.rows; ++o) {
                const double* wr = layer.w.row(o);
                double acc = layer.b[o];
                for (std::size_t i = 0; i < layer.w.cols; ++i) acc += wr[i] * cur[i];
                sc.pre[l][o] = acc;
                sc.act[l][o] = acc > 0.0 ? acc : 0.0;
            }
            if (drop) {
                for (std::size_t o = 0; o < sc.act[l].size(); ++o) {
                    const double m = (rng.uniform() < keep) ? 1.0 / keep : 0.0;
                    sc.mask[l][o] = m;
                    sc.act[l][o] *= m;
                }
            } else {
                std::fill(sc.mask[l].begin(), sc.mask[l].end(), 1.0);
            }
            cur = sc.act[l];
        }
        double deep = p.out_b;
        for (std::size_t i = 0; i < p.out_w.size(); ++i) deep += p.out_w[i] * cur[i];
        z += deep;
    }

    const double gz = dloss_dlogit(z, s.label);
    g.w0 += gz;

    if (p.config.kind == ModelKind::LR || p.config.kind == ModelKind::FM) {
        for (std::size_t f = 0; f < n; ++f) g.linear_w[s.idx[f]] += gz * s.val[f];
    }

    if (p.config.kind == ModelKind::FM) {
        for (std::size_t f = 0; f < n; ++f) {
            double* ge = g.embeddings.row(s.idx[f]);
            const double* e = p.embeddings.row(s.idx[f]);
            for (std::size_t d = 0; d < k; ++d) {
                ge[d] += gz * s.val[f] * (sum_d[d] - s.val[f] * e[d]);
            }
        }
    }

    if (p.config.has_field_terms()) {
        for (std::size_t f = 0; f < n; ++f) {
            const double* e = p.embeddings.row(s.idx[f]);
            const double* v = p.field_vectors.row(f);
            double* gv = g.field_vectors.row(f);
            double* ge = g.embeddings.row(s.idx[f]);
            for (std::size_t d = 0; d < k; ++d) {
                gv[d] += gz * s.val[f] * e[d];
                ge[d] += gz * s.val[f] * v[d];
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double* ei = p.embeddings.row(s.idx[i]);
            for (std::size_t j = i + 1; j < n; ++j) {
                const double* ej = p.embeddings.row(s.idx[j]);
                double dot = 0.0;
                for (std::size_t d = 0; d < k; ++d) dot += ei[d] * ej[d];
                const double c = gz * s.val[i] * s.val[j];
                g.field_matrix.at(i, j) += c * dot;  // zeroed entries keep a gradient
                const double r = p.field_matrix.at(i, j);
                if (r == 0.0) continue;
                double* gi = g.embeddings.row(s.idx[i]);
                double* gj = g.embeddings.row(s.idx[j]);
                for (std::size_t d = 0; d < k; ++d) {
                    gi[d] += c * r * ej[d];
                    gj[d] += c * r * ei[d];
                }
            }
        }
    }

    if (p.config.has_mlp()) {
        const std::size_t last = p.mlp.size() - 1;
        g.out_b += gz;
        for (std::size_t i = 0; i < p.out_w.size(); ++i) {
            g.out_w[i] += gz * sc.act[last][i];
            sc.dact[last][i] = gz * p.out_w[i];
        }
        for (std::size_t l = p.mlp.size(); l-- > 0;) {
            const DenseLayer& layer = p.mlp[l];
            std::span<const double> prev = (l == 0) ? std::span<const double>(sc.input)
                                                    : std::span<const double>(sc.act[l - 1]);
            std::span<double> dprev = (l == 0) ? std::span<double>(sc.dinput)
                                               : std::span<double>(sc.dact[l - 1]);
            std::fill(dprev.begin(), dprev.end(), 0.0);
            for (std::size_t o = 0; o < layer.w.rows; ++o) {
                const double dpre =
                    sc.dact[l][o] * sc.mask[l][o] * (sc.pre[l][o] > 0.0 ? 1.0 : 0.0);
                if (dpre == 0.0) continue;
                g.mlp[l].b[o] += dpre;
                double* gw = g.mlp[l].w.row(o);
                const double* wr = layer.w.row(o);
                for (std::size_t i = 0; i < layer.w.cols; ++i) {
                    gw[i] += dpre * prev[i];
                    dprev[i] += dpre * wr[i];
                }
            }
        }
        for (std::size_t f = 0; f < n; ++f) {
            double* ge = g.embeddings.row(s.idx[f]);
            const double* du = sc.dinput.data() + f * k;
            for (std::size_t d = 0; d < k; ++d) ge[d] += s.val[f] * du[d];
        }
    }

    return loss(z, s.label);
}

void scale_and_regularize(ModelParams& grad, const ModelParams& params, double inv_batch,
                          double l2) {
    auto grefs = tensor_refs(grad);
    auto prefs = tensor_refs(const_cast<ModelParams&>(params));
    for (std::size_t t = 0; t < grefs.size(); ++t) {
        std::span<double> gv = grefs[t].values;
        std::span<const double> pv = prefs[t].values;
        if (grefs[t].l2 && l2 > 0.0) {
            for (std::size_t i = 0; i < gv.size(); ++i) gv[i] = gv[i] * inv_batch + l2 * pv[i];
        } else {
            for (double& x : gv) x *= inv_batch;
        }
    }
}

void add_into(ModelParams& dst, const ModelParams& src) {
    auto dr = tensor_refs(dst);
    auto sr = tensor_refs(const_cast<ModelParams&>(src));
    for (std::size_t t = 0; t < dr.size(); ++t) {
        for (std::size_t i = 0; i < dr[t].values.size(); ++i) {
            dr[t].values[i] += sr[t].values[i];
        }
    }
}

void zero_params(ModelParams& p) {
    for (auto& ref : tensor_refs(p)) {
        std::fill(ref.values.begin(), ref.values.end(), 0.0);
    }
}

}  // namespace

double backward(std::span<const Sample> batch, const ModelParams& params,
                const BackwardOptions& opts, ModelParams& grad) {
    if (batch.empty()) throw InputError("backward: empty batch");
    zero_params(grad);
    const double inv = 1.0 / static_cast<double>(batch.size());
    double total_loss = 0.0;

    int threads = opts.threads > 0 ? opts.threads
                                   : static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    threads = std::min<int>(threads, static_cast<int>(batch.size()));

    if (!opts.parallel || threads == 1) {
        Scratch sc;
        sc.resize(params);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            total_loss += sample_grad(batch[i], params, opts, i, sc, grad);
        }
    } else {
        // Fixed chunking; partials are reduced in chunk order, so the result
        // depends only on the thread count, not on scheduling.
        const std::size_t chunk = (batch.size() + threads - 1) / threads;
        std::vector<ModelParams> partial(static_cast<std::size_t>(threads));
        std::vector<double> losses(static_cast<std::size_t>(threads), 0.0);
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) {
            partial[static_cast<std::size_t>(t)] = zeros_like(params);
            pool.emplace_back([&, t]() {
                const std::size_t lo = static_cast<std::size_t>(t) * chunk;
                const std::size_t hi = std::min(batch.size(), lo + chunk);
                Scratch sc;
                sc.resize(params);
                double acc = 0.0;
                for (std::size_t i = lo; i < hi; ++i) {
                    acc += sample_grad(batch[i], params, opts, i, sc,
                                       partial[static_cast<std::size_t>(t)]);
                }
                losses[static_cast<std::size_t>(t)] = acc;
            });
        }
        for (auto& th : pool) th.join();
        for (int t = 0; t < threads; ++t) {
            add_into(grad, partial[static_cast<std::size_t>(t)]);
            total_loss += losses[static_cast<std::size_t>(t)];
        }
    }

    scale_and_regularize(grad, params, inv, opts.l2);
    return total_loss * inv;
}

void adam_step(ModelParams& params, const ModelParams& grad, AdamState& state,
               double learning_rate) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    auto pr = tensor_refs(params);
    auto gr = tensor_refs(const_cast<ModelParams&>(grad));
    auto mr = tensor_refs(state.m);
    auto vr = tensor_refs(state.v);
    for (std::size_t t = 0; t < pr.size(); ++t) {
        std::span<double> p = pr[t].values;
        std::span<const double> g = gr[t].values;
        std::span<double> m = mr[t].values;
        std::span<double> v = vr[t].values;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= learning_rate * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

std::vector<EpochMetrics> train_epochs(const TrainRun& run, ModelParams& params,
                                       AdamState& adam, const TrainConfig& config,
                                       const IterationHook& hook) {
    config.validate();
    params.validate();
    if (!run.train || run.train->samples.empty()) {
        throw InputError("train_epochs: empty training set");
    }
    if (run.train->n_fields != params.config.n_fields ||
        run.train->n_features != params.config.n_features) {
        throw InputError("train_epochs: dataset does not match model dimensions");
    }

    const std::size_t n = run.train->samples.size();
    const auto batch = static_cast<std::size_t>(config.batch_size);
    const std::int64_t iters_per_epoch = static_cast<std::int64_t>((n + batch - 1) / batch);
    ModelParams grad = zeros_like(params);
    std::vector<EpochMetrics> out;

    for (int e = 0; e < config.epochs; ++e) {
        const auto t0 = std::chrono::steady_clock::now();
        const int global_epoch = run.epoch_base + e;

        std::vector<Sample> shuffled = run.train->samples;
        std::uint64_t sseed = fnv1a64(std::string("shuffle"));
        sseed = fnv1a64_u64(config.seed, sseed);
        sseed = fnv1a64_u64(static_cast<std::uint64_t>(global_epoch), sseed);
        Rng(sseed).shuffle(shuffled);

        double epoch_loss = 0.0;
        for (std::int64_t b = 0; b < iters_per_epoch; ++b) {
            const std::size_t lo = static_cast<std::size_t>(b) * batch;
            const std::size_t hi = std::min(n, lo + batch);
            const std::int64_t global_iter = run.iter_base + e * iters_per_epoch + b;
            BackwardOptions opts;
            opts.l2 = config.l2;
            opts.dropout_active = params.config.has_mlp() && params.config.dropout_rate > 0.0;
            opts.seed = config.seed;
            opts.iteration = global_iter;
            opts.parallel = config.parallel;
            opts.threads = config.threads;
            const double batch_loss =
                backward(std::span<const Sample>(shuffled.data() + lo, hi - lo), params, opts,
                         grad);
            if (!std::isfinite(batch_loss)) {
                throw TrainingFault("training diverged: non-finite loss at iteration " +
                                    std::to_string(global_iter));
            }
            adam_step(params, grad, adam, config.learning_rate);
            if (hook) {
                IterationContext ctx;
                ctx.global_iter = global_iter;
                ctx.epoch = global_epoch;
                ctx.iters_per_epoch = iters_per_epoch;
                hook(ctx, params);
            }
            epoch_loss += batch_loss * static_cast<double>(hi - lo);
        }

        EpochMetrics em;
        em.epoch = global_epoch;
        em.train_loss = epoch_loss / static_cast<double>(n);
        if (run.test && !run.test->samples.empty()) {
            DenseScorer scorer(params);
            const EvalResult r =
                evaluate([&](const Sample& s) { return scorer(s); }, run.test->samples);
            em.test_logloss = r.logloss;
            em.test_auc = r.auc;
        }
        em.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.push_back(em);
    }
    return out;
}

}  // namespace ctrlite
