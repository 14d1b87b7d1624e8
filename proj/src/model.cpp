#include "ctrlite/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace ctrlite {

const char* to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::LR: return "lr";
        case ModelKind::FM: return "fm";
        case ModelKind::FwFM: return "fwfm";
        case ModelKind::DeepFwFM: return "deepfwfm";
    }
    return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "lr") return ModelKind::LR;
    if (s == "fm") return ModelKind::FM;
    if (s == "fwfm") return ModelKind::FwFM;
    if (s == "deepfwfm") return ModelKind::DeepFwFM;
    throw ConfigError("unknown model kind '" + s + "' (lr|fm|fwfm|deepfwfm)");
}

void ModelConfig::validate() const {
    if (n_fields < 1) throw ConfigError("model: n_fields must be >= 1");
    if (n_features < 1) throw ConfigError("model: n_features must be >= 1");
    if (n_features > UINT32_MAX) throw ConfigError("model: n_features exceeds index range");
    if (has_embeddings()) {
        if (embed_dim < 1) throw ConfigError("model: embed_dim must be >= 1 for this kind");
    }
    if (has_mlp()) {
        if (mlp_widths.empty()) throw ConfigError("model: deepfwfm needs at least one hidden layer");
        for (int w : mlp_widths) {
            if (w < 1) throw ConfigError("model: hidden widths must be >= 1");
        }
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
            throw ConfigError("model: dropout_rate must be in [0, 1)");
        }
    } else if (!mlp_widths.empty()) {
        throw ConfigError("model: mlp_widths only apply to deepfwfm");
    }
}

void ModelParams::validate() const {
    config.validate();
    const auto n = static_cast<std::size_t>(config.n_fields);
    const auto k = static_cast<std::size_t>(config.embed_dim);
    const auto m = static_cast<std::size_t>(config.n_features);
    auto check = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("model: tensor shape mismatch: ") + what);
    };
    const bool lin = (config.kind == ModelKind::LR || config.kind == ModelKind::FM);
    check(linear_w.size() == (lin ? m : 0), "linear_w");
    if (config.has_embeddings()) {
        check(embeddings.rows == m && embeddings.cols == k, "embeddings");
    } else {
        check(embeddings.data.empty(), "embeddings");
    }
    if (config.has_field_terms()) {
        check(field_vectors.rows == n && field_vectors.cols == k, "field_vectors");
        check(field_matrix.rows == n && field_matrix.cols == n, "field_matrix");
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                check(field_matrix.at(i, j) == 0.0, "field_matrix lower triangle");
            }
        }
    } else {
        check(field_vectors.data.empty() && field_matrix.data.empty(), "field terms");
    }
    if (config.has_mlp()) {
        check(mlp.size() == config.mlp_widths.size(), "mlp depth");
        std::size_t in = n * k;
        for (std::size_t l = 0; l < mlp.size(); ++l) {
            const auto out = static_cast<std::size_t>(config.mlp_widths[l]);
            check(mlp[l].w.rows == out && mlp[l].w.cols == in, "mlp weight");
            check(mlp[l].b.size() == out, "mlp bias");
            in = out;
        }
        check(out_w.size() == in, "out_w");
    } else {
        check(mlp.empty() && out_w.empty(), "mlp tensors");
    }
    for (const double* v : {&w0, &out_b}) {
        if (!std::isfinite(*v)) throw ConfigError("model: non-finite scalar parameter");
    }
}

std::vector<TensorRef> tensor_refs(ModelParams& p) {
    std::vector<TensorRef> refs;
    refs.push_back({"w0", std::span<double>(&p.w0, 1), false, PruneComponent::None});
    if (!p.linear_w.empty()) {
        refs.push_back({"linear_w", p.linear_w, true, PruneComponent::None});
    }
    if (!p.embeddings.data.empty()) {
        refs.push_back({"embeddings", p.embeddings.data, true, PruneComponent::Embedding});
    }
    if (!p.field_vectors.data.empty()) {
        refs.push_back({"field_vectors", p.field_vectors.data, true, PruneComponent::None});
    }
    if (!p.field_matrix.data.empty()) {
        refs.push_back({"field_matrix", p.field_matrix.data, true, PruneComponent::FieldMatrix});
    }
    for (std::size_t l = 0; l < p.mlp.size(); ++l) {
        const std::string tag = "mlp" + std::to_string(l);
        refs.push_back({tag + ".w", p.mlp[l].w.data, true, PruneComponent::Dnn});
        refs.push_back({tag + ".b", p.mlp[l].b, false, PruneComponent::None});
    }
    if (!p.out_w.empty()) {
        refs.push_back({"out.w", p.out_w, true, PruneComponent::Dnn});
        refs.push_back({"out.b", std::span<double>(&p.out_b, 1), false, PruneComponent::None});
    }
    return refs;
}

ModelParams zeros_like(const ModelParams& p) {
    ModelParams z;
    z.config = p.config;
    z.linear_w.assign(p.linear_w.size(), 0.0);
    z.embeddings = MatD(p.embeddings.rows, p.embeddings.cols);
    z.field_vectors = MatD(p.field_vectors.rows, p.field_vectors.cols);
    z.field_matrix = MatD(p.field_matrix.rows, p.field_matrix.cols);
    z.mlp.resize(p.mlp.size());
    for (std::size_t l = 0; l < p.mlp.size(); ++l) {
        z.mlp[l].w = MatD(p.mlp[l].w.rows, p.mlp[l].w.cols);
        z.mlp[l].b.assign(p.mlp[l].b.size(), 0.0);
    }
    z.out_w.assign(p.out_w.size(), 0.0);
    return z;
}

ModelParams alloc_model(const ModelConfig& config) {
    config.validate();
    ModelParams p;
    p.config = config;
    const auto n = static_cast<std::size_t>(config.n_fields);
    const auto k = static_cast<std::size_t>(config.embed_dim);
    const auto m = static_cast<std::size_t>(config.n_features);
    if (config.kind == ModelKind::LR || config.kind == ModelKind::FM) {
        p.linear_w.assign(m, 0.0);
    }
    if (config.has_embeddings()) p.embeddings = MatD(m, k);
    if (config.has_field_terms()) {
        p.field_vectors = MatD(n, k);
        p.field_matrix = MatD(n, n);
    }
    if (config.has_mlp()) {
        std::size_t in = n * k;
        for (int width : config.mlp_widths) {
            const auto out = static_cast<std::size_t>(width);
            DenseLayer layer;
            layer.w = MatD(out, in);
            layer.b.assign(out, 0.0);
            p.mlp.push_back(std::move(layer));
            in = out;
        }
        p.out_w.assign(in, 0.0);
    }
    return p;
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed, double init_std) {
    if (!(init_std > 0.0)) throw ConfigError("init_std must be > 0");
    ModelParams p = alloc_model(config);
    Rng rng(seed);
    auto gauss_fill = [&](std::vector<double>& v) {
        for (double& x : v) x = init_std * rng.normal();
    };
    gauss_fill(p.linear_w);
    gauss_fill(p.embeddings.data);
    gauss_fill(p.field_vectors.data);
    const std::size_t n = p.field_matrix.rows;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            p.field_matrix.at(i, j) = init_std * rng.normal();
        }
    }
    for (DenseLayer& layer : p.mlp) {
        const double bound =
            std::sqrt(6.0 / static_cast<double>(layer.w.cols + layer.w.rows));
        for (double& x : layer.w.data) x = bound * (2.0 * rng.uniform() - 1.0);
    }
    if (!p.out_w.empty()) {
        const double bound = std::sqrt(6.0 / static_cast<double>(p.out_w.size() + 1));
        for (double& x : p.out_w) x = bound * (2.0 * rng.uniform() - 1.0);
    }
    return p;
}

double forward_lr(const Sample& s, const ModelParams& p) {
    double z = p.w0;
    for (std::size_t f = 0; f < s.idx.size(); ++f) {
        z += s.val[f] * p.linear_w[s.idx[f]];
    }
    return z;
}

double forward_fm(const Sample& s, const ModelParams& p) {
    const std::size_t k = p.embeddings.cols;
    double z = p.w0;
    for (std::size_t f = 0; f < s.idx.size(); ++f) {
        z += s.val[f] * p.linear_w[s.idx[f]];
    }
    // sum trick: 1/2 * (||sum_f x_f e_f||^2 - sum_f x_f^2 ||e_f||^2)
    double pair = 0.0;
    for (std::size_t d = 0; d < k; ++d) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t f = 0; f < s.idx.size(); ++f) {
            const double t = s.val[f] * p.embeddings.at(s.idx[f], d);
            sum += t;
            sq += t * t;
        }
        pair += sum * sum - sq;
    }
    return z + 0.5 * pair;
}

double forward_fwfm(const Sample& s, const ModelParams& p) {
    const std::size_t n = s.idx.size();
    const std::size_t k = p.embeddings.cols;
    double z = p.w0;
    for (std::size_t f = 0; f < n; ++f) {
        // linear term via field-specific projection <e_i, v_f>
        const double* e = p.embeddings.row(s.idx[f]);
        const double* v = p.field_vectors.row(f);
        double dot = 0.0;
        for (std::size_t d = 0; d < k; ++d) dot += e[d] * v[d];
        z += s.val[f] * dot;
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
    return z;
}

void MlpWorkspace::resize(const ModelParams& p) {
    input.assign(static_cast<std::size_t>(p.config.n_fields) *
                     static_cast<std::size_t>(p.config.embed_dim),
                 0.0);
    pre.resize(p.mlp.size());
    act.resize(p.mlp.size());
    for (std::size_t l = 0; l < p.mlp.size(); ++l) {
        pre[l].assign(p.mlp[l].b.size(), 0.0);
        act[l].assign(p.mlp[l].b.size(), 0.0);
    }
}

double forward_mlp(std::span<const double> input, const ModelParams& p, MlpWorkspace& ws,
                   bool dropout_active, Rng* rng) {
    const double keep = 1.0 - p.config.dropout_rate;
    std::span<const double> cur = input;
    for (std::size_t l = 0; l < p.mlp.size(); ++l) {
        const DenseLayer& layer = p.mlp[l];
        std::vector<double>& pre = ws.pre[l];
        std::vector<double>& act = ws.act[l];
        for (std::size_t o = 0; o < layer.w.rows; ++o) {
            const double* wr = layer.w.row(o);
            double acc = layer.b[o];
            for (std::size_t i = 0; i < layer.w.cols; ++i) acc += wr[i] * cur[i];
            pre[o] = acc;
            act[o] = acc > 0.0 ? acc : 0.0;
        }
        if (dropout_active && p.config.dropout_rate > 0.0) {
            for (double& a : act) {
                a = (rng->uniform() < keep) ? a / keep : 0.0;  // inverted dropout
            }
        }
        cur = act;
    }
    double z = p.out_b;
    for (std::size_t i = 0; i < p.out_w.size(); ++i) z += p.out_w[i] * cur[i];
    return z;
}

double forward_deepfwfm(const Sample& s, const ModelParams& p, MlpWorkspace& ws,
                        bool dropout_active, Rng* rng) {
    const std::size_t n = s.idx.size();
    const std::size_t k = p.embeddings.cols;
    double z = p.w0;
    // shallow half: linear-by-field-vector + weighted pair interactions
    for (std::size_t f = 0; f < n; ++f) {
        const double* e = p.embeddings.row(s.idx[f]);
        const double* v = p.field_vectors.row(f);
        double dot = 0.0;
        for (std::size_t d = 0; d < k; ++d) dot += e[d] * v[d];
        z += s.val[f] * dot;
        double* dst = ws.input.data() + f * k;
        for (std::size_t d = 0; d < k; ++d) dst[d] = s.val[f] * e[d];
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
    return z + forward_mlp(ws.input, p, ws, dropout_active, rng);
}

double forward(const Sample& s, const ModelParams& p, MlpWorkspace& ws) {
    switch (p.config.kind) {
        case ModelKind::LR: return forward_lr(s, p);
        case ModelKind::FM: return forward_fm(s, p);
        case ModelKind::FwFM: return forward_fwfm(s, p);
        case ModelKind::DeepFwFM: return forward_deepfwfm(s, p, ws, false, nullptr);
    }
    throw std::logic_error("forward: bad model kind");
}

DenseScorer::DenseScorer(const ModelParams& p) : params_(&p) { ws_.resize(p); }

FlopsEstimate flops_estimate(const ModelConfig& config) {
    FlopsEstimate est;
    const double n = config.n_fields;
    const double k = config.embed_dim;
    switch (config.kind) {
        case ModelKind::LR: est.shallow = n; break;
        case ModelKind::FM: est.shallow = n * k; break;
        case ModelKind::FwFM:
        case ModelKind::DeepFwFM: est.shallow = n * n * k; break;
    }
    if (config.has_mlp()) {
        const double l = static_cast<double>(config.mlp_widths.size());
        const double h = config.mlp_widths.empty() ? 0.0 : config.mlp_widths[0];
        est.dnn = l * h * h + n * k * h;
    }
    return est;
}

ReferenceFlops flops_reference(int n_, int k_, int l_, int h_, int h_c_) {
    const double n = n_, k = k_, l = l_, h = h_, h_c = h_c_;
    const double dnn = l * h * h + n * k * h;
    ReferenceFlops r;
    r.deepfm = n * k + dnn;
    r.xdeepfm = n * k * h_c * h_c * l + dnn;
    r.deepfwfm = n * n * k + dnn;
    return r;
}

ParamCounts count_parameters(const ModelConfig& config) {
    config.validate();
    const auto n = static_cast<std::uint64_t>(config.n_fields);
    const auto k = static_cast<std::uint64_t>(config.embed_dim);
    const std::uint64_t m = config.n_features;
    ParamCounts c;
    c.w0 = 1;
    if (config.kind == ModelKind::LR || config.kind == ModelKind::FM) c.linear = m;
    if (config.has_embeddings()) c.embeddings = m * k;
    if (config.has_field_terms()) {
        c.field_vectors = n * k;
        c.field_matrix = n * (n - 1) / 2;
    }
    if (config.has_mlp()) {
        std::uint64_t in = n * k;
        for (int width : config.mlp_widths) {
            const auto out = static_cast<std::uint64_t>(width);
            c.mlp_weights += out * in;
            c.mlp_biases += out;
            in = out;
        }
        c.mlp_weights += in;  // output row
        c.mlp_biases += 1;    // output bias
    }
    return c;
}

namespace {
std::uint64_t nnz(std::span<const double> v) {
    std::uint64_t c = 0;
    for (double x : v) c += (x != 0.0);
    return c;
}
}  // namespace

ParamCounts count_parameters(const ModelParams& params) {
    ParamCounts c;
    c.w0 = 1;
    c.linear = nnz(params.linear_w);
    c.embeddings = nnz(params.embeddings.data);
    c.field_vectors = nnz(params.field_vectors.data);
    c.field_matrix = nnz(params.field_matrix.data);
    for (const DenseLayer& layer : params.mlp) {
        c.mlp_weights += nnz(layer.w.data);
        c.mlp_biases += layer.b.size();
    }
    if (!params.out_w.empty()) {
        c.mlp_weights += nnz(params.out_w);
        c.mlp_biases += 1;
    }
    return c;
}

}  // namespace ctrlite
