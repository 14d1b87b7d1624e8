#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <numeric>
#include <vector>

#include "ctrlite/model.hpp"

using namespace ctrlite;

namespace {

ModelConfig make_config(ModelKind kind, int n, int k, std::uint64_t m,
                        std::vector<int> widths = {}) {
    ModelConfig c;
    c.kind = kind;
    c.n_fields = n;
    c.embed_dim = kind == ModelKind::LR ? 0 : k;
    c.n_features = m;
    c.mlp_widths = std::move(widths);
    c.dropout_rate = 0.0;
    return c;
}

// One active feature per field, indices inside the per-field block [i*m/n, ...)
// is irrelevant for forwards, so just spread them out.
Sample random_sample(int n_fields, std::uint64_t m, Rng& rng, bool unit_values = false) {
    Sample s;
    s.label = static_cast<std::uint8_t>(rng.below(2));
    for (int f = 0; f < n_fields; ++f) {
        s.idx.push_back(static_cast<std::uint32_t>(rng.below(m)));
        s.val.push_back(unit_values ? 1.0 : rng.uniform(-2.0, 2.0));
    }
    return s;
}

void randomize(ModelParams& p, Rng& rng) {
    for (const TensorRef& t : tensor_refs(p)) {
        for (double& v : t.values) v = rng.uniform(-1.0, 1.0);
    }
    // the matrix is only a parameter above the diagonal
    for (std::size_t i = 0; i < p.field_matrix.rows; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            if (j < p.field_matrix.cols) p.field_matrix.at(i, j) = 0.0;
        }
    }
}

double dot(const double* a, const double* b, int k) {
    double acc = 0.0;
    for (int d = 0; d < k; ++d) acc += a[d] * b[d];
    return acc;
}

// Straight double loops over all active pairs; the implementation under test
// uses the sum trick (FM) / the field matrix gate (FwFM).
double fm_brute(const Sample& s, const ModelParams& p) {
    const int n = p.config.n_fields;
    const int k = p.config.embed_dim;
    double z = p.w0;
    for (int i = 0; i < n; ++i) z += s.val[i] * p.linear_w[s.idx[i]];
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            z += s.val[i] * s.val[j] *
                 dot(p.embeddings.row(s.idx[i]), p.embeddings.row(s.idx[j]), k);
        }
    }
    return z;
}

double fwfm_brute(const Sample& s, const ModelParams& p) {
    const int n = p.config.n_fields;
    const int k = p.config.embed_dim;
    double z = p.w0;
    for (int i = 0; i < n; ++i) {
        z += s.val[i] * dot(p.embeddings.row(s.idx[i]), p.field_vectors.row(i), k);
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            z += s.val[i] * s.val[j] * p.field_matrix.at(i, j) *
                 dot(p.embeddings.row(s.idx[i]), p.embeddings.row(s.idx[j]), k);
        }
    }
    return z;
}

double rel_err(double got, double want) {
    const double scale = std::max({std::fabs(got), std::fabs(want), 1e-12});
    return std::fabs(got - want) / scale;
}

}  // namespace

TEST_CASE("lr forward: bias only, single term, two terms") {
    ModelParams p = alloc_model(make_config(ModelKind::LR, 2, 0, 4));
    p.w0 = 0.3;
    Sample s;
    s.idx = {0, 2};
    s.val = {2.0, 3.0};
    CHECK(forward_lr(s, p) == 0.3);

    p.w0 = 0.0;
    p.linear_w[0] = 0.5;
    Sample one;
    one.idx = {0, 2};
    one.val = {2.0, 0.0};
    CHECK(forward_lr(one, p) == 1.0);

    p.linear_w[2] = -0.25;
    CHECK(forward_lr(s, p) == doctest::Approx(2.0 * 0.5 + 3.0 * -0.25));
}

TEST_CASE("fm forward: degenerate embeddings reduce to lr") {
    ModelParams p = alloc_model(make_config(ModelKind::FM, 3, 2, 6));
    Rng rng(11);
    p.w0 = rng.uniform(-1, 1);
    for (double& w : p.linear_w) w = rng.uniform(-1, 1);
    Sample s = random_sample(3, 6, rng);
    ModelParams lr = alloc_model(make_config(ModelKind::LR, 3, 0, 6));
    lr.w0 = p.w0;
    lr.linear_w = p.linear_w;
    CHECK(forward_fm(s, p) == doctest::Approx(forward_lr(s, lr)).epsilon(1e-14));
}

TEST_CASE("fm forward: orthogonal embeddings contribute no pair term") {
    ModelParams p = alloc_model(make_config(ModelKind::FM, 2, 2, 2));
    p.embeddings.at(0, 0) = 1.0;
    p.embeddings.at(1, 1) = 1.0;
    Sample s;
    s.idx = {0, 1};
    s.val = {1.0, 1.0};
    CHECK(forward_fm(s, p) == doctest::Approx(0.0));
}

TEST_CASE("fm and fwfm forwards match brute-force pair sums") {
    Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(7));  // up to 8
        const int k = 1 + static_cast<int>(rng.below(8));
        const std::uint64_t m = static_cast<std::uint64_t>(n) * 3;

        ModelParams fm = alloc_model(make_config(ModelKind::FM, n, k, m));
        randomize(fm, rng);
        ModelParams fwfm = alloc_model(make_config(ModelKind::FwFM, n, k, m));
        randomize(fwfm, rng);

        const Sample s = random_sample(n, m, rng);
        CHECK(rel_err(forward_fm(s, fm), fm_brute(s, fm)) < 1e-10);
        CHECK(rel_err(forward_fwfm(s, fwfm), fwfm_brute(s, fwfm)) < 1e-10);
    }
}

TEST_CASE("fwfm: zero field matrix gates all interactions off") {
    Rng rng(5);
    ModelParams p = alloc_model(make_config(ModelKind::FwFM, 3, 4, 9));
    randomize(p, rng);
    for (double& r : p.field_matrix.data) r = 0.0;
    const Sample s = random_sample(3, 9, rng);
    double want = p.w0;
    for (int i = 0; i < 3; ++i) {
        want += s.val[i] * dot(p.embeddings.row(s.idx[i]), p.field_vectors.row(i), 4);
    }
    CHECK(forward_fwfm(s, p) == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("fwfm with unit field matrix and matched linear term reproduces fm") {
    Rng rng(17);
    const int n = 4, k = 3;
    const std::uint64_t m = 8;
    ModelParams fm = alloc_model(make_config(ModelKind::FM, n, k, m));
    randomize(fm, rng);

    const Sample s = random_sample(n, m, rng, /*unit_values=*/true);

    ModelParams fw = alloc_model(make_config(ModelKind::FwFM, n, k, m));
    fw.w0 = fm.w0;
    fw.embeddings = fm.embeddings;
    for (std::size_t i = 0; i < fw.field_matrix.rows; ++i) {
        for (std::size_t j = i + 1; j < fw.field_matrix.cols; ++j) {
            fw.field_matrix.at(i, j) = 1.0;
        }
    }
    // pick v_f so <e_i, v_f> equals the fm linear weight of the active feature
    for (int f = 0; f < n; ++f) {
        const double* e = fm.embeddings.row(s.idx[f]);
        const double norm2 = dot(e, e, k);
        REQUIRE(norm2 > 1e-9);
        const double scale = fm.linear_w[s.idx[f]] / norm2;
        for (int d = 0; d < k; ++d) fw.field_vectors.at(f, d) = scale * e[d];
    }
    CHECK(forward_fwfm(s, fw) == doctest::Approx(forward_fm(s, fm)).epsilon(1e-12));
}

TEST_CASE("mlp forward: zero weights, identity layer, determinism") {
    const int n = 2, k = 2;
    ModelConfig cfg = make_config(ModelKind::DeepFwFM, n, k, 4, {n * k});
    ModelParams p = alloc_model(cfg);
    MlpWorkspace ws;
    ws.resize(p);
    const std::vector<double> input = {1.0, -2.0, 3.0, -0.5};

    CHECK(forward_mlp(input, p, ws, false, nullptr) == 0.0);

    for (int i = 0; i < n * k; ++i) p.mlp[0].w.at(i, i) = 1.0;
    for (double& w : p.out_w) w = 1.0;
    // relu keeps 1 and 3 only
    CHECK(forward_mlp(input, p, ws, false, nullptr) == doctest::Approx(4.0));

    Rng rng(3);
    randomize(p, rng);
    const double a = forward_mlp(input, p, ws, false, nullptr);
    const double b = forward_mlp(input, p, ws, false, nullptr);
    CHECK(a == b);
}

TEST_CASE("mlp dropout is reproducible per rng seed and off at inference") {
    ModelConfig cfg = make_config(ModelKind::DeepFwFM, 2, 3, 4, {8, 8});
    cfg.dropout_rate = 0.5;
    ModelParams p = alloc_model(cfg);
    Rng init(9);
    randomize(p, init);
    MlpWorkspace ws;
    ws.resize(p);
    std::vector<double> input(6);
    for (double& v : input) v = init.uniform(-1, 1);

    Rng r1(42), r2(42), r3(43);
    const double d1 = forward_mlp(input, p, ws, true, &r1);
    const double d2 = forward_mlp(input, p, ws, true, &r2);
    const double d3 = forward_mlp(input, p, ws, true, &r3);
    CHECK(d1 == d2);
    CHECK(d1 != d3);  // overwhelmingly likely with 16 hidden units
}

TEST_CASE("deepfwfm is the sum of the shallow and deep components") {
    Rng rng(31);
    const int n = 5, k = 3;
    ModelConfig cfg = make_config(ModelKind::DeepFwFM, n, k, 12, {7, 6});
    ModelParams p = alloc_model(cfg);
    randomize(p, rng);
    const Sample s = random_sample(n, 12, rng);
    MlpWorkspace ws;
    ws.resize(p);

    // shallow component via the fwfm forward on a stripped copy
    ModelParams shallow = p;
    shallow.config.kind = ModelKind::FwFM;
    shallow.config.mlp_widths.clear();
    const double z_shallow = forward_fwfm(s, p);

    std::vector<double> input(static_cast<std::size_t>(n) * k);
    for (int f = 0; f < n; ++f) {
        const double* e = p.embeddings.row(s.idx[f]);
        for (int d = 0; d < k; ++d) input[static_cast<std::size_t>(f) * k + d] = s.val[f] * e[d];
    }
    const double z_deep = forward_mlp(input, p, ws, false, nullptr);

    const double z = forward_deepfwfm(s, p, ws, false, nullptr);
    CHECK(z == doctest::Approx(z_shallow + z_deep).epsilon(1e-12));

    // mlp all-zero -> shallow only
    ModelParams no_deep = p;
    for (auto& layer : no_deep.mlp) {
        for (double& w : layer.w.data) w = 0.0;
        for (double& b : layer.b) b = 0.0;
    }
    for (double& w : no_deep.out_w) w = 0.0;
    no_deep.out_b = 0.0;
    CHECK(forward_deepfwfm(s, no_deep, ws, false, nullptr) ==
          doctest::Approx(forward_fwfm(s, no_deep)).epsilon(1e-14));

    // shallow all-zero -> deep only
    ModelParams no_shallow = p;
    no_shallow.w0 = 0.0;
    for (double& v : no_shallow.field_vectors.data) v = 0.0;
    for (double& r : no_shallow.field_matrix.data) r = 0.0;
    CHECK(forward_deepfwfm(s, no_shallow, ws, false, nullptr) ==
          doctest::Approx(z_deep).epsilon(1e-12));
}

TEST_CASE("inference forward is pure: params untouched, outputs repeatable") {
    Rng rng(77);
    ModelConfig cfg = make_config(ModelKind::DeepFwFM, 4, 2, 8, {6});
    cfg.dropout_rate = 0.4;  // must be ignored at inference
    ModelParams p = alloc_model(cfg);
    randomize(p, rng);
    const ModelParams before = p;
    const Sample s = random_sample(4, 8, rng);
    MlpWorkspace ws;
    ws.resize(p);
    const double a = forward(s, p, ws);
    const double b = forward(s, p, ws);
    CHECK(a == b);
    CHECK(p.w0 == before.w0);
    CHECK(p.embeddings == before.embeddings);
    CHECK(p.field_vectors == before.field_vectors);
    CHECK(p.field_matrix == before.field_matrix);
    CHECK(p.out_w == before.out_w);

    DenseScorer scorer(p);
    CHECK(scorer(s) == a);
}

TEST_CASE("forward dispatch matches the per-kind entry points") {
    Rng rng(123);
    MlpWorkspace ws;
    {
        ModelParams p = alloc_model(make_config(ModelKind::LR, 3, 0, 6));
        randomize(p, rng);
        const Sample s = random_sample(3, 6, rng);
        ws.resize(p);
        CHECK(forward(s, p, ws) == forward_lr(s, p));
    }
    {
        ModelParams p = alloc_model(make_config(ModelKind::FM, 3, 2, 6));
        randomize(p, rng);
        const Sample s = random_sample(3, 6, rng);
        ws.resize(p);
        CHECK(forward(s, p, ws) == forward_fm(s, p));
    }
    {
        ModelParams p = alloc_model(make_config(ModelKind::FwFM, 3, 2, 6));
        randomize(p, rng);
        const Sample s = random_sample(3, 6, rng);
        ws.resize(p);
        CHECK(forward(s, p, ws) == forward_fwfm(s, p));
    }
}

TEST_CASE("flops estimates reproduce the published complexity table") {
    const ReferenceFlops ref = flops_reference(39, 10, 3, 400, 100);
    // shallow + dnn: (nk | nk*hc^2*l | n^2k) + (lh^2 + nkh)
    CHECK(ref.deepfm == 636390.0);
    CHECK(ref.xdeepfm == 12336000.0);
    CHECK(ref.deepfwfm == 651210.0);

    ModelConfig deep = make_config(ModelKind::DeepFwFM, 39, 10, 100, {400, 400, 400});
    const FlopsEstimate fe = flops_estimate(deep);
    CHECK(fe.shallow == 39.0 * 39.0 * 10.0);
    CHECK(fe.dnn == 3.0 * 400.0 * 400.0 + 39.0 * 10.0 * 400.0);
    CHECK(fe.total() == ref.deepfwfm);

    CHECK(flops_estimate(make_config(ModelKind::FwFM, 2, 1, 4)).shallow == 4.0);
    CHECK(flops_estimate(make_config(ModelKind::FM, 5, 3, 10)).shallow == 15.0);
    CHECK(flops_estimate(make_config(ModelKind::LR, 7, 0, 10)).shallow == 7.0);
    CHECK(flops_estimate(make_config(ModelKind::LR, 7, 0, 10)).dnn == 0.0);
}

TEST_CASE("dense parameter counts: hand values and the criteo-scale table row") {
    const ParamCounts small = count_parameters(make_config(ModelKind::FwFM, 2, 3, 10));
    CHECK(small.embeddings == 30);
    CHECK(small.field_vectors == 6);
    CHECK(small.field_matrix == 1);
    CHECK(small.w0 == 1);
    CHECK(small.linear == 0);

    CHECK(count_parameters(make_config(ModelKind::FwFM, 39, 10, 100)).field_matrix == 741);

    const ParamCounts criteo = count_parameters(make_config(ModelKind::FM, 39, 10, 1326056));
    CHECK(criteo.embeddings == 13260560);

    const ParamCounts deep =
        count_parameters(make_config(ModelKind::DeepFwFM, 39, 10, 100, {400, 400, 400}));
    CHECK(deep.mlp_weights == 390ULL * 400 + 400ULL * 400 + 400ULL * 400 + 400);
    CHECK(deep.mlp_biases == 400ULL * 3 + 1);

    const ParamCounts lr = count_parameters(make_config(ModelKind::LR, 39, 0, 1326056));
    CHECK(lr.linear == 1326056);
    CHECK(lr.embeddings == 0);
    CHECK(lr.w0 == 1);
}

TEST_CASE("nonzero counts report the surviving fraction after zeroing") {
    Rng rng(55);
    ModelParams p = alloc_model(make_config(ModelKind::FwFM, 4, 5, 20));
    randomize(p, rng);
    const ParamCounts dense = count_parameters(p.config);
    ParamCounts nnz = count_parameters(p);
    CHECK(nnz.embeddings == dense.embeddings);

    // zero exactly half of the embedding table
    for (std::size_t i = 0; i < p.embeddings.size() / 2; ++i) p.embeddings.data[i] = 0.0;
    nnz = count_parameters(p);
    CHECK(nnz.embeddings == dense.embeddings / 2);
    CHECK(nnz.field_vectors == dense.field_vectors);
    CHECK(nnz.field_matrix == dense.field_matrix);
}

TEST_CASE("init_model: reproducible, seed-sensitive, structurally valid") {
    ModelConfig cfg = make_config(ModelKind::DeepFwFM, 4, 3, 16, {8, 8});
    const ModelParams a = init_model(cfg, 7);
    const ModelParams b = init_model(cfg, 7);
    const ModelParams c = init_model(cfg, 8);
    a.validate();
    CHECK(a.embeddings == b.embeddings);
    CHECK(a.field_matrix == b.field_matrix);
    CHECK_FALSE(a.embeddings == c.embeddings);

    // strict lower triangle and diagonal stay zero
    for (std::size_t i = 0; i < a.field_matrix.rows; ++i) {
        for (std::size_t j = 0; j <= i; ++j) CHECK(a.field_matrix.at(i, j) == 0.0);
    }
    bool any_upper = false;
    for (std::size_t i = 0; i < a.field_matrix.rows; ++i) {
        for (std::size_t j = i + 1; j < a.field_matrix.cols; ++j) {
            any_upper = any_upper || a.field_matrix.at(i, j) != 0.0;
        }
    }
    CHECK(any_upper);
    for (const auto& layer : a.mlp) {
        for (double bias : layer.b) CHECK(bias == 0.0);
    }
}

TEST_CASE("config validation rejects malformed setups") {
    CHECK_THROWS_AS(make_config(ModelKind::FM, 3, 0, 6).validate(), ConfigError);
    CHECK_THROWS_AS(make_config(ModelKind::DeepFwFM, 0, 2, 6, {4}).validate(), ConfigError);
    ModelConfig bad_dropout = make_config(ModelKind::DeepFwFM, 3, 2, 6, {4});
    bad_dropout.dropout_rate = 1.0;
    CHECK_THROWS_AS(bad_dropout.validate(), ConfigError);
    ModelConfig widths_on_fm = make_config(ModelKind::FM, 3, 2, 6, {4});
    CHECK_THROWS_AS(widths_on_fm.validate(), ConfigError);
    ModelConfig ok = make_config(ModelKind::DeepFwFM, 3, 2, 6, {4, 4});
    ok.validate();
}
