#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "ctrlite/checkpoint.hpp"
#include "ctrlite/sparse.hpp"

using namespace ctrlite;

namespace {

ModelConfig make_config(ModelKind kind, int n, int k, std::uint64_t m,
                        std::vector<int> widths = {}) {
    ModelConfig c;
    c.kind = kind;
    c.n_fields = n;
    c.embed_dim = k;
    c.n_features = m;
    c.mlp_widths = std::move(widths);
    c.dropout_rate = 0.0;
    return c;
}

void randomize(ModelParams& p, Rng& rng, double scale = 1.0) {
    for (const TensorRef& t : tensor_refs(p)) {
        for (double& v : t.values) {
            v = scale * rng.uniform(0.05, 0.8) * (rng.below(2) ? 1.0 : -1.0);
        }
    }
    for (std::size_t i = 0; i < p.field_matrix.rows; ++i) {
        for (std::size_t j = 0; j <= i && j < p.field_matrix.cols; ++j) {
            p.field_matrix.at(i, j) = 0.0;
        }
    }
}

Sample random_sample(int n_fields, std::uint64_t m, Rng& rng) {
    Sample s;
    s.label = static_cast<std::uint8_t>(rng.below(2));
    for (int f = 0; f < n_fields; ++f) {
        s.idx.push_back(static_cast<std::uint32_t>(rng.below(m)));
        s.val.push_back(rng.uniform(-1.5, 1.5));
    }
    return s;
}

MatF random_sparse_matf(std::size_t r, std::size_t c, double keep_prob, Rng& rng) {
    MatF m(r, c);
    for (float& v : m.data) {
        v = rng.uniform() < keep_prob ? static_cast<float>(rng.uniform(-2, 2)) : 0.0f;
    }
    return m;
}

}  // namespace

TEST_CASE("crs encoding: identity, all-zero, and the hand-worked 2x2") {
    MatF eye(3, 3);
    eye.at(0, 0) = eye.at(1, 1) = eye.at(2, 2) = 1.0f;
    const CrsMatrix e = to_crs(eye);
    CHECK(e.row_ptr == std::vector<std::uint32_t>{0, 1, 2, 3});
    CHECK(e.col_idx == std::vector<std::uint32_t>{0, 1, 2});
    CHECK(e.values == std::vector<float>{1.0f, 1.0f, 1.0f});

    const CrsMatrix zero = to_crs(MatF(2, 4));
    CHECK(zero.row_ptr == std::vector<std::uint32_t>{0, 0, 0});
    CHECK(zero.col_idx.empty());
    CHECK(zero.values.empty());

    MatF m(2, 2);
    m.at(0, 1) = 5.0f;
    m.at(1, 0) = 7.0f;
    const CrsMatrix c = to_crs(m);
    CHECK(c.row_ptr == std::vector<std::uint32_t>{0, 1, 2});
    CHECK(c.col_idx == std::vector<std::uint32_t>{1, 0});
    CHECK(c.values == std::vector<float>{5.0f, 7.0f});
}

TEST_CASE("crs round-trips arbitrary matrices losslessly") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t r = rng.below(7);  // includes 0-row matrices
        const std::size_t c = rng.below(9);
        const MatF m = random_sparse_matf(r, c, rng.uniform(0.0, 1.0), rng);
        const CrsMatrix crs = to_crs(m);
        crs.validate();
        std::size_t nnz = 0;
        for (float v : m.data) nnz += (v != 0.0f);
        CHECK(crs.nnz() == nnz);
        CHECK(from_crs(crs) == m);
    }
}

TEST_CASE("crs matvec: identity, zero, and the dense oracle") {
    Rng rng(32);
    MatF eye(4, 4);
    for (int i = 0; i < 4; ++i) eye.at(i, i) = 1.0f;
    std::vector<float> x = {1.5f, -2.0f, 0.25f, 9.0f};
    std::vector<float> y(4);
    crs_matvec(to_crs(eye), x, y);
    CHECK(y == x);

    crs_matvec(to_crs(MatF(4, 4)), x, y);
    CHECK(y == std::vector<float>{0, 0, 0, 0});

    for (int trial = 0; trial < 10; ++trial) {
        const MatF m = random_sparse_matf(8, 8, 0.25, rng);
        std::vector<float> v(8), out(8);
        for (float& e : v) e = static_cast<float>(rng.uniform(-1, 1));
        crs_matvec(to_crs(m), v, out);
        for (int i = 0; i < 8; ++i) {
            double acc = 0.0;  // same double accumulation over the dense row
            for (int j = 0; j < 8; ++j) {
                acc += static_cast<double>(m.at(i, j)) * static_cast<double>(v[j]);
            }
            CHECK(std::fabs(static_cast<double>(out[i]) - acc) < 1e-6);
            CHECK(out[i] == static_cast<float>(acc));
        }
    }

    std::vector<float> bad(3);
    CHECK_THROWS_AS(crs_matvec(to_crs(eye), bad, y), InputError);
}

TEST_CASE("sparse embedding rows round-trip and charge empty rows nothing") {
    Rng rng(33);
    MatF table = random_sparse_matf(12, 6, 0.4, rng);
    for (int c = 0; c < 6; ++c) table.at(5, c) = 0.0f;  // a fully pruned row
    const SparseRows rows = to_sparse_rows(table);
    rows.validate();
    CHECK(rows.row_ptr[6] == rows.row_ptr[5]);  // row 5 adds no entries
    CHECK(from_sparse_rows(rows) == table);

    CHECK_THROWS_AS(to_sparse_rows(MatF(2, 300)), ConfigError);  // u8 col overflow
}

TEST_CASE("compiling an unpruned model is lossless in structure") {
    Rng rng(34);
    ModelParams p = alloc_model(make_config(ModelKind::DeepFwFM, 5, 4, 20, {8, 8}));
    randomize(p, rng);
    const SparseModel sm = compile_sparse(p, 42);
    CHECK(sm.dict_hash == 42);
    CHECK(sm.pairs.size() == 10);  // 5*4/2
    CHECK(sm.embeddings.nnz() == 20 * 4);
    const ParamCounts dense = count_parameters(p.config);
    const ParamCounts got = compiled_param_counts(sm);
    CHECK(got.embeddings == dense.embeddings);
    CHECK(got.field_matrix == dense.field_matrix);
    CHECK(got.mlp_weights == dense.mlp_weights);
    CHECK(got.field_vectors == dense.field_vectors);
}

TEST_CASE("pair list keeps only surviving field pairs, sorted") {
    Rng rng(35);
    ModelParams p = alloc_model(make_config(ModelKind::FwFM, 4, 2, 8));
    randomize(p, rng);
    for (double& r : p.field_matrix.data) r = 0.0;
    p.field_matrix.at(1, 3) = 0.7;
    p.field_matrix.at(0, 2) = -0.4;
    const SparseModel sm = compile_sparse(p);
    REQUIRE(sm.pairs.size() == 2);
    CHECK(sm.pairs[0].f1 == 0);
    CHECK(sm.pairs[0].f2 == 2);
    CHECK(sm.pairs[0].weight == doctest::Approx(-0.4));
    CHECK(sm.pairs[1].f1 == 1);
    CHECK(sm.pairs[1].f2 == 3);

    for (double& r : p.field_matrix.data) r = 0.0;
    p.field_matrix.at(0, 1) = 1.0;
    CHECK(compile_sparse(p).pairs.size() == 1);
}

TEST_CASE("90 percent pruning of a 39-field interaction matrix leaves 75 pairs") {
    Rng rng(36);
    ModelParams p = alloc_model(make_config(ModelKind::FwFM, 39, 2, 78));
    randomize(p, rng);
    prune_entries(field_matrix_entries(p), 0.9);
    const SparseModel sm = compile_sparse(p);
    CHECK(sm.pairs.size() == 741 - 666);  // 741 - floor(0.9*741)
    CHECK(sm.pairs.size() == 75);
}

TEST_CASE("compiled counts equal the source sparsity report exactly") {
    Rng rng(37);
    ModelParams p = alloc_model(make_config(ModelKind::DeepFwFM, 6, 5, 30, {16, 12}));
    randomize(p, rng);
    prune_entries(dnn_weight_entries(p), 0.7);
    prune_entries(field_matrix_entries(p), 0.5);
    prune_embeddings(p, 0.8, EmbeddingPruneMode::Global);

    const SparsityReport report = sparsity_report(p);
    const SparseModel sm = compile_sparse(p);
    const ParamCounts counts = compiled_param_counts(sm);
    CHECK(counts.embeddings == report.embeddings.nonzero);
    CHECK(counts.field_matrix == report.field_matrix.nonzero);
    CHECK(counts.mlp_weights == report.dnn.nonzero);
    CHECK(sm.source_sparsity.dnn.nonzero == report.dnn.nonzero);
    CHECK(sm.source_sparsity.embeddings.total == report.embeddings.total);

    const double dense_flops = flops_estimate(p.config).total();
    const double sparse_flops = compiled_flops(sm);
    CHECK(sparse_flops > 0.0);
    CHECK(sparse_flops < dense_flops);
}

TEST_CASE("sparse forward equals the masked dense forward") {
    Rng rng(38);
    const struct {
        ModelKind kind;
        std::vector<int> widths;
        double r_dnn, r_r, r_emb;
    } cases[] = {
        {ModelKind::FwFM, {}, 0.0, 0.5, 0.5},
        {ModelKind::FwFM, {}, 0.0, 0.99, 0.9},
        {ModelKind::DeepFwFM, {16, 8}, 0.0, 0.0, 0.0},
        {ModelKind::DeepFwFM, {16, 8}, 0.5, 0.5, 0.5},
        {ModelKind::DeepFwFM, {16, 8}, 0.95, 0.9, 0.9},
    };
    for (const auto& c : cases) {
        const int n = 6, k = 8;
        const std::uint64_t m = 24;
        ModelParams p = alloc_model(make_config(c.kind, n, k, m, c.widths));
        // trained-magnitude weights: keeps f32 rounding well inside 1e-6
        randomize(p, rng, 0.15);
        if (c.r_dnn > 0) prune_entries(dnn_weight_entries(p), c.r_dnn);
        if (c.r_r > 0) prune_entries(field_matrix_entries(p), c.r_r);
        if (c.r_emb > 0) prune_embeddings(p, c.r_emb, EmbeddingPruneMode::Global);

        const SparseModel sm = compile_sparse(p);
        SparseScorer sparse(sm);
        DenseScorer dense(p);
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const Sample s = random_sample(n, m, rng);
            worst = std::max(worst, std::fabs(sparse(s) - dense(s)));
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("empty pair list reduces the shallow term to bias plus linear") {
    Rng rng(39);
    ModelParams p = alloc_model(make_config(ModelKind::FwFM, 3, 4, 9));
    randomize(p, rng);
    for (double& r : p.field_matrix.data) r = 0.0;
    const SparseModel sm = compile_sparse(p);
    CHECK(sm.pairs.empty());

    const Sample s = random_sample(3, 9, rng);
    double want = static_cast<double>(sm.w0);
    for (int f = 0; f < 3; ++f) {
        double dot = 0.0;
        const MatF emb = from_sparse_rows(sm.embeddings);
        for (int d = 0; d < 4; ++d) {
            dot += static_cast<double>(emb.at(s.idx[f], d)) *
                   static_cast<double>(sm.field_vectors.at(f, d));
        }
        want += s.val[f] * dot;
    }
    CHECK(sparse_forward(s, sm) == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("dense checkpoints round-trip bit-exactly with optimizer state") {
    const std::string path = "/tmp/ctrlite_test_dense.ckpt";
    ModelConfig cfg = make_config(ModelKind::DeepFwFM, 4, 3, 12, {6, 5});
    ModelParams p = init_model(cfg, 3);
    AdamState adam = make_adam_state(p);
    // take one real step so the accumulators are nonzero
    ModelParams g = zeros_like(p);
    Rng rng(40);
    for (const TensorRef& t : tensor_refs(g)) {
        for (double& v : t.values) v = rng.uniform(-1, 1);
    }
    // the lower triangle holds no parameters, so it never receives gradient
    for (std::size_t i = 0; i < g.field_matrix.rows; ++i) {
        for (std::size_t j = 0; j <= i; ++j) g.field_matrix.at(i, j) = 0.0;
    }
    adam_step(p, g, adam, 0.001);

    Metadata meta = {{"dict_hash", "123"}, {"epochs_done", "7"}};
    save_checkpoint(p, &adam, path, meta);
    const LoadedCheckpoint loaded = load_checkpoint(path);
    CHECK_FALSE(loaded.sparse);
    CHECK(loaded.metadata.at("dict_hash") == "123");
    CHECK(loaded.metadata.at("epochs_done") == "7");

    CHECK(loaded.params.w0 == p.w0);
    CHECK(loaded.params.embeddings == p.embeddings);
    CHECK(loaded.params.field_vectors == p.field_vectors);
    CHECK(loaded.params.field_matrix == p.field_matrix);
    CHECK(loaded.params.out_w == p.out_w);
    CHECK(loaded.params.out_b == p.out_b);
    REQUIRE(loaded.params.mlp.size() == p.mlp.size());
    for (std::size_t l = 0; l < p.mlp.size(); ++l) {
        CHECK(loaded.params.mlp[l].w == p.mlp[l].w);
        CHECK(loaded.params.mlp[l].b == p.mlp[l].b);
    }
    REQUIRE(loaded.adam.has_value());
    CHECK(loaded.adam->t == adam.t);
    CHECK(loaded.adam->beta1 == adam.beta1);
    CHECK(loaded.adam->m.embeddings == adam.m.embeddings);
    CHECK(loaded.adam->v.embeddings == adam.v.embeddings);
    CHECK(loaded.adam->m.out_w == adam.m.out_w);
    std::remove(path.c_str());
}

TEST_CASE("dense checkpoint without optimizer state loads with none") {
    const std::string path = "/tmp/ctrlite_test_noadam.ckpt";
    ModelParams p = init_model(make_config(ModelKind::FM, 3, 2, 6), 1);
    save_checkpoint(p, nullptr, path);
    const LoadedCheckpoint loaded = load_checkpoint(path);
    CHECK_FALSE(loaded.adam.has_value());
    CHECK(loaded.params.embeddings == p.embeddings);
    CHECK(loaded.params.linear_w == p.linear_w);
    std::remove(path.c_str());
}

TEST_CASE("sparse checkpoints reproduce every compiled structure") {
    const std::string path = "/tmp/ctrlite_test_sparse.ckpt";
    Rng rng(41);
    ModelParams p = alloc_model(make_config(ModelKind::DeepFwFM, 5, 6, 25, {12, 10}));
    randomize(p, rng);
    prune_entries(dnn_weight_entries(p), 0.8);
    prune_entries(field_matrix_entries(p), 0.6);
    prune_embeddings(p, 0.7, EmbeddingPruneMode::Global);
    const SparseModel sm = compile_sparse(p, 999);

    save_sparse_checkpoint(sm, path, {{"source", "unit-test"}});
    const LoadedCheckpoint loaded = load_checkpoint(path);
    CHECK(loaded.sparse);
    CHECK(loaded.metadata.at("source") == "unit-test");
    const SparseModel& got = loaded.model;
    CHECK(got.dict_hash == 999);
    CHECK(got.w0 == sm.w0);
    CHECK(got.field_vectors == sm.field_vectors);
    CHECK(got.embeddings == sm.embeddings);
    CHECK(got.pairs == sm.pairs);
    REQUIRE(got.mlp_w.size() == sm.mlp_w.size());
    for (std::size_t l = 0; l < sm.mlp_w.size(); ++l) {
        CHECK(got.mlp_w[l] == sm.mlp_w[l]);
        CHECK(got.mlp_b[l] == sm.mlp_b[l]);
    }
    CHECK(got.out_w == sm.out_w);
    CHECK(got.out_b == sm.out_b);
    CHECK(got.source_sparsity.dnn.nonzero == sm.source_sparsity.dnn.nonzero);
    CHECK(got.source_sparsity.embeddings.total == sm.source_sparsity.embeddings.total);

    // scoring parity through the round trip
    SparseScorer a(sm), b(got);
    for (int i = 0; i < 50; ++i) {
        const Sample s = random_sample(5, 25, rng);
        CHECK(a(s) == b(s));
    }
    std::remove(path.c_str());
}

TEST_CASE("corrupt and truncated checkpoint files are refused outright") {
    const std::string path = "/tmp/ctrlite_test_corrupt.ckpt";
    ModelParams p = init_model(make_config(ModelKind::FM, 3, 2, 6), 2);
    save_checkpoint(p, nullptr, path);

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    {  // flip one payload byte: checksum must catch it
        std::string flipped = bytes;
        flipped[flipped.size() / 2] ^= 0x1;
        std::ofstream out(path, std::ios::binary);
        out << flipped;
        out.close();
        bool threw = false;
        try {
            load_checkpoint(path);
        } catch (const ParseError& e) {
            threw = true;
            CHECK(std::string(e.what()).find("checksum") != std::string::npos);
        }
        CHECK(threw);
    }
    {  // drop the tail
        std::ofstream out(path, std::ios::binary);
        out << bytes.substr(0, bytes.size() / 2);
        out.close();
        CHECK_THROWS_AS(load_checkpoint(path), ParseError);
    }
    {  // not a checkpoint at all
        std::ofstream out(path, std::ios::binary);
        out << "definitely not a model";
        out.close();
        CHECK_THROWS_AS(load_checkpoint(path), ParseError);
    }
    CHECK_THROWS_AS(load_checkpoint("/tmp/ctrlite_test_missing.ckpt"), IoError);
    std::remove(path.c_str());
}

TEST_CASE("dense checkpoint size is dominated by the embedding table") {
    const std::string path = "/tmp/ctrlite_test_size.ckpt";
    ModelParams p = init_model(make_config(ModelKind::FwFM, 5, 10, 1000), 3);
    save_checkpoint(p, nullptr, path);
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    const auto size = static_cast<std::size_t>(in.tellg());
    const std::size_t embedding_bytes = 1000 * 10 * 8;
    CHECK(size > embedding_bytes);
    CHECK(size < embedding_bytes + embedding_bytes / 10);
    std::remove(path.c_str());
}

TEST_CASE("sparse checkpoint shrinks with embedding pruning") {
    // the acceptance memory criterion at desk scale: 80% embedding pruning
    // must cut the compiled artifact below 30% of its dense-compiled size
    auto file_size = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        return static_cast<double>(in.tellg());
    };
    Rng rng(43);
    ModelParams p = alloc_model(make_config(ModelKind::FwFM, 8, 10, 4000));
    randomize(p, rng);
    const std::string dense_path = "/tmp/ctrlite_test_c0.ckpt";
    const std::string pruned_path = "/tmp/ctrlite_test_c80.ckpt";
    save_sparse_checkpoint(compile_sparse(p), dense_path);
    prune_embeddings(p, 0.8, EmbeddingPruneMode::Global);
    save_sparse_checkpoint(compile_sparse(p), pruned_path);
    CHECK(file_size(pruned_path) < 0.3 * file_size(dense_path));
    std::remove(dense_path.c_str());
    std::remove(pruned_path.c_str());
}
