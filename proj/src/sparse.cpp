#include "ctrlite/sparse.hpp"

#include <algorithm>
#include <cmath>

namespace ctrlite {

void CrsMatrix::validate() const {
    if (row_ptr.size() != static_cast<std::size_t>(n_rows) + 1 || row_ptr[0] != 0) {
        throw ConfigError("crs: bad row_ptr header");
    }
    if (col_idx.size() != values.size() || row_ptr.back() != values.size()) {
        throw ConfigError("crs: index/value length mismatch");
    }
    for (std::size_t r = 0; r < n_rows; ++r) {
        if (row_ptr[r] > row_ptr[r + 1]) throw ConfigError("crs: row_ptr not monotone");
        for (std::uint32_t i = row_ptr[r]; i < row_ptr[r + 1]; ++i) {
            if (col_idx[i] >= n_cols) throw ConfigError("crs: column out of range");
            if (i > row_ptr[r] && col_idx[i] <= col_idx[i - 1]) {
                throw ConfigError("crs: columns not strictly increasing");
            }
        }
    }
}

CrsMatrix to_crs(const MatF& dense) {
    CrsMatrix m;
    m.n_rows = static_cast<std::uint32_t>(dense.rows);
    m.n_cols = static_cast<std::uint32_t>(dense.cols);
    m.row_ptr.reserve(dense.rows + 1);
    m.row_ptr.push_back(0);
    for (std::size_t r = 0; r < dense.rows; ++r) {
        const float* row = dense.row(r);
        for (std::size_t c = 0; c < dense.cols; ++c) {
            if (row[c] != 0.0f) {
                m.col_idx.push_back(static_cast<std::uint32_t>(c));
                m.values.push_back(row[c]);
            }
        }
        m.row_ptr.push_back(static_cast<std::uint32_t>(m.values.size()));
    }
    return m;
}

MatF from_crs(const CrsMatrix& m) {
    m.validate();
    MatF dense(m.n_rows, m.n_cols);
    for (std::size_t r = 0; r < m.n_rows; ++r) {
        for (std::uint32_t i = m.row_ptr[r]; i < m.row_ptr[r + 1]; ++i) {
            dense.at(r, m.col_idx[i]) = m.values[i];
        }
    }
    return dense;
}

void crs_matvec(const CrsMatrix& m, std::span<const float> x, std::span<float> y) {
    if (x.size() != m.n_cols || y.size() != m.n_rows) {
        throw InputError("crs_matvec: dimension mismatch");
    }
    for (std::size_t r = 0; r < m.n_rows; ++r) {
        double acc = 0.0;
        for (std::uint32_t i = m.row_ptr[r]; i < m.row_ptr[r + 1]; ++i) {
            acc += static_cast<double>(m.values[i]) * static_cast<double>(x[m.col_idx[i]]);
        }
        y[r] = static_cast<float>(acc);
    }
}

void SparseRows::validate() const {
    if (row_ptr.size() != n_rows + 1 || (n_rows > 0 && row_ptr[0] != 0)) {
        throw ConfigError("sparse rows: bad row_ptr header");
    }
    if (col.size() != val.size() || (row_ptr.empty() ? 0 : row_ptr.back()) != val.size()) {
        throw ConfigError("sparse rows: index/value length mismatch");
    }
    if (n_cols > 255) throw ConfigError("sparse rows: more than 255 columns");
    for (std::uint64_t r = 0; r < n_rows; ++r) {
        if (row_ptr[r] > row_ptr[r + 1]) throw ConfigError("sparse rows: row_ptr not monotone");
        if (row_ptr[r + 1] - row_ptr[r] > 255) {
            throw ConfigError("sparse rows: row has more than 255 entries");
        }
        for (std::uint64_t i = row_ptr[r]; i < row_ptr[r + 1]; ++i) {
            if (col[i] >= n_cols) throw ConfigError("sparse rows: column out of range");
            if (i > row_ptr[r] && col[i] <= col[i - 1]) {
                throw ConfigError("sparse rows: columns not strictly increasing");
            }
        }
    }
}

SparseRows to_sparse_rows(const MatF& dense) {
    if (dense.cols > 255) {
        throw ConfigError("sparse rows support at most 255 columns, got " +
                          std::to_string(dense.cols));
    }
    SparseRows s;
    s.n_rows = dense.rows;
    s.n_cols = static_cast<std::uint32_t>(dense.cols);
    s.row_ptr.reserve(dense.rows + 1);
    s.row_ptr.push_back(0);
    for (std::size_t r = 0; r < dense.rows; ++r) {
        const float* row = dense.row(r);
        for (std::size_t c = 0; c < dense.cols; ++c) {
            if (row[c] != 0.0f) {
                s.col.push_back(static_cast<std::uint8_t>(c));
                s.val.push_back(row[c]);
            }
        }
        s.row_ptr.push_back(s.val.size());
    }
    return s;
}

MatF from_sparse_rows(const SparseRows& rows) {
    rows.validate();
    MatF dense(rows.n_rows, rows.n_cols);
    for (std::uint64_t r = 0; r < rows.n_rows; ++r) {
        for (std::uint64_t i = rows.row_ptr[r]; i < rows.row_ptr[r + 1]; ++i) {
            dense.at(r, rows.col[i]) = rows.val[i];
        }
    }
    return dense;
}

void SparseModel::validate() const {
    config.validate();
    if (!config.has_field_terms()) {
        throw ConfigError("sparse model: only fwfm and deepfwfm can be compiled");
    }
    if (config.n_fields > 65535) throw ConfigError("sparse model: too many fields");
    if (config.embed_dim > 255) throw ConfigError("sparse model: embed_dim above 255");
    const auto n = static_cast<std::size_t>(config.n_fields);
    const auto k = static_cast<std::size_t>(config.embed_dim);
    if (field_vectors.rows != n || field_vectors.cols != k) {
        throw ConfigError("sparse model: field_vectors shape mismatch");
    }
    embeddings.validate();
    if (embeddings.n_rows != config.n_features || embeddings.n_cols != k) {
        throw ConfigError("sparse model: embedding table shape mismatch");
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const FieldPair& p = pairs[i];
        if (p.f1 >= p.f2 || p.f2 >= n) throw ConfigError("sparse model: bad field pair");
        if (p.weight == 0.0f) throw ConfigError("sparse model: zero-weight pair stored");
        if (i > 0 && !(pairs[i - 1].f1 < p.f1 ||
                       (pairs[i - 1].f1 == p.f1 && pairs[i - 1].f2 < p.f2))) {
            throw ConfigError("sparse model: pairs not sorted");
        }
    }
    if (config.has_mlp()) {
        if (mlp_w.size() != config.mlp_widths.size() || mlp_b.size() != mlp_w.size()) {
            throw ConfigError("sparse model: mlp depth mismatch");
        }
        std::size_t in = n * k;
        for (std::size_t l = 0; l < mlp_w.size(); ++l) {
            mlp_w[l].validate();
            const auto width = static_cast<std::size_t>(config.mlp_widths[l]);
            if (mlp_w[l].n_rows != width || mlp_w[l].n_cols != in ||
                mlp_b[l].size() != width) {
                throw ConfigError("sparse model: mlp layer shape mismatch");
            }
            in = width;
        }
        out_w.validate();
        if (out_w.n_rows != 1 || out_w.n_cols != in) {
            throw ConfigError("sparse model: output layer shape mismatch");
        }
    } else if (!mlp_w.empty() || !mlp_b.empty() || out_w.n_rows != 0) {
        throw ConfigError("sparse model: unexpected mlp tensors");
    }
}

namespace {
MatF cast_to_float(const MatD& m) {
    MatF out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        out.data[i] = static_cast<float>(m.data[i]);
    }
    return out;
}
}  // namespace

SparseModel compile_sparse(const ModelParams& params, std::uint64_t dict_hash) {
    params.validate();
    if (!params.config.has_field_terms()) {
        throw ConfigError("compile_sparse: only fwfm and deepfwfm models can be compiled");
    }
    if (params.config.n_fields > 65535) {
        throw ConfigError("compile_sparse: more than 65535 fields");
    }
    if (params.config.embed_dim > 255) {
        throw ConfigError("compile_sparse: embed_dim above 255");
    }
    SparseModel m;
    m.config = params.config;
    m.dict_hash = dict_hash;
    m.w0 = static_cast<float>(params.w0);
    m.field_vectors = cast_to_float(params.field_vectors);
    m.embeddings = to_sparse_rows(cast_to_float(params.embeddings));
    const std::size_t n = params.field_matrix.rows;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto w = static_cast<float>(params.field_matrix.at(i, j));
            if (w != 0.0f) {
                m.pairs.push_back({static_cast<std::uint16_t>(i),
                                   static_cast<std::uint16_t>(j), w});
            }
        }
    }
    for (const DenseLayer& layer : params.mlp) {
        m.mlp_w.push_back(to_crs(cast_to_float(layer.w)));
        std::vector<float> b(layer.b.size());
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = static_cast<float>(layer.b[i]);
        m.mlp_b.push_back(std::move(b));
    }
    if (!params.out_w.empty()) {
        MatF row(1, params.out_w.size());
        for (std::size_t i = 0; i < params.out_w.size(); ++i) {
            row.data[i] = static_cast<float>(params.out_w[i]);
        }
        m.out_w = to_crs(row);
        m.out_b = static_cast<float>(params.out_b);
    }
    m.source_sparsity = sparsity_report(params);
    m.validate();
    return m;
}

ParamCounts compiled_param_counts(const SparseModel& m) {
    ParamCounts c;
    c.w0 = 1;
    c.embeddings = m.embeddings.nnz();
    for (float v : m.field_vectors.data) c.field_vectors += (v != 0.0f);
    c.field_matrix = m.pairs.size();
    for (const CrsMatrix& w : m.mlp_w) c.mlp_weights += w.nnz();
    c.mlp_weights += m.out_w.nnz();
    for (const auto& b : m.mlp_b) c.mlp_biases += b.size();
    if (m.out_w.n_rows == 1) c.mlp_biases += 1;
    return c;
}

double compiled_flops(const SparseModel& m) {
    const double n = m.config.n_fields;
    const double k = m.config.embed_dim;
    const double m_rows = static_cast<double>(m.embeddings.n_rows);
    // expected gather/scale work: n rows at the table's average density
    const double gather =
        m_rows == 0 ? 0.0 : n * static_cast<double>(m.embeddings.nnz()) / m_rows;
    const double linear = n * k;
    const double pairs = static_cast<double>(m.pairs.size()) * (k + 1.0);
    double dnn = 0.0;
    for (const CrsMatrix& w : m.mlp_w) dnn += static_cast<double>(w.nnz());
    dnn += static_cast<double>(m.out_w.nnz());
    return gather + linear + pairs + dnn;
}

SparseScorer::SparseScorer(const SparseModel& model) : model_(&model) {
    model.validate();
    gathered_.assign(static_cast<std::size_t>(model.config.n_fields) *
                         static_cast<std::size_t>(model.config.embed_dim),
                     0.0f);
    std::size_t widest = 0;
    for (int w : model.config.mlp_widths) widest = std::max(widest, static_cast<std::size_t>(w));
    act_a_.assign(widest, 0.0f);
    act_b_.assign(widest, 0.0f);
}

double SparseScorer::operator()(const Sample& s) {
    const SparseModel& m = *model_;
    const std::size_t n = s.idx.size();
    const std::size_t k = static_cast<std::size_t>(m.config.embed_dim);

    std::fill(gathered_.begin(), gathered_.end(), 0.0f);
    for (std::size_t f = 0; f < n; ++f) {
        const std::uint64_t row = s.idx[f];
        const auto x = static_cast<float>(s.val[f]);
        float* dst = gathered_.data() + f * k;
        for (std::uint64_t i = m.embeddings.row_ptr[row]; i < m.embeddings.row_ptr[row + 1];
             ++i) {
            dst[m.embeddings.col[i]] = x * m.embeddings.val[i];
        }
    }

    double z = m.w0;
    for (std::size_t f = 0; f < n; ++f) {
        const float* g = gathered_.data() + f * k;
        const float* v = m.field_vectors.row(f);
        double dot = 0.0;
        for (std::size_t d = 0; d < k; ++d) {
            dot += static_cast<double>(g[d]) * static_cast<double>(v[d]);
        }
        z += dot;
    }
    for (const FieldPair& p : m.pairs) {
        const float* a = gathered_.data() + static_cast<std::size_t>(p.f1) * k;
        const float* b = gathered_.data() + static_cast<std::size_t>(p.f2) * k;
        double dot = 0.0;
        for (std::size_t d = 0; d < k; ++d) {
            dot += static_cast<double>(a[d]) * static_cast<double>(b[d]);
        }
        z += static_cast<double>(p.weight) * dot;
    }

    if (!m.mlp_w.empty()) {
        std::span<const float> cur(gathered_);
        float* bufs[2] = {act_a_.data(), act_b_.data()};
        int which = 0;
        for (std::size_t l = 0; l < m.mlp_w.size(); ++l) {
            const CrsMatrix& w = m.mlp_w[l];
            std::span<float> out(bufs[which], w.n_rows);
            crs_matvec(w, cur, out);
            const std::vector<float>& bias = m.mlp_b[l];
            for (std::size_t o = 0; o < out.size(); ++o) {
                const float a = out[o] + bias[o];
                out[o] = a > 0.0f ? a : 0.0f;
            }
            cur = std::span<const float>(out.data(), out.size());
            which ^= 1;
        }
        double acc = static_cast<double>(m.out_b);
        for (std::uint32_t i = m.out_w.row_ptr[0]; i < m.out_w.row_ptr[1]; ++i) {
            acc += static_cast<double>(m.out_w.values[i]) *
                   static_cast<double>(cur[m.out_w.col_idx[i]]);
        }
        z += acc;
    }
    return z;
}

double sparse_forward(const Sample& s, const SparseModel& model) {
    SparseScorer scorer(model);
    return scorer(s);
}

}  // namespace ctrlite
