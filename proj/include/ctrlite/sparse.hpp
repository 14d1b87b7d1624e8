#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ctrlite/model.hpp"
#include "ctrlite/pruning.hpp"

namespace ctrlite {

// Compressed row storage. Values are 32-bit floats, the serving precision.
struct CrsMatrix {
    std::uint32_t n_rows = 0;
    std::uint32_t n_cols = 0;
    std::vector<std::uint32_t> row_ptr;  // n_rows + 1, row_ptr[0] = 0
    std::vector<std::uint32_t> col_idx;  // strictly increasing within a row
    std::vector<float> values;

    std::size_t nnz() const { return values.size(); }
    void validate() const;

    bool operator==(const CrsMatrix&) const = default;
};

CrsMatrix to_crs(const MatF& dense);
MatF from_crs(const CrsMatrix& m);

// y = M x; accumulates in double. Throws InputError on dimension mismatch.
void crs_matvec(const CrsMatrix& m, std::span<const float> x, std::span<float> y);

// Surviving field pair (f1 < f2) with its R weight; sorted by (f1, f2).
struct FieldPair {
    std::uint16_t f1 = 0;
    std::uint16_t f2 = 0;
    float weight = 0;

    bool operator==(const FieldPair&) const = default;
};

// Per-row (column, value) lists for the pruned embedding table. Column
// indices are uint8, so embed_dim must be <= 255.
struct SparseRows {
    std::uint64_t n_rows = 0;
    std::uint32_t n_cols = 0;
    std::vector<std::uint64_t> row_ptr;  // n_rows + 1
    std::vector<std::uint8_t> col;
    std::vector<float> val;

    std::size_t nnz() const { return val.size(); }
    void validate() const;

    bool operator==(const SparseRows&) const = default;
};

SparseRows to_sparse_rows(const MatF& dense);
MatF from_sparse_rows(const SparseRows& rows);

// Compiled serving model for the FwFM family. Immutable after compilation;
// shareable across concurrent scorers.
struct SparseModel {
    ModelConfig config;
    std::uint64_t dict_hash = 0;
    float w0 = 0;
    MatF field_vectors;                     // n x k dense
    SparseRows embeddings;                  // m x k sparse rows
    std::vector<FieldPair> pairs;           // nonzero upper-triangle of R
    std::vector<CrsMatrix> mlp_w;           // hidden layers
    std::vector<std::vector<float>> mlp_b;  // dense biases
    CrsMatrix out_w;                        // 1 x h_last
    float out_b = 0;
    SparsityReport source_sparsity;         // recorded at compile time

    void validate() const;
};

// Builds CRS layers, the pair list from R, and sparse embedding rows from a
// pruned FwFM/DeepFwFM model. Values are cast to float32.
SparseModel compile_sparse(const ModelParams& params, std::uint64_t dict_hash = 0);

// Nonzero counts of the compiled structures (matches sparsity_report of the
// source model on the prunable components).
ParamCounts compiled_param_counts(const SparseModel& m);

// Effective per-sample multiply-adds of the compiled model: pair list,
// surviving MLP weights, embedding gather.
double compiled_flops(const SparseModel& m);

// Allocation-free sparse forward. One scorer per thread.
class SparseScorer {
public:
    explicit SparseScorer(const SparseModel& model);
    double operator()(const Sample& s);

private:
    const SparseModel* model_;
    std::vector<float> gathered_;  // n x k value-scaled embedding rows
    std::vector<float> act_a_, act_b_;
};

// Convenience wrapper over SparseScorer for one-off calls.
double sparse_forward(const Sample& s, const SparseModel& model);

}  // namespace ctrlite
