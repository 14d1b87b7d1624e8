#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctrlite/common.hpp"
#include "ctrlite/data.hpp"

namespace ctrlite {

enum class ModelKind { LR, FM, FwFM, DeepFwFM };

const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct ModelConfig {
    ModelKind kind = ModelKind::DeepFwFM;
    int n_fields = 0;               // n
    int embed_dim = 0;              // k; 0 only for LR
    std::uint64_t n_features = 0;   // m
    std::vector<int> mlp_widths;    // hidden widths, e.g. {400,400,400}
    double dropout_rate = 0.5;

    bool has_embeddings() const { return kind != ModelKind::LR; }
    bool has_field_terms() const {
        return kind == ModelKind::FwFM || kind == ModelKind::DeepFwFM;
    }
    bool has_mlp() const { return kind == ModelKind::DeepFwFM; }
    void validate() const;
};

struct DenseLayer {
    MatD w;                  // h_out x h_in
    std::vector<double> b;   // h_out
};

// All learnable tensors for every model kind; unused tensors stay empty.
// field_matrix is stored dense n x n but only the strict upper triangle is
// a parameter; the rest is always exactly zero.
struct ModelParams {
    ModelConfig config;
    double w0 = 0.0;
    std::vector<double> linear_w;   // m        (LR, FM)
    MatD embeddings;                // m x k    (FM, FwFM, DeepFwFM)
    MatD field_vectors;             // n x k    (FwFM, DeepFwFM)
    MatD field_matrix;              // n x n    (FwFM, DeepFwFM)
    std::vector<DenseLayer> mlp;    // hidden layers (DeepFwFM)
    std::vector<double> out_w;      // h_last   (DeepFwFM)
    double out_b = 0.0;

    void validate() const;  // shape congruence with config, finite values
};

// Which pruning component a tensor belongs to.
enum class PruneComponent { None, Dnn, FieldMatrix, Embedding };

// Flat view over one tensor, used by the optimizer, pruning, checkpoints
// and the finite-difference oracle.
struct TensorRef {
    std::string name;
    std::span<double> values;
    bool l2 = false;  // regularized (weights yes, biases and w0 no)
    PruneComponent component = PruneComponent::None;
};

std::vector<TensorRef> tensor_refs(ModelParams& p);

// Same-shaped zero parameters (gradient buffers, Adam accumulators).
ModelParams zeros_like(const ModelParams& p);

// Zero-valued parameters with the shapes the config implies.
ModelParams alloc_model(const ModelConfig& config);

// Random init: embeddings/linear/field tensors ~ N(0, init_std), MLP weights
// Glorot-uniform, biases zero.
ModelParams init_model(const ModelConfig& config, std::uint64_t seed, double init_std = 0.01);

// Scratch for the MLP forward; pre-activations are retained for backprop.
struct MlpWorkspace {
    std::vector<double> input;                 // n*k value-scaled embeddings
    std::vector<std::vector<double>> pre;      // per hidden layer
    std::vector<std::vector<double>> act;      // per hidden layer, post relu/dropout
    void resize(const ModelParams& p);
};

double forward_lr(const Sample& s, const ModelParams& p);
double forward_fm(const Sample& s, const ModelParams& p);
double forward_fwfm(const Sample& s, const ModelParams& p);

// ReLU hidden layers with inverted dropout on hidden activations when
// dropout_active; ws.input must already hold the n*k concatenation.
double forward_mlp(std::span<const double> input, const ModelParams& p, MlpWorkspace& ws,
                   bool dropout_active, Rng* rng);

double forward_deepfwfm(const Sample& s, const ModelParams& p, MlpWorkspace& ws,
                        bool dropout_active, Rng* rng);

// Inference-mode dispatch on config.kind (dropout off).
double forward(const Sample& s, const ModelParams& p, MlpWorkspace& ws);

// Allocation-free scorer for benchmarking and evaluation.
class DenseScorer {
public:
    explicit DenseScorer(const ModelParams& p);
    double operator()(const Sample& s) { return forward(s, *params_, ws_); }

private:
    const ModelParams* params_;
    MlpWorkspace ws_;
};

// Per-sample multiply-add estimates from the standard complexity formulas:
// shallow n^2*k (FwFM family), nk (FM), n (LR); DNN l*h^2 + n*k*h.
struct FlopsEstimate {
    double shallow = 0;
    double dnn = 0;
    double total() const { return shallow + dnn; }
};

FlopsEstimate flops_estimate(const ModelConfig& config);

// Reference totals for the three standard deep architectures at a given
// (n, k, l, h, h_c); h_c is the CIN layer width of xDeepFM.
struct ReferenceFlops {
    double deepfm = 0;
    double xdeepfm = 0;
    double deepfwfm = 0;
};

ReferenceFlops flops_reference(int n, int k, int l, int h, int h_c);

// Exact per-component parameter counts. The dense variant counts capacity
// from the config; the nonzero variant counts surviving weights (biases and
// w0 are dense by construction).
struct ParamCounts {
    std::uint64_t w0 = 0;
    std::uint64_t linear = 0;
    std::uint64_t embeddings = 0;
    std::uint64_t field_vectors = 0;
    std::uint64_t field_matrix = 0;  // used entries: n*(n-1)/2
    std::uint64_t mlp_weights = 0;   // includes the output weight row
    std::uint64_t mlp_biases = 0;    // includes the output bias
    std::uint64_t total() const {
        return w0 + linear + embeddings + field_vectors + field_matrix + mlp_weights +
               mlp_biases;
    }
    std::uint64_t weights_total() const { return total() - w0 - mlp_biases; }
};

ParamCounts count_parameters(const ModelConfig& config);
ParamCounts count_parameters(const ModelParams& params);  // nonzeros

}  // namespace ctrlite
