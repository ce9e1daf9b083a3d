#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "dolfin/matrix.hpp"
#include "dolfin/subspace.hpp"

namespace dolfin {

struct BackboneConfig {
    int embed_dim = 32;
    int num_layers = 2;
    int num_tokens = 5;  // including one class token
    int input_dim = 16;
    int mlp_hidden = 0;  // 0 means 2 * embed_dim

    int patch_dim() const { return input_dim / (num_tokens - 1); }
    int hidden() const { return mlp_hidden > 0 ? mlp_hidden : 2 * embed_dim; }
    void validate() const;
};

struct LayerWeights {
    DenseMatrix wq, wk, wv, wo;  // d x d
    DenseMatrix w1;              // hidden x d
    DenseMatrix w2;              // d x hidden
};

// Frozen random stand-in for a pretrained encoder stack.
struct Backbone {
    BackboneConfig cfg;
    std::vector<LayerWeights> layers;
    DenseMatrix patch_embed;          // d x patch_dim
    std::vector<double> class_token;  // d
};

Backbone init_backbone(const BackboneConfig& cfg, std::uint64_t seed);

// Order-sensitive hash over every frozen tensor, for immutability checks.
std::uint64_t backbone_checksum(const Backbone& b);

struct LoraAdapter {
    DenseMatrix a;  // d x r, frozen, orthonormal columns
    DenseMatrix b;  // r x d, trainable
};

struct LayerAdapters {
    LoraAdapter key;
    LoraAdapter value;
};

struct ModelState {
    std::shared_ptr<const Backbone> backbone;
    std::vector<DenseMatrix> merged_delta_k;  // d x d per layer
    std::vector<DenseMatrix> merged_delta_v;
    std::vector<LayerAdapters> adapters;  // valid only when has_adapters
    bool has_adapters = false;
    DenseMatrix head;  // classes_seen x d
    int task_index = 0;
    std::vector<int> classes_per_task;

    int classes_seen() const { return head.rows(); }
};

ModelState make_model(std::shared_ptr<const Backbone> backbone);

// Installs frozen A bases (B starts at zero) and grows the head.
ModelState begin_task(const ModelState& model,
                      const std::vector<std::pair<DenseMatrix, DenseMatrix>>& a_bases,
                      int new_classes);

// Offers every token embedding entering the K/V projections to per-layer
// reservoir buffers.
struct CaptureSink {
    // One buffer per (layer, projection).
    std::vector<std::array<ActivationBuffer, 2>> buffers;

    CaptureSink() = default;
    CaptureSink(int num_layers, int dim, int cap, std::uint64_t seed);
    void offer(int layer, const std::vector<double>& column);
    void clear();
};

// batch is one input per row (N x input_dim); returns N x classes_seen logits.
DenseMatrix forward(const ModelState& model, const DenseMatrix& batch,
                    CaptureSink* capture = nullptr);

struct GradientSet {
    std::vector<DenseMatrix> db_k;  // r x d per layer
    std::vector<DenseMatrix> db_v;
    DenseMatrix d_head;  // active classes x d
    double loss = 0.0;
};

// Mean cross-entropy over logits restricted to [class_lo, class_hi), with
// exact reverse-mode gradients for every trainable tensor.
GradientSet loss_and_grads(const ModelState& model, const DenseMatrix& batch,
                           const std::vector<int>& labels, int class_lo, int class_hi,
                           CaptureSink* capture = nullptr);

struct AdamWParams {
    double lr_adapter = 1e-3;
    double lr_head = 1e-2;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    std::vector<DenseMatrix> m_bk, v_bk, m_bv, v_bv;
    DenseMatrix m_head, v_head;  // active classes x d
    long step = 0;

    static OptimizerState fresh(const ModelState& model, int active_classes);
};

// One decoupled-weight-decay AdamW step over the B matrices and the active
// head rows [class_lo, class_lo + grads.d_head.rows()).
void apply_adamw(ModelState& model, const GradientSet& grads, OptimizerState& opt,
                 const AdamWParams& p, int class_lo);

// Folds A*B into the dense merged deltas and clears the current adapters.
ModelState merge_current_task(const ModelState& model);

}  // namespace dolfin
