#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stemgnn/graph.hpp"
#include "stemgnn/tape.hpp"
#include "stemgnn/tensor.hpp"

namespace stemgnn {

enum class Mode { kTrain, kDeploy };

struct ModelConfig {
  int num_layers = 2;
  int64_t input_dim = 0;
  int64_t hidden_dim = 768;
  int num_experts = 3;          // K on MoE layers; other layers use a single transform
  std::vector<int> moe_layers;  // empty -> last layer only
  double tau = 1.0;
  double dropout = 0.0;
  bool batchnorm = true;
  int64_t code_dim = 768;       // token dimension
  int64_t codebook_size = 128;
  int32_t num_classes = 0;
  bool vq_enabled = true;       // false = identity interface, head consumes u directly
  double commitment_beta = 0.25;

  bool is_moe_layer(int l) const;
  int experts_at(int l) const { return is_moe_layer(l) ? num_experts : 1; }
  int64_t layer_input_dim(int l) const { return l == 0 ? input_dim : hidden_dim; }
};

struct LayerParams {
  Tensor psi_w, psi_b;        // summary transform on concat(self, aggregate)
  Tensor router_w, router_b;  // acts on the pre-summary representation
  std::vector<Tensor> expert_w, expert_b;
  Tensor bn_gamma, bn_beta;
  Tensor bn_mean, bn_var;     // running statistics (buffers, not parameters)
};

struct ModelState {
  ModelConfig cfg;
  std::vector<LayerParams> layers;
  Tensor proj_w, proj_b;  // hidden -> code_dim
  Tensor codebook;        // codebook_size x code_dim
  bool codebook_frozen = false;
  bool codebook_initialized = false;
  Tensor head_w, head_b;  // code_dim -> num_classes
  Tensor dec_w, dec_b;    // code_dim -> input_dim, used by the pretraining objective

  enum class TensorKind { kParam, kBuffer };
  void visit(const std::function<void(const std::string&, Tensor&, TensorKind)>& fn);
  void visit(const std::function<void(const std::string&, const Tensor&, TensorKind)>& fn) const;
  uint64_t state_hash() const;
  uint64_t codebook_hash() const;
};

ModelState init_model(const ModelConfig& cfg, uint64_t seed);

// Initializes the codebook from distinct rows of a projected-embedding batch; falls
// back to unit Gaussian entries when the batch has fewer rows than the codebook.
void init_codebook_from_batch(ModelState& state, const Tensor& u, uint64_t seed);

struct LeafMap {
  std::vector<std::pair<std::string, Var>> items;
  Var find(const std::string& name) const;
};

// Registers every parameter tensor as a tape leaf; `trainable` decides requires_grad.
LeafMap register_params(Tape& tape, ModelState& state,
                        const std::function<bool(const std::string&)>& trainable);

struct ForwardResult {
  Var h;                      // encoder output [n, hidden]
  Var u;                      // projected embeddings [n, code_dim]
  Var head_in;                // tokens under VQ, u itself when vq is disabled
  Var logits;                 // [n, num_classes]
  std::vector<Var> routings;  // one [n, K_l] per layer
  std::vector<int32_t> token_indices;
  std::vector<double> token_margins;
  LeafMap leaves;
};

// Full pipeline: encode -> project -> (quantize with straight-through) -> head.
// Train mode applies dropout, Gumbel routing and batch statistics (running stats
// updated in place); deploy mode is deterministic and consumes no randomness.
ForwardResult model_forward(Tape& tape, const Graph& g, ModelState& state, Mode mode,
                            RngStream& rng,
                            const std::function<bool(const std::string&)>& trainable);

// Deploy-mode logits with no gradient bookkeeping.
Tensor predict_logits(ModelState& state, const Graph& g);
std::vector<int32_t> predict_classes(ModelState& state, const Graph& g);
double accuracy(ModelState& state, const Graph& g, const std::vector<int32_t>& nodes);

uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 14695981039346656037ULL);

}  // namespace stemgnn
