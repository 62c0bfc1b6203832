#pragma once

#include <vector>

#include "stemgnn/graph.hpp"
#include "stemgnn/model.hpp"
#include "stemgnn/tape.hpp"

namespace stemgnn {

// One routing distribution per node; rows live on the simplex.
Var route(Tape& tape, Var h, const LayerParams& p, const LeafMap& leaves, int layer,
          Mode mode, double tau, RngStream& rng);

// z_v = psi(concat(h_v, mean of neighbor rows)); isolated nodes aggregate zero.
Var neighborhood_summary(Tape& tape, const Graph& g, Var h, const LeafMap& leaves,
                         int layer);

// Pre-activation mixture of the expert transforms, then the rectifier.
Var moe_update(Tape& tape, Var z, Var routing, const LeafMap& leaves, int layer,
               int num_experts);

// The routed affine map sum_k pi_k (W_k, b_k) for one node's routing row.
std::pair<Tensor, Tensor> effective_operator(const Tensor& routing_row,
                                             const LayerParams& p);

struct EncodeResult {
  Var h;
  std::vector<Var> routings;
};

// Stacks all layers: dropout (train) -> route -> summary -> mixture -> batchnorm.
// Throws NumericError naming the layer if activations go non-finite.
EncodeResult encode(Tape& tape, const Graph& g, ModelState& state, Mode mode,
                    RngStream& rng, const LeafMap& leaves);

}  // namespace stemgnn
