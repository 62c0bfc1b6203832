#include "stemgnn/encoder.hpp"

#include <cmath>

#include "stemgnn/errors.hpp"
#include "stemgnn/kernels.hpp"

namespace stemgnn {

namespace {

std::string pname(int layer, const char* what, int k = -1) {
  std::string s = "layer" + std::to_string(layer) + "." + what;
  if (k >= 0) s += std::to_string(k);
  return s;
}

Var affine(Tape& t, Var x, Var w, Var b) {
  return t.add_rowvec(t.matmul(x, w), b);
}

}  // namespace

Var route(Tape& tape, Var h, const LayerParams& /*p*/, const LeafMap& leaves, int layer,
          Mode mode, double tau, RngStream& rng) {
  Var logits = affine(tape, h, leaves.find(pname(layer, "router_w")),
                      leaves.find(pname(layer, "router_b")));
  if (mode == Mode::kTrain) return tape.gumbel_softmax_sample(logits, tau, rng);
  return tape.softmax_rows(logits);
}

Var neighborhood_summary(Tape& tape, const Graph& g, Var h, const LeafMap& leaves,
                         int layer) {
  // phi = identity, psi = affine on the concatenation of self and mean aggregate
  Var agg = tape.neighbor_mean(h, g.csr_offsets, g.csr_targets);
  Var cat = tape.concat_cols(h, agg);
  return affine(tape, cat, leaves.find(pname(layer, "psi_w")),
                leaves.find(pname(layer, "psi_b")));
}

Var moe_update(Tape& tape, Var z, Var routing, const LeafMap& leaves, int layer,
               int num_experts) {
  Var mix;
  for (int k = 0; k < num_experts; ++k) {
    Var ek = affine(tape, z, leaves.find(pname(layer, "expert_w", k)),
                    leaves.find(pname(layer, "expert_b", k)));
    Var weighted = tape.mul_colvec(ek, tape.slice_col(routing, k));
    mix = mix.valid() ? tape.add(mix, weighted) : weighted;
  }
  return tape.relu(mix);
}

std::pair<Tensor, Tensor> effective_operator(const Tensor& routing_row,
                                             const LayerParams& p) {
  int k = static_cast<int>(p.expert_w.size());
  if (routing_row.numel() != k)
    throw DimensionError("effective_operator: routing length must equal expert count");
  Tensor w(p.expert_w[0].shape), b(p.expert_b[0].shape);
  for (int i = 0; i < k; ++i) {
    kernels::axpy_inplace(w, routing_row.at(i), p.expert_w[static_cast<size_t>(i)]);
    kernels::axpy_inplace(b, routing_row.at(i), p.expert_b[static_cast<size_t>(i)]);
  }
  return {std::move(w), std::move(b)};
}

EncodeResult encode(Tape& tape, const Graph& g, ModelState& state, Mode mode,
                    RngStream& rng, const LeafMap& leaves) {
  const ModelConfig& cfg = state.cfg;
  if (g.feature_dim() != cfg.input_dim)
    throw DimensionError("encode: graph feature dim " + std::to_string(g.feature_dim()) +
                         " does not match configured input dim " +
                         std::to_string(cfg.input_dim));
  EncodeResult res;
  Var h = tape.constant(g.features);
  for (int l = 0; l < cfg.num_layers; ++l) {
    if (mode == Mode::kTrain && cfg.dropout > 0.0) {
      const Tensor& hv = tape.value(h);
      Tensor mask(hv.shape);
      double keep = 1.0 - cfg.dropout;
      double inv = keep > 0.0 ? 1.0 / keep : 0.0;
      for (auto& m : mask.data) m = rng.uniform() < cfg.dropout ? 0.0 : inv;
      h = tape.mul(h, tape.constant(std::move(mask)));
    }
    Var pi = route(tape, h, state.layers[static_cast<size_t>(l)], leaves, l, mode,
                   cfg.tau, rng);
    res.routings.push_back(pi);
    Var z = neighborhood_summary(tape, g, h, leaves, l);
    Var out = moe_update(tape, z, pi, leaves, l, cfg.experts_at(l));
    if (cfg.batchnorm) {
      LayerParams& p = state.layers[static_cast<size_t>(l)];
      Var gamma = leaves.find(pname(l, "bn_gamma"));
      Var beta = leaves.find(pname(l, "bn_beta"));
      if (mode == Mode::kTrain) {
        Tensor bmean, bvar;
        out = tape.batchnorm_train(out, gamma, beta, 1e-5, &bmean, &bvar);
        // running statistics with momentum 0.9
        for (int64_t j = 0; j < p.bn_mean.numel(); ++j) {
          p.bn_mean.at(j) = 0.9 * p.bn_mean.at(j) + 0.1 * bmean.at(0, j);
          p.bn_var.at(j) = 0.9 * p.bn_var.at(j) + 0.1 * bvar.at(0, j);
        }
      } else {
        out = tape.batchnorm_eval(out, gamma, beta, p.bn_mean, p.bn_var, 1e-5);
      }
    }
    for (double v : tape.value(out).data)
      if (!std::isfinite(v))
        throw NumericError("encode: non-finite activation in layer " + std::to_string(l));
    h = out;
  }
  res.h = h;
  return res;
}

}  // namespace stemgnn
