#include "stemgnn/model.hpp"

#include <algorithm>
#include <cmath>

#include "stemgnn/encoder.hpp"
#include "stemgnn/errors.hpp"
#include "stemgnn/kernels.hpp"
#include "stemgnn/vq.hpp"

namespace stemgnn {

uint64_t fnv1a64(const void* data, size_t len, uint64_t h) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

bool ModelConfig::is_moe_layer(int l) const {
  if (moe_layers.empty()) return l == num_layers - 1;
  return std::find(moe_layers.begin(), moe_layers.end(), l) != moe_layers.end();
}

void ModelState::visit(
    const std::function<void(const std::string&, Tensor&, TensorKind)>& fn) {
  for (int l = 0; l < cfg.num_layers; ++l) {
    LayerParams& p = layers[static_cast<size_t>(l)];
    std::string pre = "layer" + std::to_string(l) + ".";
    fn(pre + "psi_w", p.psi_w, TensorKind::kParam);
    fn(pre + "psi_b", p.psi_b, TensorKind::kParam);
    fn(pre + "router_w", p.router_w, TensorKind::kParam);
    fn(pre + "router_b", p.router_b, TensorKind::kParam);
    for (size_t k = 0; k < p.expert_w.size(); ++k) {
      fn(pre + "expert_w" + std::to_string(k), p.expert_w[k], TensorKind::kParam);
      fn(pre + "expert_b" + std::to_string(k), p.expert_b[k], TensorKind::kParam);
    }
    if (cfg.batchnorm) {
      fn(pre + "bn_gamma", p.bn_gamma, TensorKind::kParam);
      fn(pre + "bn_beta", p.bn_beta, TensorKind::kParam);
      fn(pre + "bn_mean", p.bn_mean, TensorKind::kBuffer);
      fn(pre + "bn_var", p.bn_var, TensorKind::kBuffer);
    }
  }
  fn("proj_w", proj_w, TensorKind::kParam);
  fn("proj_b", proj_b, TensorKind::kParam);
  fn("codebook", codebook, TensorKind::kParam);
  fn("head_w", head_w, TensorKind::kParam);
  fn("head_b", head_b, TensorKind::kParam);
  fn("dec_w", dec_w, TensorKind::kParam);
  fn("dec_b", dec_b, TensorKind::kParam);
}

void ModelState::visit(
    const std::function<void(const std::string&, const Tensor&, TensorKind)>& fn) const {
  const_cast<ModelState*>(this)->visit(
      [&](const std::string& n, Tensor& t, TensorKind k) { fn(n, t, k); });
}

uint64_t ModelState::state_hash() const {
  uint64_t h = 14695981039346656037ULL;
  visit([&](const std::string& name, const Tensor& t, TensorKind) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(t.data.data(), t.data.size() * sizeof(double), h);
  });
  return h;
}

uint64_t ModelState::codebook_hash() const {
  return fnv1a64(codebook.data.data(), codebook.data.size() * sizeof(double));
}

namespace {

// fan-in scaled uniform weights, zero biases
Tensor init_weight(int64_t in, int64_t out, RngStream& rng) {
  Tensor w({in, out});
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& v : w.data) v = (2.0 * rng.uniform() - 1.0) * bound;
  return w;
}

}  // namespace

ModelState init_model(const ModelConfig& cfg, uint64_t seed) {
  if (cfg.input_dim <= 0 || cfg.hidden_dim <= 0 || cfg.num_layers <= 0)
    throw ConfigError("model: input_dim, hidden_dim and num_layers must be positive");
  if (cfg.num_experts < 1) throw ConfigError("model: num_experts must be >= 1");
  if (!(cfg.tau > 0.0)) throw ConfigError("model: tau must be positive");
  if (cfg.codebook_size < 2) throw ConfigError("model: codebook needs at least 2 entries");
  for (int l : cfg.moe_layers)
    if (l < 0 || l >= cfg.num_layers) throw ConfigError("model: moe layer index out of range");

  ModelState s;
  s.cfg = cfg;
  RngStream rng(key_hash(seed, 0x1217));
  for (int l = 0; l < cfg.num_layers; ++l) {
    LayerParams p;
    int64_t din = cfg.layer_input_dim(l);
    int64_t h = cfg.hidden_dim;
    int k = cfg.experts_at(l);
    p.psi_w = init_weight(2 * din, h, rng);
    p.psi_b = Tensor({h});
    p.router_w = init_weight(din, k, rng);
    p.router_b = Tensor({static_cast<int64_t>(k)});
    for (int e = 0; e < k; ++e) {
      p.expert_w.push_back(init_weight(h, h, rng));
      p.expert_b.push_back(Tensor({h}));
    }
    p.bn_gamma = Tensor({h}, 1.0);
    p.bn_beta = Tensor({h});
    p.bn_mean = Tensor({h});
    p.bn_var = Tensor({h}, 1.0);
    s.layers.push_back(std::move(p));
  }
  s.proj_w = init_weight(cfg.hidden_dim, cfg.code_dim, rng);
  s.proj_b = Tensor({cfg.code_dim});
  s.codebook = Tensor({cfg.codebook_size, cfg.code_dim});
  for (auto& v : s.codebook.data) v = rng.normal();
  int64_t classes = std::max<int64_t>(1, cfg.num_classes);
  s.head_w = init_weight(cfg.code_dim, classes, rng);
  s.head_b = Tensor({classes});
  s.dec_w = init_weight(cfg.code_dim, cfg.input_dim, rng);
  s.dec_b = Tensor({cfg.input_dim});
  return s;
}

void init_codebook_from_batch(ModelState& state, const Tensor& u, uint64_t seed) {
  int64_t m = state.cfg.codebook_size;
  RngStream rng(key_hash(seed, 0xc0de));
  if (u.shape[0] < m) {
    for (auto& v : state.codebook.data) v = rng.normal();
  } else {
    // sample M distinct rows
    std::vector<int64_t> perm(static_cast<size_t>(u.shape[0]));
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int64_t>(i);
    for (size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1], perm[static_cast<size_t>(rng.next_u64() % i)]);
    for (int64_t j = 0; j < m; ++j)
      for (int64_t t = 0; t < state.cfg.code_dim; ++t)
        state.codebook.at(j, t) = u.at(perm[static_cast<size_t>(j)], t);
  }
  state.codebook_initialized = true;
}

Var LeafMap::find(const std::string& name) const {
  for (const auto& [n, v] : items)
    if (n == name) return v;
  throw ConfigError("parameter not registered: " + name);
}

LeafMap register_params(Tape& tape, ModelState& state,
                        const std::function<bool(const std::string&)>& trainable) {
  LeafMap m;
  state.visit([&](const std::string& name, Tensor& t, ModelState::TensorKind kind) {
    if (kind != ModelState::TensorKind::kParam) return;
    m.items.emplace_back(name, tape.input(t, trainable(name)));
  });
  return m;
}

ForwardResult model_forward(Tape& tape, const Graph& g, ModelState& state, Mode mode,
                            RngStream& rng,
                            const std::function<bool(const std::string&)>& trainable) {
  ForwardResult res;
  res.leaves = register_params(tape, state, trainable);
  EncodeResult enc = encode(tape, g, state, mode, rng, res.leaves);
  res.h = enc.h;
  res.routings = std::move(enc.routings);
  res.u = tape.add_rowvec(tape.matmul(res.h, res.leaves.find("proj_w")),
                          res.leaves.find("proj_b"));
  if (state.cfg.vq_enabled) {
    Quantization q = quantize_rows(tape.value(res.u), state.codebook);
    res.token_indices = q.indices;
    res.token_margins = q.margins;
    res.head_in = tape.straight_through(res.u, state.codebook, q.indices);
  } else {
    res.head_in = res.u;
  }
  res.logits = tape.add_rowvec(tape.matmul(res.head_in, res.leaves.find("head_w")),
                               res.leaves.find("head_b"));
  return res;
}

Tensor predict_logits(ModelState& state, const Graph& g) {
  Tape tape;
  RngStream rng(0);
  auto none = [](const std::string&) { return false; };
  ForwardResult r = model_forward(tape, g, state, Mode::kDeploy, rng, none);
  if (rng.counter() != 0) throw ContractViolation("deploy forward consumed randomness");
  return tape.value(r.logits);
}

std::vector<int32_t> predict_classes(ModelState& state, const Graph& g) {
  Tensor logits = predict_logits(state, g);
  std::vector<int32_t> out(static_cast<size_t>(logits.shape[0]));
  for (int64_t i = 0; i < logits.shape[0]; ++i) {
    int32_t best = 0;
    for (int64_t j = 1; j < logits.shape[1]; ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = static_cast<int32_t>(j);
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

double accuracy(ModelState& state, const Graph& g, const std::vector<int32_t>& nodes) {
  if (nodes.empty()) throw ConfigError("accuracy: empty node set");
  std::vector<int32_t> pred = predict_classes(state, g);
  int64_t correct = 0, total = 0;
  for (int32_t v : nodes) {
    if (g.labels[static_cast<size_t>(v)] < 0) continue;
    ++total;
    if (pred[static_cast<size_t>(v)] == g.labels[static_cast<size_t>(v)]) ++correct;
  }
  if (total == 0) throw ConfigError("accuracy: no labeled nodes in set");
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace stemgnn
