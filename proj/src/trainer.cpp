#include "stemgnn/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "stemgnn/errors.hpp"
#include "stemgnn/kernels.hpp"
#include "stemgnn/vq.hpp"

namespace stemgnn {

void AdamW::step(const std::string& name, Tensor& param, const Tensor& grad) {
  if (grad.numel() == 0) return;  // no gradient flowed; decoupled decay also skipped
  auto it = moments_.find(name);
  if (it == moments_.end())
    it = moments_.emplace(name, std::make_pair(Tensor(param.shape), Tensor(param.shape)))
             .first;
  Tensor& m = it->second.first;
  Tensor& v = it->second.second;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  int64_t n = param.numel();
  for (int64_t i = 0; i < n; ++i) {
    double g = grad.data[static_cast<size_t>(i)];
    double& mi = m.data[static_cast<size_t>(i)];
    double& vi = v.data[static_cast<size_t>(i)];
    mi = beta1_ * mi + (1.0 - beta1_) * g;
    vi = beta2_ * vi + (1.0 - beta2_) * g * g;
    double mhat = mi / bc1;
    double vhat = vi / bc2;
    double& w = param.data[static_cast<size_t>(i)];
    w -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * w);
  }
}

namespace {

void apply_grads(AdamW& opt, ModelState& state, Tape& tape, const LeafMap& leaves) {
  opt.begin_step();
  for (const auto& [name, var] : leaves.items) {
    if (!tape.requires_grad(var)) continue;
    const Tensor& g = tape.grad(var);
    std::string n = name;
    state.visit([&](const std::string& pname, Tensor& pt, ModelState::TensorKind kind) {
      if (kind == ModelState::TensorKind::kParam && pname == n) opt.step(n, pt, g);
    });
  }
}

std::vector<std::pair<int32_t, int32_t>> sample_negative_pairs(const Graph& g,
                                                               int64_t count,
                                                               RngStream& rng) {
  std::vector<std::pair<int32_t, int32_t>> out;
  out.reserve(static_cast<size_t>(count));
  int64_t guard = 0;
  while (static_cast<int64_t>(out.size()) < count && guard < 100 * count + 100) {
    ++guard;
    auto u = static_cast<int32_t>(rng.next_u64() % static_cast<uint64_t>(g.n));
    auto v = static_cast<int32_t>(rng.next_u64() % static_cast<uint64_t>(g.n));
    if (u == v || g.has_edge(u, v)) continue;
    out.emplace_back(u, v);
  }
  return out;
}

}  // namespace

PretrainLog pretrain(const std::vector<Graph>& corpus, const PretrainConfig& cfg,
                     ModelState& state) {
  if (corpus.empty()) throw ConfigError("pretrain: corpus must be nonempty");
  if (cfg.epochs < 1) throw ConfigError("pretrain: epochs must be >= 1");
  if (cfg.aug_drop_rate < 0 || cfg.aug_drop_rate > 1 || cfg.link_fraction < 0 ||
      cfg.link_fraction > 1)
    throw ConfigError("pretrain: rates must lie in [0,1]");

  PretrainLog log;
  state.cfg.tau = cfg.tau;
  state.cfg.commitment_beta = cfg.beta;
  AdamW opt(cfg.lr, cfg.weight_decay);
  auto trainable = [&](const std::string& name) {
    if (name.rfind("head_", 0) == 0) return false;  // the task head is not pretrained
    if (name == "codebook") return !state.codebook_frozen;
    return true;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (size_t gi = 0; gi < corpus.size(); ++gi) {
      const Graph& clean = corpus[gi];
      uint64_t step_key = key_hash(cfg.seed, 0xdeca, static_cast<uint64_t>(epoch),
                                   static_cast<uint64_t>(gi));
      // augmentation: drop edges and mask features at the same rate
      std::vector<int32_t> all_nodes(static_cast<size_t>(clean.n));
      for (int64_t i = 0; i < clean.n; ++i) all_nodes[static_cast<size_t>(i)] = static_cast<int32_t>(i);
      PerturbationBudget aug;
      aug.eval_nodes = all_nodes;
      aug.seed = step_key;
      aug.edge_drop_rate = cfg.aug_drop_rate;
      aug.feature_mask_rate = cfg.aug_drop_rate;
      Graph augmented = drop_edges(clean, aug);
      Tensor mask = feature_mask_indicator(clean, aug);
      augmented = mask_features(augmented, aug);

      Tape tape;
      RngStream rng(key_hash(step_key, 0xf02d));
      ForwardResult fw = model_forward(tape, augmented, state, Mode::kTrain, rng, trainable);

      if (!state.codebook_initialized) {
        init_codebook_from_batch(state, tape.value(fw.u), cfg.seed);
        // rebuild so tokens come from the initialized codebook
        tape.clear();
        rng.set_state(key_hash(step_key, 0xf02d), 0);
        fw = model_forward(tape, augmented, state, Mode::kTrain, rng, trainable);
      }

      Var loss;
      if (state.cfg.vq_enabled) {
        loss = vq_loss(tape, fw.u, fw.leaves.find("codebook"), fw.token_indices, cfg.beta);
      }
      // feature-level signal: reconstruct the masked entries of the clean features
      Var dec = tape.add_rowvec(tape.matmul(fw.head_in, fw.leaves.find("dec_w")),
                                fw.leaves.find("dec_b"));
      Var feat_loss = tape.masked_sq_error(dec, clean.features, mask);
      loss = loss.valid() ? tape.add(loss, feat_loss) : feat_loss;
      // structure-level signal: logistic loss on tokenized-embedding inner products
      auto edges = clean.undirected_edges();
      int64_t n_pos = static_cast<int64_t>(
          std::floor(cfg.link_fraction * static_cast<double>(edges.size())));
      if (n_pos > 0) {
        RngStream link_rng(key_hash(step_key, 0x117c));
        for (size_t i = edges.size(); i > 1; --i)
          std::swap(edges[i - 1], edges[static_cast<size_t>(link_rng.next_u64() % i)]);
        int64_t n_neg = static_cast<int64_t>(
            std::llround(cfg.negative_ratio * static_cast<double>(n_pos)));
        auto negs = sample_negative_pairs(clean, n_neg, link_rng);
        std::vector<int32_t> us, vs;
        Tensor targets({n_pos + static_cast<int64_t>(negs.size()), 1});
        for (int64_t i = 0; i < n_pos; ++i) {
          us.push_back(edges[static_cast<size_t>(i)].first);
          vs.push_back(edges[static_cast<size_t>(i)].second);
          targets.at(i, 0) = 1.0;
        }
        for (const auto& [u, v] : negs) {
          us.push_back(u);
          vs.push_back(v);
        }
        Var scores = tape.rows_dot(tape.gather_rows(fw.head_in, us),
                                   tape.gather_rows(fw.head_in, vs));
        loss = tape.add(loss, tape.sigmoid_bce_logits(scores, std::move(targets)));
        log.planned_link_samples += n_pos;
        log.planned_semantic_samples +=
            static_cast<int64_t>(std::llround(cfg.gamma_semantic * static_cast<double>(n_pos)));
      }

      double lv = tape.value(loss).data[0];
      if (!std::isfinite(lv))
        throw NumericError("pretrain: loss diverged at epoch " + std::to_string(epoch));
      epoch_loss += lv;
      tape.backward(loss);
      apply_grads(opt, state, tape, fw.leaves);
    }
    log.epoch_loss.push_back(epoch_loss);
  }
  return log;
}

FinetuneResult finetune(const Graph& g, const Split& split, const FinetuneConfig& cfg,
                        ModelState& state) {
  if (split.train.empty()) throw ConfigError("finetune: empty train split");
  if (cfg.patience > cfg.epochs)
    throw ConfigError("finetune: patience must not exceed epochs");
  for (int32_t v : split.train)
    if (g.labels[static_cast<size_t>(v)] < 0)
      throw ConfigError("finetune: unlabeled node in train split");

  state.cfg.tau = cfg.tau;
  state.cfg.dropout = cfg.dropout;
  if (state.cfg.num_classes <= 0)
    throw ConfigError("finetune: model has no classes configured");

  if (state.cfg.vq_enabled && cfg.freeze_vq) {
    if (!state.codebook_initialized) {
      // from-scratch path: pin the interface to the initial embedding geometry
      Tape tape;
      RngStream rng(0);
      auto none = [](const std::string&) { return false; };
      ForwardResult fw = model_forward(tape, g, state, Mode::kDeploy, rng, none);
      init_codebook_from_batch(state, tape.value(fw.u), cfg.seed);
    }
    state.codebook_frozen = true;
  }
  uint64_t frozen_cb_hash = state.codebook_hash();

  auto trainable = [&](const std::string& name) {
    if (name == "codebook") return !(cfg.freeze_vq || state.codebook_frozen);
    if (name.rfind("proj_", 0) == 0) return !cfg.freeze_vq;
    if (name.rfind("dec_", 0) == 0) return false;
    return true;
  };

  AdamW opt(cfg.lr, cfg.weight_decay);
  FinetuneResult res;
  ModelState best_state = state;
  std::vector<int32_t> train_labels;
  for (int32_t v : split.train) train_labels.push_back(g.labels[static_cast<size_t>(v)]);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape tape;
    RngStream rng(key_hash(cfg.seed, 0xf17e, static_cast<uint64_t>(epoch)));
    ForwardResult fw = model_forward(tape, g, state, Mode::kTrain, rng, trainable);
    Var picked = tape.gather_rows(fw.logits, split.train);
    Var loss = tape.cross_entropy_logits(picked, train_labels);
    if (cfg.lambda_lip > 0.0)
      loss = tape.add(loss,
                      tape.scale(tape.frobenius_sq(fw.leaves.find("head_w")), cfg.lambda_lip));
    double lv = tape.value(loss).data[0];
    if (!std::isfinite(lv))
      throw NumericError("finetune: loss diverged at epoch " + std::to_string(epoch));
    tape.backward(loss);
    apply_grads(opt, state, tape, fw.leaves);

    double val_acc = split.val.empty() ? 0.0 : accuracy(state, g, split.val);
    res.val_curve.push_back(val_acc);
    if (res.best_epoch < 0 || val_acc > res.best_val) {  // ties keep the earliest epoch
      res.best_val = val_acc;
      res.best_epoch = epoch;
      best_state = state;
    }
    if (cfg.patience > 0 && epoch - res.best_epoch >= cfg.patience) break;
  }
  state = best_state;
  if (state.cfg.vq_enabled && cfg.freeze_vq && state.codebook_hash() != frozen_cb_hash)
    throw ContractViolation("finetune: frozen codebook changed during training");
  if (!split.test.empty()) res.test_acc = accuracy(state, g, split.test);
  return res;
}

}  // namespace stemgnn
