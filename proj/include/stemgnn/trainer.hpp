#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stemgnn/graph.hpp"
#include "stemgnn/model.hpp"

namespace stemgnn {

struct PretrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-5;
  int epochs = 25;
  int64_t batch_size = 1024;   // graphs per step for multi-graph corpora; node-level
                               // graphs train full-graph
  double aug_drop_rate = 0.2;  // edge and feature drop augmentation
  double link_fraction = 0.1;
  double negative_ratio = 1.0;
  double gamma_semantic = 1.0;  // sampling-count bookkeeping only
  double beta = 0.25;           // commitment weight
  double tau = 1.0;
  uint64_t seed = 0;
};

struct FinetuneConfig {
  double lr = 7.5e-3;
  double weight_decay = 0.0;
  int epochs = 1000;
  int patience = 200;  // early stopping on validation accuracy
  double tau = 0.9;
  double dropout = 0.80;
  double lambda_lip = 2.5e-5;
  uint64_t seed = 0;
  bool freeze_vq = true;
};

struct Split {
  std::vector<int32_t> train, val, test;
};

// Adaptive moments with decoupled weight decay.
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::string& name, Tensor& param, const Tensor& grad);
  void begin_step() { ++t_; }
  int64_t steps() const { return t_; }

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, std::pair<Tensor, Tensor>> moments_;
};

struct PretrainLog {
  std::vector<double> epoch_loss;
  int64_t planned_link_samples = 0;
  int64_t planned_semantic_samples = 0;  // gamma bookkeeping; no semantic loss is built
};

// Self-supervised pretraining of encoder, projection and codebook: the VQ objective
// plus masked-feature reconstruction and link reconstruction with uniform negatives.
PretrainLog pretrain(const std::vector<Graph>& corpus, const PretrainConfig& cfg,
                     ModelState& state);

struct FinetuneResult {
  double best_val = 0.0;
  int best_epoch = -1;
  double test_acc = 0.0;
  std::vector<double> val_curve;
};

// Cross-entropy on train nodes plus the head's Lipschitz penalty; Gumbel routing in
// training and softmax routing in evaluation; restores the best-validation snapshot.
FinetuneResult finetune(const Graph& g, const Split& split, const FinetuneConfig& cfg,
                        ModelState& state);

struct Checkpoint {
  uint32_t version = 1;
  ModelState state;
  std::map<std::string, std::string> config_echo;
  uint64_t rng_seed = 0;
  uint64_t rng_counter = 0;
  int32_t epoch = 0;
  double best_val_metric = 0.0;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace stemgnn
