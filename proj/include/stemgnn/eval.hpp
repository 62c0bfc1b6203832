#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stemgnn/graph.hpp"
#include "stemgnn/model.hpp"
#include "stemgnn/trainer.hpp"

namespace stemgnn {

// Disjoint node sets covering the valid-node universe; `unused` holds nodes the
// protocol sets aside (top-alignment segment, dropped small classes, invalid nodes
// stay outside the universe entirely for score-based buckets).
struct Buckets {
  std::vector<std::string> names;
  std::vector<std::vector<int32_t>> sets;
  std::vector<int32_t> unused;
  std::vector<int32_t> universe;
  int id_index = -1;

  const std::vector<int32_t>& id_nodes() const { return sets[static_cast<size_t>(id_index)]; }
};

// Lowest/highest 15% of nodes by degree; ties broken by node index.
Buckets build_degree_buckets(const Graph& g);

// Same segmentation over feature-homophily scores, restricted to valid-score nodes;
// ID-bucket classes with fewer than three labeled nodes are dropped to `unused`.
Buckets build_homophily_buckets(const Graph& g);

// Alignment-score segments: bottom 10% / 10-20% / 20-30% as OOD3/OOD2/OOD1,
// 30-80% as ID, top 20% unused.
Buckets build_triobj_buckets(const Graph& g);

// Per-class 50/25/25 with fallback to 60/20/20 and minimal 1/1/(n-2); leftover nodes
// go to train, then val. strict=true raises on classes with fewer than 3 nodes,
// otherwise those classes are excluded.
Split stratified_id_split(const std::vector<int32_t>& id_nodes,
                          const std::vector<int32_t>& labels, uint64_t seed,
                          bool strict = false);

// Standard semi-supervised protocol: fixed labeled count per class for training,
// then val/test sampled from the remaining labeled nodes.
Split semi_supervised_split(const Graph& g, int labels_per_class, int64_t val_size,
                            int64_t test_size, uint64_t seed);

enum class PerturbKind { kFeature, kEdge };

// Mean accuracy over independent perturbation draws per rate; verifies the model
// state hash is unchanged by the suite.
std::vector<double> run_perturb_suite(ModelState& model, const Graph& g,
                                      const std::vector<int32_t>& test_nodes,
                                      const std::vector<double>& rates, PerturbKind kind,
                                      int trials, uint64_t seed);

struct SeedMetrics {
  uint64_t seed = 0;
  double fit = 0.0;
  std::map<std::string, double> ood_per_bucket;
  double ood_worst = 0.0;
  std::map<double, double> perturb_per_rate;
  double perturb_mean = 0.0;
  double avg = 0.0;  // mean of fit, ood_worst, perturb_mean
};

struct MetricsReport {
  std::vector<SeedMetrics> rows;
  SeedMetrics mean;
  SeedMetrics stddev;
};

SeedMetrics make_triobj_metrics(uint64_t seed, double fit,
                                const std::map<std::string, double>& ood,
                                const std::map<double, double>& perturb);
MetricsReport aggregate(std::vector<SeedMetrics> rows);

std::string report_csv(const MetricsReport& rep);
std::string report_text(const MetricsReport& rep);

// One tri-objective run: stratified ID re-split per seed, finetune, then Fit /
// OOD-worst (clean buckets) / Perturb-mean (masked ID-test) with a frozen-state check.
SeedMetrics run_triobj_seed(const Graph& g, const Buckets& buckets, ModelState state,
                            const FinetuneConfig& ft, const std::vector<double>& mask_rates,
                            int trials, uint64_t seed);

void assert_no_leakage(const Buckets& buckets, const Split& split);

}  // namespace stemgnn
