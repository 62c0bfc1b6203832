#include "stemgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "stemgnn/errors.hpp"
#include "stemgnn/rng.hpp"

namespace stemgnn {

bool Graph::has_edge(int64_t u, int64_t v) const {
  auto lo = csr_targets.begin() + csr_offsets[static_cast<size_t>(u)];
  auto hi = csr_targets.begin() + csr_offsets[static_cast<size_t>(u) + 1];
  return std::binary_search(lo, hi, static_cast<int32_t>(v));
}

std::vector<std::pair<int32_t, int32_t>> Graph::undirected_edges() const {
  std::vector<std::pair<int32_t, int32_t>> out;
  out.reserve(static_cast<size_t>(undirected_edge_count()));
  for (int64_t u = 0; u < n; ++u)
    for (int64_t e = csr_offsets[static_cast<size_t>(u)];
         e < csr_offsets[static_cast<size_t>(u) + 1]; ++e) {
      int32_t v = csr_targets[static_cast<size_t>(e)];
      if (static_cast<int64_t>(v) > u) out.emplace_back(static_cast<int32_t>(u), v);
    }
  return out;
}

Graph build_graph(int64_t n, const std::vector<std::pair<int32_t, int32_t>>& edges,
                  Tensor features, std::vector<int32_t> labels, int32_t num_classes) {
  std::vector<std::vector<int32_t>> adj(static_cast<size_t>(n));
  for (auto [u, v] : edges) {
    if (u < 0 || v < 0 || u >= n || v >= n)
      throw DataError("build_graph: edge endpoint out of range");
    if (u == v) continue;  // self-loops removed
    adj[static_cast<size_t>(u)].push_back(v);
    adj[static_cast<size_t>(v)].push_back(u);
  }
  Graph g;
  g.n = n;
  g.csr_offsets.assign(static_cast<size_t>(n) + 1, 0);
  for (int64_t u = 0; u < n; ++u) {
    auto& a = adj[static_cast<size_t>(u)];
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    g.csr_offsets[static_cast<size_t>(u) + 1] =
        g.csr_offsets[static_cast<size_t>(u)] + static_cast<int64_t>(a.size());
    g.csr_targets.insert(g.csr_targets.end(), a.begin(), a.end());
  }
  g.features = std::move(features);
  g.labels = std::move(labels);
  g.num_classes = num_classes;
  if (g.labels.empty()) g.labels.assign(static_cast<size_t>(n), -1);
  return g;
}

Graph canonicalize(const Graph& g) {
  return build_graph(g.n, g.undirected_edges(), g.features, g.labels, g.num_classes);
}

Graph load_cora_raw(const std::string& content_path, const std::string& cites_path) {
  std::ifstream content(content_path);
  if (!content) throw DataError("cannot open content file: " + content_path);

  std::unordered_map<std::string, int32_t> id_map;
  std::unordered_map<std::string, int32_t> label_map;
  std::vector<std::vector<double>> rows;
  std::vector<int32_t> labels;
  std::string line;
  int64_t lineno = 0;
  int64_t dim = -1;
  while (std::getline(content, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<std::string> toks;
    std::string t;
    while (ss >> t) toks.push_back(t);
    if (toks.size() < 3)
      throw DataError("content line " + std::to_string(lineno) + ": too few fields");
    if (dim < 0)
      dim = static_cast<int64_t>(toks.size()) - 2;
    else if (static_cast<int64_t>(toks.size()) - 2 != dim)
      throw DataError("content line " + std::to_string(lineno) +
                      ": inconsistent feature count");
    const std::string& id = toks.front();
    if (id_map.count(id))
      throw DataError("content line " + std::to_string(lineno) + ": duplicate id " + id);
    id_map[id] = static_cast<int32_t>(rows.size());
    std::vector<double> feat(static_cast<size_t>(dim));
    for (int64_t j = 0; j < dim; ++j) {
      try {
        feat[static_cast<size_t>(j)] = std::stod(toks[static_cast<size_t>(j) + 1]);
      } catch (const std::exception&) {
        throw DataError("content line " + std::to_string(lineno) +
                        ": malformed feature value");
      }
    }
    rows.push_back(std::move(feat));
    const std::string& lab = toks.back();
    auto it = label_map.find(lab);
    if (it == label_map.end())
      it = label_map.emplace(lab, static_cast<int32_t>(label_map.size())).first;
    labels.push_back(it->second);
  }
  int64_t n = static_cast<int64_t>(rows.size());
  if (n == 0) throw DataError("content file is empty: " + content_path);

  std::ifstream cites(cites_path);
  if (!cites) throw DataError("cannot open cites file: " + cites_path);
  std::vector<std::pair<int32_t, int32_t>> edges;
  lineno = 0;
  while (std::getline(cites, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string a, b, extra;
    if (!(ss >> a >> b) || (ss >> extra))
      throw DataError("cites line " + std::to_string(lineno) + ": expected two ids");
    auto ia = id_map.find(a);
    auto ib = id_map.find(b);
    if (ia == id_map.end()) throw DataError("cites file references unknown id: " + a);
    if (ib == id_map.end()) throw DataError("cites file references unknown id: " + b);
    edges.emplace_back(ia->second, ib->second);
  }

  Tensor feats({n, dim});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < dim; ++j)
      feats.at(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return build_graph(n, edges, std::move(feats), std::move(labels),
                     static_cast<int32_t>(label_map.size()));
}

Graph load_native(const std::string& features_path, const std::string& edges_path) {
  std::ifstream ff(features_path);
  if (!ff) throw DataError("cannot open features file: " + features_path);
  int64_t n = 0, d = 0;
  int32_t num_classes = 0;
  std::string line;
  if (!std::getline(ff, line)) throw DataError("features file is empty");
  {
    std::istringstream ss(line);
    if (!(ss >> n >> d >> num_classes))
      throw DataError("features header must be 'n d num_classes'");
  }
  Tensor feats({n, d});
  std::vector<int32_t> labels(static_cast<size_t>(n), -1);
  for (int64_t i = 0; i < n; ++i) {
    if (!std::getline(ff, line))
      throw DataError("features file truncated at node " + std::to_string(i));
    std::istringstream ss(line);
    for (int64_t j = 0; j < d; ++j)
      if (!(ss >> feats.at(i, j)))
        throw DataError("features line " + std::to_string(i + 2) + ": malformed value");
    std::string lab;
    if (!(ss >> lab))
      throw DataError("features line " + std::to_string(i + 2) + ": missing label token");
    if (lab != "?") labels[static_cast<size_t>(i)] = static_cast<int32_t>(std::stol(lab));
  }
  std::ifstream ef(edges_path);
  if (!ef) throw DataError("cannot open edges file: " + edges_path);
  std::vector<std::pair<int32_t, int32_t>> edges;
  int64_t lineno = 0;
  while (std::getline(ef, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    int64_t u, v;
    if (!(ss >> u >> v))
      throw DataError("edges line " + std::to_string(lineno) + ": expected two indices");
    if (u < 0 || v < 0 || u >= n || v >= n)
      throw DataError("edges line " + std::to_string(lineno) + ": index out of range");
    edges.emplace_back(static_cast<int32_t>(u), static_cast<int32_t>(v));
  }
  return build_graph(n, edges, std::move(feats), std::move(labels), num_classes);
}

void save_native(const Graph& g, const std::string& features_path,
                 const std::string& edges_path) {
  std::ofstream ff(features_path);
  if (!ff) throw DataError("cannot write features file: " + features_path);
  ff.precision(17);
  ff << g.n << " " << g.feature_dim() << " " << g.num_classes << "\n";
  for (int64_t i = 0; i < g.n; ++i) {
    for (int64_t j = 0; j < g.feature_dim(); ++j) ff << g.features.at(i, j) << "\t";
    if (g.labels[static_cast<size_t>(i)] < 0)
      ff << "?";
    else
      ff << g.labels[static_cast<size_t>(i)];
    ff << "\n";
  }
  std::ofstream ef(edges_path);
  if (!ef) throw DataError("cannot write edges file: " + edges_path);
  for (auto [u, v] : g.undirected_edges()) ef << u << " " << v << "\n";
}

Graph generate_sbm(const SbmSpec& spec) {
  if (spec.n <= 0 || spec.num_blocks < 1)
    throw ConfigError("sbm: n and num_blocks must be positive");
  if (spec.intra_prob < 0 || spec.intra_prob > 1 || spec.inter_prob < 0 ||
      spec.inter_prob > 1)
    throw ConfigError("sbm: probabilities must lie in [0,1]");
  if (spec.feature_signal < 0) throw ConfigError("sbm: feature_signal must be >= 0");
  int64_t n = spec.n;
  std::vector<int32_t> labels(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    labels[static_cast<size_t>(i)] =
        static_cast<int32_t>(i % static_cast<int64_t>(spec.num_blocks));
  std::vector<std::pair<int32_t, int32_t>> edges;
  for (int64_t u = 0; u < n; ++u)
    for (int64_t v = u + 1; v < n; ++v) {
      double p = labels[static_cast<size_t>(u)] == labels[static_cast<size_t>(v)]
                     ? spec.intra_prob
                     : spec.inter_prob;
      if (keyed_uniform(spec.seed, 0x5b4d /*edges*/, static_cast<uint64_t>(u),
                        static_cast<uint64_t>(v)) < p)
        edges.emplace_back(static_cast<int32_t>(u), static_cast<int32_t>(v));
    }
  // features: class mean along a one-hot-like direction plus unit Gaussian noise
  Tensor feats({n, spec.feature_dim});
  RngStream noise(key_hash(spec.seed, 0xfea7));
  for (int64_t i = 0; i < n; ++i) {
    int64_t mean_dim =
        static_cast<int64_t>(labels[static_cast<size_t>(i)]) % spec.feature_dim;
    for (int64_t j = 0; j < spec.feature_dim; ++j) {
      double mu = (j == mean_dim) ? spec.feature_signal : 0.0;
      feats.at(i, j) = mu + noise.normal();
    }
  }
  return build_graph(n, edges, std::move(feats), std::move(labels), spec.num_blocks);
}

Graph mask_features(const Graph& g, const PerturbationBudget& budget) {
  double alpha = budget.feature_mask_rate;
  if (alpha < 0 || alpha > 1) throw ConfigError("mask_features: rate must lie in [0,1]");
  Graph out = g;
  int64_t d = g.feature_dim();
  for (int32_t v : budget.eval_nodes) {
    if (v < 0 || static_cast<int64_t>(v) >= g.n)
      throw ConfigError("mask_features: eval node out of range");
    for (int64_t j = 0; j < d; ++j)
      if (keyed_uniform(budget.seed, 0x4d41 /*mask*/, static_cast<uint64_t>(v),
                        static_cast<uint64_t>(j)) < alpha)
        out.features.at(v, j) = 0.0;
  }
  return out;
}

Tensor feature_mask_indicator(const Graph& g, const PerturbationBudget& budget) {
  Tensor ind({g.n, g.feature_dim()});
  for (int32_t v : budget.eval_nodes)
    for (int64_t j = 0; j < g.feature_dim(); ++j)
      if (keyed_uniform(budget.seed, 0x4d41, static_cast<uint64_t>(v),
                        static_cast<uint64_t>(j)) < budget.feature_mask_rate)
        ind.at(v, j) = 1.0;
  return ind;
}

Graph drop_edges(const Graph& g, const PerturbationBudget& budget) {
  double p = budget.edge_drop_rate;
  if (p < 0 || p > 1) throw ConfigError("drop_edges: rate must lie in [0,1]");
  std::vector<char> is_eval(static_cast<size_t>(g.n), 0);
  for (int32_t v : budget.eval_nodes) {
    if (v < 0 || static_cast<int64_t>(v) >= g.n)
      throw ConfigError("drop_edges: eval node out of range");
    is_eval[static_cast<size_t>(v)] = 1;
  }
  auto edges = g.undirected_edges();
  std::vector<std::pair<int32_t, int32_t>> kept;
  kept.reserve(edges.size());
  // candidates are edges touching the eval set; both directions go together
  struct Candidate {
    std::pair<int32_t, int32_t> e;
    bool dropped;
  };
  std::vector<Candidate> candidates;
  for (auto e : edges) {
    if (!is_eval[static_cast<size_t>(e.first)] && !is_eval[static_cast<size_t>(e.second)]) {
      kept.push_back(e);
      continue;
    }
    bool dropped = keyed_uniform(budget.seed, 0xed6e /*edge drop*/,
                                 static_cast<uint64_t>(e.first),
                                 static_cast<uint64_t>(e.second)) < p;
    candidates.push_back({e, dropped});
  }
  bool all_dropped = !candidates.empty();
  for (const auto& c : candidates)
    if (!c.dropped) all_dropped = false;
  if (all_dropped) {
    // guard: retain the candidate with the smallest canonical key (edges come
    // sorted by (u,v) already)
    candidates.front().dropped = false;
  }
  for (const auto& c : candidates)
    if (!c.dropped) kept.push_back(c.e);
  return build_graph(g.n, kept, g.features, g.labels, g.num_classes);
}

std::vector<int64_t> degree_vector(const Graph& g) {
  std::vector<int64_t> deg(static_cast<size_t>(g.n));
  for (int64_t v = 0; v < g.n; ++v) deg[static_cast<size_t>(v)] = g.degree(v);
  return deg;
}

std::vector<std::optional<double>> feature_homophily_scores(const Graph& g) {
  int64_t n = g.n, d = g.feature_dim();
  std::vector<double> norms(static_cast<size_t>(n), 0.0);
  std::vector<char> valid(static_cast<size_t>(n), 1);
  for (int64_t v = 0; v < n; ++v) {
    double s = 0.0;
    bool finite = true;
    for (int64_t j = 0; j < d; ++j) {
      double x = g.features.at(v, j);
      if (!std::isfinite(x)) finite = false;
      s += x * x;
    }
    norms[static_cast<size_t>(v)] = std::sqrt(s);
    if (!finite || s == 0.0) valid[static_cast<size_t>(v)] = 0;
  }
  std::vector<std::optional<double>> scores(static_cast<size_t>(n));
  for (int64_t v = 0; v < n; ++v) {
    if (!valid[static_cast<size_t>(v)]) continue;
    double acc = 0.0;
    int64_t cnt = 0;
    for (int64_t e = g.csr_offsets[static_cast<size_t>(v)];
         e < g.csr_offsets[static_cast<size_t>(v) + 1]; ++e) {
      int32_t u = g.csr_targets[static_cast<size_t>(e)];
      if (!valid[static_cast<size_t>(u)]) continue;
      double dotv = 0.0;
      for (int64_t j = 0; j < d; ++j) dotv += g.features.at(v, j) * g.features.at(u, j);
      acc += dotv / (norms[static_cast<size_t>(v)] * norms[static_cast<size_t>(u)]);
      ++cnt;
    }
    if (cnt > 0) scores[static_cast<size_t>(v)] = acc / static_cast<double>(cnt);
  }
  return scores;
}

}  // namespace stemgnn
