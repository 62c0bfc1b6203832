#include "stemgnn/vq.hpp"

#include <cmath>

#include "stemgnn/errors.hpp"
#include "stemgnn/kernels.hpp"
#include "stemgnn/rng.hpp"

namespace stemgnn {

Quantization quantize_rows(const Tensor& u, const Tensor& codebook) {
  Quantization q;
  kernels::nearest_codes(u, codebook, q.indices, q.margins);
  return q;
}

Var vq_loss(Tape& tape, Var u, Var codebook_leaf, const std::vector<int32_t>& indices,
            double beta) {
  if (beta < 0.0) throw std::invalid_argument("vq_loss: beta must be >= 0");
  // term 1: moves codewords toward the (stopped) embeddings
  Var u_sg = tape.stop_gradient(u);
  Var assigned = tape.gather_rows(codebook_leaf, indices);
  Var term1 = tape.mean(tape.sq_dist_rows(assigned, u_sg));
  // term 2: commitment, moves embeddings toward the (stopped) codewords
  Var assigned_sg = tape.constant(kernels::gather_rows(tape.value(codebook_leaf), indices));
  Var term2 = tape.mean(tape.sq_dist_rows(u, assigned_sg));
  return tape.add(term1, tape.scale(term2, beta));
}

double codebook_diameter(const Tensor& codebook) {
  int64_t m = codebook.shape[0], d = codebook.shape[1];
  double best = 0.0;
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = i + 1; j < m; ++j) {
      double s = 0.0;
      for (int64_t t = 0; t < d; ++t) {
        double dv = codebook.at(i, t) - codebook.at(j, t);
        s += dv * dv;
      }
      best = std::max(best, s);
    }
  return std::sqrt(best);
}

MarginCheckReport margin_invariance_check(const Tensor& u_row, const Tensor& codebook,
                                          const std::vector<Tensor>& deltas) {
  MarginCheckReport rep;
  Quantization base = quantize_rows(u_row, codebook);
  double half_margin = 0.5 * base.margins[0];
  for (const Tensor& d : deltas) {
    double nrm = std::sqrt(kernels::sum_sq(d));
    if (!(nrm < half_margin)) continue;  // outside the lemma's hypothesis
    Tensor shifted = u_row;
    kernels::add_inplace(shifted, d);
    Quantization q = quantize_rows(shifted, codebook);
    ++rep.trials;
    if (q.indices[0] != base.indices[0]) ++rep.violations;
  }
  return rep;
}

AmplificationReport amplification_bound_check(const Tensor& head_w, const Tensor& codebook,
                                              Pooling pooling, uint64_t seed) {
  if (codebook.shape[0] < 1) throw DimensionError("amplification check: empty codebook");
  AmplificationReport rep;
  rep.diameter = codebook_diameter(codebook);
  double fro = std::sqrt(kernels::sum_sq(head_w));
  double spec = kernels::spectral_norm_estimate(head_w, 5000);
  rep.spectral_bound = spec * rep.diameter;
  rep.frobenius_bound = fro * rep.diameter;
  int64_t m = codebook.shape[0];
  Tensor mapped = kernels::matmul(codebook, head_w);  // rows are W^T c_i in head space
  int64_t c = mapped.shape[1];
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = i + 1; j < m; ++j) {
      double s = 0.0;
      for (int64_t t = 0; t < c; ++t) {
        double dv = mapped.at(i, t) - mapped.at(j, t);
        s += dv * dv;
      }
      double change = std::sqrt(s);
      double pair_dist = 0.0;
      for (int64_t t = 0; t < codebook.shape[1]; ++t) {
        double dv = codebook.at(i, t) - codebook.at(j, t);
        pair_dist += dv * dv;
      }
      pair_dist = std::sqrt(pair_dist);
      ++rep.pairs_checked;
      rep.max_pair_change = std::max(rep.max_pair_change, change);
      if (change > spec * pair_dist + 1e-6 || change > rep.spectral_bound + 1e-6)
        ++rep.violations_spectral;
      if (change > fro * pair_dist + 1e-9 || change > rep.frobenius_bound + 1e-9)
        ++rep.violations_frobenius;
    }
  if (pooling == Pooling::kMean) {
    // token switches on a node subset: the pooled-input change obeys L_pool = 1
    RngStream rng(key_hash(seed, 0x9001));
    int64_t d = codebook.shape[1];
    for (int trial = 0; trial < 64; ++trial) {
      int64_t nodes = 2 + static_cast<int64_t>(rng.uniform() * 14);
      Tensor pooled_a({1, d}), pooled_b({1, d});
      for (int64_t v = 0; v < nodes; ++v) {
        int64_t ia = static_cast<int64_t>(rng.uniform() * static_cast<double>(m));
        int64_t ib = static_cast<int64_t>(rng.uniform() * static_cast<double>(m));
        for (int64_t t = 0; t < d; ++t) {
          pooled_a.at(0, t) += codebook.at(ia, t) / static_cast<double>(nodes);
          pooled_b.at(0, t) += codebook.at(ib, t) / static_cast<double>(nodes);
        }
      }
      double s = 0.0;
      for (int64_t t = 0; t < d; ++t) {
        double dv = pooled_a.at(0, t) - pooled_b.at(0, t);
        s += dv * dv;
      }
      if (std::sqrt(s) > rep.diameter + 1e-9) ++rep.violations_pooled;
    }
  }
  return rep;
}

}  // namespace stemgnn
