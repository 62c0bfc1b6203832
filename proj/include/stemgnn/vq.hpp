#pragma once

#include <cstdint>
#include <vector>

#include "stemgnn/tape.hpp"
#include "stemgnn/tensor.hpp"

namespace stemgnn {

struct Quantization {
  std::vector<int32_t> indices;  // nearest codeword per row, ties to the lowest index
  std::vector<double> margins;   // dist(best non-assigned) - dist(assigned)
};

Quantization quantize_rows(const Tensor& u, const Tensor& codebook);

// mean over rows of ||sg(u) - Q(u)||^2 + beta * ||u - sg(Q(u))||^2.
// Term 1 reaches only the codebook leaf, term 2 only the encoder side.
Var vq_loss(Tape& tape, Var u, Var codebook_leaf, const std::vector<int32_t>& indices,
            double beta);

double codebook_diameter(const Tensor& codebook);  // max pairwise distance

struct MarginCheckReport {
  int64_t trials = 0;
  int64_t violations = 0;
  bool ok() const { return violations == 0; }
};

// Verifies that every u + delta with ||delta|| < margin/2 keeps the token index.
MarginCheckReport margin_invariance_check(const Tensor& u_row, const Tensor& codebook,
                                          const std::vector<Tensor>& deltas);

enum class Pooling { kNone, kMean };

struct AmplificationReport {
  double diameter = 0.0;
  double spectral_bound = 0.0;   // L * diam with L from power iteration
  double frobenius_bound = 0.0;  // ||W||_F * diam
  double max_pair_change = 0.0;  // max ||W c_i - W c_j|| over checked pairs
  int64_t pairs_checked = 0;
  int64_t violations_spectral = 0;
  int64_t violations_frobenius = 0;
  int64_t violations_pooled = 0;  // mean pooling, L_pool = 1
  bool ok() const {
    return violations_spectral == 0 && violations_frobenius == 0 && violations_pooled == 0;
  }
};

// Exhaustive pairwise scan of head-output change under token switches against
// L * diam(C); the mean-pooling variant checks pooled-input change against diam(C).
AmplificationReport amplification_bound_check(const Tensor& head_w, const Tensor& codebook,
                                              Pooling pooling, uint64_t seed = 0);

}  // namespace stemgnn
