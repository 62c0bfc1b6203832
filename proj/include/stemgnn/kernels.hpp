#pragma once

#include <cstdint>
#include <vector>

#include "stemgnn/tensor.hpp"

namespace stemgnn {

// OpenMP-parallel dense kernels. Every kernel computes each output element with a
// fixed sequential inner loop, so results are bit-identical for any thread count.
// Full-array reductions go through fixed-size chunks combined in chunk order.
namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b);        // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);     // a * b^T, [m,k]x[n,k]
Tensor matmul_tn(const Tensor& a, const Tensor& b);     // a^T * b, [k,m]x[k,n]

// Same contraction as matmul/matmul_tn but skips zero entries of `a`
// (scans density first; falls back to the dense path when `a` is mostly nonzero).
Tensor matmul_rowsparse(const Tensor& a, const Tensor& b);
Tensor matmul_tn_colsparse(const Tensor& a, const Tensor& b);

void add_inplace(Tensor& a, const Tensor& b);
void axpy_inplace(Tensor& a, double alpha, const Tensor& b);  // a += alpha*b
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& a, const Tensor& v);  // broadcast v over rows
Tensor relu(const Tensor& a);

Tensor softmax_rows(const Tensor& logits);
Tensor log_softmax_rows(const Tensor& logits);

double sum(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double sum_sq(const Tensor& a);
Tensor col_sum(const Tensor& a);   // [1,c]
Tensor col_mean(const Tensor& a);  // [1,c]

// Per-node mean over neighbor rows; isolated nodes get a zero row.
Tensor csr_mean_aggregate(const std::vector<int64_t>& offsets,
                          const std::vector<int32_t>& targets, const Tensor& h);

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor gather_rows(const Tensor& a, const std::vector<int32_t>& idx);

// Nearest codeword per row of u under Euclidean distance; ties to the lowest index.
// margins[i] = dist(best non-assigned) - dist(assigned), >= 0.
void nearest_codes(const Tensor& u, const Tensor& codebook, std::vector<int32_t>& idx,
                   std::vector<double>& margins);

// Power-iteration largest-singular-value estimate; sqrt of the Rayleigh quotient of
// W^T W, non-decreasing in iters. Zero matrix -> 0.
double spectral_norm_estimate(const Tensor& w, int iters);

int max_threads();

}  // namespace kernels

// Serial reference implementations kept for testing the parallel kernels and as
// oracles in the unit suites. Plain loops, no OpenMP.
namespace ref {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& logits);
double sum(const Tensor& a);
double sum_sq(const Tensor& a);
Tensor csr_mean_aggregate(const std::vector<int64_t>& offsets,
                          const std::vector<int32_t>& targets, const Tensor& h);
void nearest_codes(const Tensor& u, const Tensor& codebook, std::vector<int32_t>& idx,
                   std::vector<double>& margins);

// One-sided Jacobi SVD; returns singular values in descending order.
std::vector<double> singular_values(const Tensor& w);

}  // namespace ref

}  // namespace stemgnn
