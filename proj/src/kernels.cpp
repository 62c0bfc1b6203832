#include "stemgnn/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "stemgnn/errors.hpp"

namespace stemgnn {
namespace kernels {

namespace {

constexpr int64_t kChunk = 4096;  // fixed-size reduction chunks, thread-count independent

void check_matmul(const Tensor& a, const Tensor& b, int64_t ak, int64_t bk,
                  const char* what) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError(std::string(what) + ": operands must be rank-2");
  if (ak != bk)
    throw DimensionError(std::string(what) + ": inner extents disagree " + a.shape_str() +
                         " vs " + b.shape_str());
}

double chunked_accumulate(const double* p, int64_t n, double (*f)(double)) {
  int64_t nchunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(static_cast<size_t>(nchunks), 0.0);
#pragma omp parallel for schedule(static)
  for (int64_t c = 0; c < nchunks; ++c) {
    double s = 0.0;
    int64_t hi = std::min(n, (c + 1) * kChunk);
    for (int64_t i = c * kChunk; i < hi; ++i) s += f(p[i]);
    partial[static_cast<size_t>(c)] = s;
  }
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

double frac_zero(const Tensor& a) {
  int64_t n = a.numel();
  if (n == 0) return 0.0;
  int64_t nchunks = (n + kChunk - 1) / kChunk;
  std::vector<int64_t> zc(static_cast<size_t>(nchunks), 0);
#pragma omp parallel for schedule(static)
  for (int64_t c = 0; c < nchunks; ++c) {
    int64_t z = 0;
    int64_t hi = std::min(n, (c + 1) * kChunk);
    for (int64_t i = c * kChunk; i < hi; ++i)
      if (a.data[static_cast<size_t>(i)] == 0.0) ++z;
    zc[static_cast<size_t>(c)] = z;
  }
  int64_t z = 0;
  for (int64_t v : zc) z += v;
  return static_cast<double>(z) / static_cast<double>(n);
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_matmul(a, b, a.shape[1], b.shape[0], "matmul");
  int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor c({m, n});
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* crow = &c.data[static_cast<size_t>(i * n)];
    const double* arow = &a.data[static_cast<size_t>(i * k)];
    for (int64_t kk = 0; kk < k; ++kk) {
      double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = &b.data[static_cast<size_t>(kk * n)];
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor matmul_rowsparse(const Tensor& a, const Tensor& b) {
  // matmul already skips zero lhs entries row-wise; shared path keeps results identical
  return matmul(a, b);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_matmul(a, b, a.shape[1], b.shape[1], "matmul_nt");
  int64_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
  Tensor c({m, n});
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = &a.data[static_cast<size_t>(i * k)];
    double* crow = &c.data[static_cast<size_t>(i * n)];
    for (int64_t j = 0; j < n; ++j) {
      const double* brow = &b.data[static_cast<size_t>(j * k)];
      double s = 0.0;
      for (int64_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      crow[j] = s;
    }
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  check_matmul(a, b, a.shape[0], b.shape[0], "matmul_tn");
  int64_t k = a.shape[0], m = a.shape[1], n = b.shape[1];
  Tensor c({m, n});
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* crow = &c.data[static_cast<size_t>(i * n)];
    for (int64_t kk = 0; kk < k; ++kk) {
      double av = a.data[static_cast<size_t>(kk * m + i)];
      if (av == 0.0) continue;
      const double* brow = &b.data[static_cast<size_t>(kk * n)];
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor matmul_tn_colsparse(const Tensor& a, const Tensor& b) {
  if (frac_zero(a) < 0.6) return matmul_tn(a, b);
  check_matmul(a, b, a.shape[0], b.shape[0], "matmul_tn");
  int64_t k = a.shape[0], m = a.shape[1], n = b.shape[1];
  // column-major nonzero lists of a
  std::vector<std::vector<int32_t>> colnz(static_cast<size_t>(m));
  for (int64_t kk = 0; kk < k; ++kk)
    for (int64_t i = 0; i < m; ++i)
      if (a.data[static_cast<size_t>(kk * m + i)] != 0.0)
        colnz[static_cast<size_t>(i)].push_back(static_cast<int32_t>(kk));
  Tensor c({m, n});
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* crow = &c.data[static_cast<size_t>(i * n)];
    for (int32_t kk : colnz[static_cast<size_t>(i)]) {
      double av = a.data[static_cast<size_t>(static_cast<int64_t>(kk) * m + i)];
      const double* brow = &b.data[static_cast<size_t>(static_cast<int64_t>(kk) * n)];
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("add: shape mismatch");
  int64_t n = a.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) a.data[static_cast<size_t>(i)] += b.data[static_cast<size_t>(i)];
}

void axpy_inplace(Tensor& a, double alpha, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("axpy: shape mismatch");
  int64_t n = a.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i)
    a.data[static_cast<size_t>(i)] += alpha * b.data[static_cast<size_t>(i)];
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor c = a;
  add_inplace(c, b);
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("sub: shape mismatch");
  Tensor c = a;
  int64_t n = c.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) c.data[static_cast<size_t>(i)] -= b.data[static_cast<size_t>(i)];
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("mul: shape mismatch");
  Tensor c = a;
  int64_t n = c.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) c.data[static_cast<size_t>(i)] *= b.data[static_cast<size_t>(i)];
  return c;
}

Tensor scale(const Tensor& a, double cv) {
  Tensor c = a;
  int64_t n = c.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) c.data[static_cast<size_t>(i)] *= cv;
  return c;
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  if (a.rank() != 2 || v.numel() != a.shape[1])
    throw DimensionError("add_rowvec: vector length must equal column count");
  Tensor c = a;
  int64_t m = a.shape[0], n = a.shape[1];
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      c.data[static_cast<size_t>(i * n + j)] += v.data[static_cast<size_t>(j)];
  return c;
}

Tensor relu(const Tensor& a) {
  Tensor c = a;
  int64_t n = c.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    double& x = c.data[static_cast<size_t>(i)];
    if (x < 0.0) x = 0.0;
  }
  return c;
}

Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("softmax: expects rank-2 input");
  if (logits.shape[1] == 0) throw DimensionError("softmax: empty axis");
  int64_t m = logits.shape[0], n = logits.shape[1];
  Tensor out({m, n});
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const double* in = &logits.data[static_cast<size_t>(i * n)];
    double* o = &out.data[static_cast<size_t>(i * n)];
    double mx = in[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      s += o[j];
    }
    for (int64_t j = 0; j < n; ++j) o[j] /= s;
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("log_softmax: expects rank-2 input");
  if (logits.shape[1] == 0) throw DimensionError("log_softmax: empty axis");
  int64_t m = logits.shape[0], n = logits.shape[1];
  Tensor out({m, n});
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const double* in = &logits.data[static_cast<size_t>(i * n)];
    double* o = &out.data[static_cast<size_t>(i * n)];
    double mx = in[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) s += std::exp(in[j] - mx);
    double lse = mx + std::log(s);
    for (int64_t j = 0; j < n; ++j) o[j] = in[j] - lse;
  }
  return out;
}

double sum(const Tensor& a) {
  return chunked_accumulate(a.data.data(), a.numel(), [](double x) { return x; });
}

double sum_sq(const Tensor& a) {
  return chunked_accumulate(a.data.data(), a.numel(), [](double x) { return x * x; });
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) throw DimensionError("dot: length mismatch");
  int64_t n = a.numel();
  int64_t nchunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(static_cast<size_t>(nchunks), 0.0);
#pragma omp parallel for schedule(static)
  for (int64_t c = 0; c < nchunks; ++c) {
    double s = 0.0;
    int64_t hi = std::min(n, (c + 1) * kChunk);
    for (int64_t i = c * kChunk; i < hi; ++i)
      s += a.data[static_cast<size_t>(i)] * b.data[static_cast<size_t>(i)];
    partial[static_cast<size_t>(c)] = s;
  }
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

Tensor col_sum(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("col_sum: expects rank-2 input");
  int64_t m = a.shape[0], n = a.shape[1];
  Tensor out({1, n});
#pragma omp parallel for schedule(static)
  for (int64_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (int64_t i = 0; i < m; ++i) s += a.data[static_cast<size_t>(i * n + j)];
    out.data[static_cast<size_t>(j)] = s;
  }
  return out;
}

Tensor col_mean(const Tensor& a) {
  Tensor s = col_sum(a);
  return scale(s, 1.0 / static_cast<double>(a.shape[0]));
}

Tensor csr_mean_aggregate(const std::vector<int64_t>& offsets,
                          const std::vector<int32_t>& targets, const Tensor& h) {
  int64_t n = static_cast<int64_t>(offsets.size()) - 1;
  if (h.rank() != 2 || h.shape[0] != n)
    throw DimensionError("csr_mean_aggregate: row count must equal node count");
  int64_t d = h.shape[1];
  Tensor out({n, d});
#pragma omp parallel for schedule(static)
  for (int64_t v = 0; v < n; ++v) {
    int64_t lo = offsets[static_cast<size_t>(v)], hi = offsets[static_cast<size_t>(v) + 1];
    if (lo == hi) continue;  // isolated node keeps the zero row
    double* o = &out.data[static_cast<size_t>(v * d)];
    for (int64_t e = lo; e < hi; ++e) {
      const double* src = &h.data[static_cast<size_t>(
          static_cast<int64_t>(targets[static_cast<size_t>(e)]) * d)];
      for (int64_t j = 0; j < d; ++j) o[j] += src[j];
    }
    double inv = 1.0 / static_cast<double>(hi - lo);
    for (int64_t j = 0; j < d; ++j) o[j] *= inv;
  }
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[0] != b.shape[0])
    throw DimensionError("concat_cols: row counts must match");
  int64_t m = a.shape[0], ca = a.shape[1], cb = b.shape[1];
  Tensor out({m, ca + cb});
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    std::memcpy(&out.data[static_cast<size_t>(i * (ca + cb))],
                &a.data[static_cast<size_t>(i * ca)], static_cast<size_t>(ca) * sizeof(double));
    std::memcpy(&out.data[static_cast<size_t>(i * (ca + cb) + ca)],
                &b.data[static_cast<size_t>(i * cb)], static_cast<size_t>(cb) * sizeof(double));
  }
  return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<int32_t>& idx) {
  if (a.rank() != 2) throw DimensionError("gather_rows: expects rank-2 input");
  int64_t n = a.shape[1];
  Tensor out({static_cast<int64_t>(idx.size()), n});
  int64_t m = static_cast<int64_t>(idx.size());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i)
    std::memcpy(&out.data[static_cast<size_t>(i * n)],
                &a.data[static_cast<size_t>(static_cast<int64_t>(idx[static_cast<size_t>(i)]) * n)],
                static_cast<size_t>(n) * sizeof(double));
  return out;
}

void nearest_codes(const Tensor& u, const Tensor& codebook, std::vector<int32_t>& idx,
                   std::vector<double>& margins) {
  if (u.rank() != 2 || codebook.rank() != 2 || u.shape[1] != codebook.shape[1])
    throw DimensionError("nearest_codes: dimension mismatch between inputs and codebook");
  int64_t n = u.shape[0], m = codebook.shape[0], d = u.shape[1];
  if (m < 1) throw DimensionError("nearest_codes: empty codebook");
  idx.assign(static_cast<size_t>(n), 0);
  margins.assign(static_cast<size_t>(n), 0.0);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const double* x = &u.data[static_cast<size_t>(i * d)];
    double best = 0.0, second = 0.0;
    int32_t bj = 0;
    for (int64_t j = 0; j < m; ++j) {
      const double* c = &codebook.data[static_cast<size_t>(j * d)];
      double s = 0.0;
      for (int64_t t = 0; t < d; ++t) {
        double dv = x[t] - c[t];
        s += dv * dv;
      }
      double dist = std::sqrt(s);
      if (j == 0) {
        best = dist;
      } else if (dist < best) {
        second = best;
        best = dist;
        bj = static_cast<int32_t>(j);
      } else if (j == 1 || dist < second) {
        second = dist;
      }
    }
    idx[static_cast<size_t>(i)] = bj;
    margins[static_cast<size_t>(i)] = (m > 1) ? second - best : 0.0;
  }
}

double spectral_norm_estimate(const Tensor& w, int iters) {
  if (w.rank() != 2) throw DimensionError("spectral_norm_estimate: expects a matrix");
  if (iters < 1) throw DimensionError("spectral_norm_estimate: iters must be >= 1");
  int64_t n = w.shape[1];
  if (sum_sq(w) == 0.0) return 0.0;
  Tensor v({n, 1});
  for (int64_t j = 0; j < n; ++j) v.data[static_cast<size_t>(j)] = 1.0;
  // if W*ones happens to vanish, restart from a basis vector with nonzero image
  {
    Tensor wv = matmul(w, v);
    if (sum_sq(wv) == 0.0) {
      for (int64_t j = 0; j < n; ++j) {
        std::fill(v.data.begin(), v.data.end(), 0.0);
        v.data[static_cast<size_t>(j)] = 1.0;
        if (sum_sq(matmul(w, v)) > 0.0) break;
      }
    }
  }
  double sigma = 0.0;
  for (int it = 0; it < iters; ++it) {
    Tensor wv = matmul(w, v);          // [m,1]
    Tensor wtwv = matmul_tn(w, wv);    // [n,1]
    double vn = std::sqrt(sum_sq(v));
    double s = std::sqrt(sum_sq(wv)) / vn;
    sigma = std::max(sigma, s);
    double g = std::sqrt(sum_sq(wtwv));
    if (g == 0.0) break;
    for (int64_t j = 0; j < n; ++j)
      v.data[static_cast<size_t>(j)] = wtwv.data[static_cast<size_t>(j)] / g;
  }
  return sigma;
}

}  // namespace kernels
}  // namespace stemgnn
