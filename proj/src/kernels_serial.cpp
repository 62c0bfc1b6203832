#include <algorithm>
#include <cmath>

#include "stemgnn/errors.hpp"
#include "stemgnn/kernels.hpp"

namespace stemgnn {
namespace ref {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    throw DimensionError("ref::matmul: shape mismatch");
  int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor c({m, n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t kk = 0; kk < k; ++kk) {
      double av = a.at(i, kk);
      for (int64_t j = 0; j < n; ++j) c.at(i, j) += av * b.at(kk, j);
    }
  return c;
}

Tensor softmax_rows(const Tensor& logits) {
  int64_t m = logits.shape[0], n = logits.shape[1];
  Tensor out({m, n});
  for (int64_t i = 0; i < m; ++i) {
    double mx = logits.at(i, 0);
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, logits.at(i, j));
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      out.at(i, j) = std::exp(logits.at(i, j) - mx);
      s += out.at(i, j);
    }
    for (int64_t j = 0; j < n; ++j) out.at(i, j) /= s;
  }
  return out;
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data) s += v;
  return s;
}

double sum_sq(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data) s += v * v;
  return s;
}

Tensor csr_mean_aggregate(const std::vector<int64_t>& offsets,
                          const std::vector<int32_t>& targets, const Tensor& h) {
  int64_t n = static_cast<int64_t>(offsets.size()) - 1;
  int64_t d = h.shape[1];
  Tensor out({n, d});
  for (int64_t v = 0; v < n; ++v) {
    int64_t lo = offsets[static_cast<size_t>(v)], hi = offsets[static_cast<size_t>(v) + 1];
    if (lo == hi) continue;
    for (int64_t e = lo; e < hi; ++e)
      for (int64_t j = 0; j < d; ++j)
        out.at(v, j) += h.at(targets[static_cast<size_t>(e)], j);
    for (int64_t j = 0; j < d; ++j) out.at(v, j) /= static_cast<double>(hi - lo);
  }
  return out;
}

void nearest_codes(const Tensor& u, const Tensor& codebook, std::vector<int32_t>& idx,
                   std::vector<double>& margins) {
  int64_t n = u.shape[0], m = codebook.shape[0], d = u.shape[1];
  idx.assign(static_cast<size_t>(n), 0);
  margins.assign(static_cast<size_t>(n), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    std::vector<double> dist(static_cast<size_t>(m));
    for (int64_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (int64_t t = 0; t < d; ++t) {
        double dv = u.at(i, t) - codebook.at(j, t);
        s += dv * dv;
      }
      dist[static_cast<size_t>(j)] = std::sqrt(s);
    }
    int32_t bj = 0;
    for (int64_t j = 1; j < m; ++j)
      if (dist[static_cast<size_t>(j)] < dist[static_cast<size_t>(bj)])
        bj = static_cast<int32_t>(j);
    double second = 0.0;
    bool have = false;
    for (int64_t j = 0; j < m; ++j) {
      if (j == bj) continue;
      if (!have || dist[static_cast<size_t>(j)] < second) {
        second = dist[static_cast<size_t>(j)];
        have = true;
      }
    }
    idx[static_cast<size_t>(i)] = bj;
    margins[static_cast<size_t>(i)] = have ? second - dist[static_cast<size_t>(bj)] : 0.0;
  }
}

std::vector<double> singular_values(const Tensor& w) {
  if (w.rank() != 2) throw DimensionError("ref::singular_values: expects a matrix");
  // work on the transpose when needed so columns are the short side
  int64_t m = w.shape[0], n = w.shape[1];
  bool transposed = n > m;
  int64_t rows = transposed ? n : m, cols = transposed ? m : n;
  std::vector<std::vector<double>> a(static_cast<size_t>(cols),
                                     std::vector<double>(static_cast<size_t>(rows)));
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      if (transposed)
        a[static_cast<size_t>(i)][static_cast<size_t>(j)] = w.at(i, j);
      else
        a[static_cast<size_t>(j)][static_cast<size_t>(i)] = w.at(i, j);
    }
  // one-sided Jacobi: rotate column pairs until all are orthogonal
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0.0;
    for (int64_t p = 0; p < cols - 1; ++p)
      for (int64_t q = p + 1; q < cols; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (int64_t i = 0; i < rows; ++i) {
          double x = a[static_cast<size_t>(p)][static_cast<size_t>(i)];
          double y = a[static_cast<size_t>(q)][static_cast<size_t>(i)];
          app += x * x;
          aqq += y * y;
          apq += x * y;
        }
        off = std::max(off, std::abs(apq) / (std::sqrt(app * aqq) + 1e-300));
        if (std::abs(apq) < 1e-15 * std::sqrt(app * aqq) + 1e-300) continue;
        double tau = (aqq - app) / (2.0 * apq);
        double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        double cth = 1.0 / std::sqrt(1.0 + t * t);
        double sth = cth * t;
        for (int64_t i = 0; i < rows; ++i) {
          double x = a[static_cast<size_t>(p)][static_cast<size_t>(i)];
          double y = a[static_cast<size_t>(q)][static_cast<size_t>(i)];
          a[static_cast<size_t>(p)][static_cast<size_t>(i)] = cth * x - sth * y;
          a[static_cast<size_t>(q)][static_cast<size_t>(i)] = sth * x + cth * y;
        }
      }
    if (off < 1e-14) break;
  }
  std::vector<double> sv(static_cast<size_t>(cols));
  for (int64_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (int64_t i = 0; i < rows; ++i) {
      double x = a[static_cast<size_t>(j)][static_cast<size_t>(i)];
      s += x * x;
    }
    sv[static_cast<size_t>(j)] = std::sqrt(s);
  }
  std::sort(sv.rbegin(), sv.rend());
  return sv;
}

}  // namespace ref
}  // namespace stemgnn
