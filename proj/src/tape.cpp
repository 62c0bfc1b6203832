#include "stemgnn/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "stemgnn/errors.hpp"
#include "stemgnn/kernels.hpp"

namespace stemgnn {

namespace {

void check_finite(const Tensor& t, const char* what) {
  for (double v : t.data)
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite input");
}

// sum over neighbors, the adjoint of mean aggregation on a symmetric graph
Tensor csr_sum_aggregate(const std::vector<int64_t>& offsets,
                         const std::vector<int32_t>& targets, const Tensor& h) {
  int64_t n = static_cast<int64_t>(offsets.size()) - 1;
  int64_t d = h.shape[1];
  Tensor out({n, d});
#pragma omp parallel for schedule(static)
  for (int64_t v = 0; v < n; ++v) {
    int64_t lo = offsets[static_cast<size_t>(v)], hi = offsets[static_cast<size_t>(v) + 1];
    double* o = &out.data[static_cast<size_t>(v * d)];
    for (int64_t e = lo; e < hi; ++e) {
      const double* src = &h.data[static_cast<size_t>(
          static_cast<int64_t>(targets[static_cast<size_t>(e)]) * d)];
      for (int64_t j = 0; j < d; ++j) o[j] += src[j];
    }
  }
  return out;
}

}  // namespace

Var Tape::emit(Tensor value, bool needs_grad, std::function<void(Tape&)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

void Tape::accumulate(Var v, const Tensor& g) {
  Node& n = nodes_[static_cast<size_t>(v.id)];
  if (!n.needs_grad) return;
  if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape);
  kernels::add_inplace(n.grad, g);
}

const Tensor& Tape::grad(Var v) const {
  static const Tensor empty;
  const Node& n = nodes_[static_cast<size_t>(v.id)];
  return n.grad.numel() ? n.grad : empty;
}

void Tape::clear() { nodes_.clear(); }

Var Tape::input(Tensor value, bool requires_grad) {
  return emit(std::move(value), requires_grad, nullptr);
}

Var Tape::stop_gradient(Var x) { return emit(value(x), false, nullptr); }

Var Tape::matmul(Var a, Var b) {
  Tensor out = kernels::matmul(value(a), value(b));
  bool ng = requires_grad(a) || requires_grad(b);
  Var r = emit(std::move(out), ng, nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [a, b, r](Tape& t) {
    const Tensor& g = t.grad_ref(r);
    if (t.requires_grad(a)) t.accumulate(a, kernels::matmul_nt(g, t.value(b)));
    if (t.requires_grad(b))
      t.accumulate(b, kernels::matmul_tn_colsparse(t.value(a), g));
  };
  return r;
}

Var Tape::add(Var a, Var b) {
  Tensor out = kernels::add(value(a), value(b));
  bool ng = requires_grad(a) || requires_grad(b);
  Var r = emit(std::move(out), ng, nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [a, b, r](Tape& t) {
    const Tensor& g = t.grad_ref(r);
    t.accumulate(a, g);
    t.accumulate(b, g);
  };
  return r;
}

Var Tape::sub(Var a, Var b) {
  Tensor out = kernels::sub(value(a), value(b));
  bool ng = requires_grad(a) || requires_grad(b);
  Var r = emit(std::move(out), ng, nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [a, b, r](Tape& t) {
    const Tensor& g = t.grad_ref(r);
    t.accumulate(a, g);
    t.accumulate(b, kernels::scale(g, -1.0));
  };
  return r;
}

Var Tape::mul(Var a, Var b) {
  Tensor out = kernels::mul(value(a), value(b));
  bool ng = requires_grad(a) || requires_grad(b);
  Var r = emit(std::move(out), ng, nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [a, b, r](Tape& t) {
    const Tensor& g = t.grad_ref(r);
    if (t.requires_grad(a)) t.accumulate(a, kernels::mul(g, t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, kernels::mul(g, t.value(a)));
  };
  return r;
}

Var Tape::scale(Var a, double c) {
  Var r = emit(kernels::scale(value(a), c), requires_grad(a), nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [a, c, r](Tape& t) {
    t.accumulate(a, kernels::scale(t.grad_ref(r), c));
  };
  return r;
}

Var Tape::add_rowvec(Var a, Var v) {
  Tensor out = kernels::add_rowvec(value(a), value(v));
  bool ng = requires_grad(a) || requires_grad(v);
  Var r = emit(std::move(out), ng, nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [a, v, r](Tape& t) {
    const Tensor& g = t.grad_ref(r);
    t.accumulate(a, g);
    if (t.requires_grad(v)) {
      Tensor cs = kernels::col_sum(g);
      Tensor shaped(t.value(v).shape, std::move(cs.data));
      t.accumulate(v, shaped);
    }
  };
  return r;
}

Var Tape::slice_col(Var a, int64_t col) {
  const Tensor& av = value(a);
  if (av.rank() != 2 || col < 0 || col >= av.shape[1])
    throw DimensionError("slice_col: column index out of range");
  int64_t m = av.shape[0];
  Tensor out({m, 1});
  for (int64_t i = 0; i < m; ++i) out.at(i, 0) = av.at(i, col);
  Var r = emit(std::move(out), requires_grad(a), nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [a, r, col](Tape& t) {
    const Tensor& g = t.grad_ref(r);
    Tensor da(t.value(a).shape);
    int64_t m2 = da.shape[0];
    for (int64_t i = 0; i < m2; ++i) da.at(i, col) = g.at(i, 0);
    t.accumulate(a, da);
  };
  return r;
}

Var Tape::mul_colvec(Var a, Var c) {
  const Tensor& av = value(a);
  const Tensor& cv = value(c);
  if (av.rank() != 2 || cv.numel() != av.shape[0])
    throw DimensionError("mul_colvec: column vector length must equal row count");
  int64_t m = av.shape[0], n = av.shape[1];
  Tensor out({m, n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.at(i, j) = av.at(i, j) * cv.at(i);
  bool ng = requires_grad(a) || requires_grad(c);
  Var r = emit(std::move(out), ng, nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [a, c, r](Tape& t) {
    const Tensor& g = t.grad_ref(r);
    const Tensor& av2 = t.value(a);
    const Tensor& cv2 = t.value(c);
    int64_t m2 = av2.shape[0], n2 = av2.shape[1];
    if (t.requires_grad(a)) {
      Tensor da({m2, n2});
      for (int64_t i = 0; i < m2; ++i)
        for (int64_t j = 0; j < n2; ++j) da.at(i, j) = g.at(i, j) * cv2.at(i);
      t.accumulate(a, da);
    }
    if (t.requires_grad(c)) {
      Tensor dc(cv2.shape);
      for (int64_t i = 0; i < m2; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < n2; ++j) s += g.at(i, j) * av2.at(i, j);
        dc.at(i) = s;
      }
      t.accumulate(c, dc);
    }
  };
  return r;
}

Var Tape::relu(Var a) {
  Var r = emit(kernels::relu(value(a)), requires_grad(a), nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [a, r](Tape& t) {
    const Tensor& g = t.grad_ref(r);
    const Tensor& x = t.value(a);
    Tensor da(x.shape);
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i)
      da.data[static_cast<size_t>(i)] =
          x.data[static_cast<size_t>(i)] > 0.0 ? g.data[static_cast<size_t>(i)] : 0.0;
    t.accumulate(a, da);
  };
  return r;
}

Var Tape::softmax_rows(Var a) {
  check_finite(value(a), "softmax");
  Var r = emit(kernels::softmax_rows(value(a)), requires_grad(a), nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [a, r](Tape& t) {
    const Tensor& g = t.grad_ref(r);
    const Tensor& y = t.value(r);
    int64_t m = y.shape[0], n = y.shape[1];
    Tensor da({m, n});
    for (int64_t i = 0; i < m; ++i) {
      double dotv = 0.0;
      for (int64_t j = 0; j < n; ++j) dotv += g.at(i, j) * y.at(i, j);
      for (int64_t j = 0; j < n; ++j) da.at(i, j) = y.at(i, j) * (g.at(i, j) - dotv);
    }
    t.accumulate(a, da);
  };
  return r;
}

Var Tape::concat_cols(Var a, Var b) {
  Tensor out = kernels::concat_cols(value(a), value(b));
  bool ng = requires_grad(a) || requires_grad(b);
  Var r = emit(std::move(out), ng, nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [a, b, r](Tape& t) {
    const Tensor& g = t.grad_ref(r);
    int64_t m = g.shape[0];
    int64_t ca = t.value(a).shape[1], cb = t.value(b).shape[1];
    Tensor da({m, ca}), db({m, cb});
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < ca; ++j) da.at(i, j) = g.at(i, j);
      for (int64_t j = 0; j < cb; ++j) db.at(i, j) = g.at(i, ca + j);
    }
    t.accumulate(a, da);
    t.accumulate(b, db);
  };
  return r;
}

Var Tape::gather_rows(Var a, std::vector<int32_t> idx) {
  Tensor out = kernels::gather_rows(value(a), idx);
  Var r = emit(std::move(out), requires_grad(a), nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [a, r, idx = std::move(idx)](Tape& t) {
    const Tensor& g = t.grad_ref(r);
    Tensor da(t.value(a).shape);
    int64_t n = da.shape[1];
    for (size_t i = 0; i < idx.size(); ++i)
      for (int64_t j = 0; j < n; ++j)
        da.at(static_cast<int64_t>(idx[i]), j) += g.at(static_cast<int64_t>(i), j);
    t.accumulate(a, da);
  };
  return r;
}

Var Tape::neighbor_mean(Var h, const std::vector<int64_t>& offsets,
                        const std::vector<int32_t>& targets) {
  Tensor out = kernels::csr_mean_aggregate(offsets, targets, value(h));
  Var r = emit(std::move(out), requires_grad(h), nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [h, r, &offsets, &targets](Tape& t) {
    const Tensor& g = t.grad_ref(r);
    int64_t n = g.shape[0], d = g.shape[1];
    Tensor scaled({n, d});
    for (int64_t v = 0; v < n; ++v) {
      int64_t deg = offsets[static_cast<size_t>(v) + 1] - offsets[static_cast<size_t>(v)];
      if (deg == 0) continue;
      double inv = 1.0 / static_cast<double>(deg);
      for (int64_t j = 0; j < d; ++j) scaled.at(v, j) = g.at(v, j) * inv;
    }
    // adjacency is symmetric, so the adjoint is a neighbor sum of the scaled grads
    t.accumulate(h, csr_sum_aggregate(offsets, targets, scaled));
  };
  return r;
}

Var Tape::sum(Var a) {
  Var r = emit(Tensor::scalar(kernels::sum(value(a))), requires_grad(a), nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [a, r](Tape& t) {
    double g = t.grad_ref(r).data[0];
    Tensor da(t.value(a).shape, g);
    t.accumulate(a, da);
  };
  return r;
}

Var Tape::mean(Var a) {
  int64_t n = value(a).numel();
  Var r = emit(Tensor::scalar(kernels::sum(value(a)) / static_cast<double>(n)),
               requires_grad(a), nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [a, r, n](Tape& t) {
    double g = t.grad_ref(r).data[0] / static_cast<double>(n);
    Tensor da(t.value(a).shape, g);
    t.accumulate(a, da);
  };
  return r;
}

Var Tape::frobenius_sq(Var a) {
  Var r = emit(Tensor::scalar(kernels::sum_sq(value(a))), requires_grad(a), nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [a, r](Tape& t) {
    double g = t.grad_ref(r).data[0];
    t.accumulate(a, kernels::scale(t.value(a), 2.0 * g));
  };
  return r;
}

Var Tape::sq_dist_rows(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) throw DimensionError("sq_dist_rows: shape mismatch");
  int64_t m = av.shape[0], n = av.shape[1];
  Tensor out({m, 1});
  for (int64_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      double d = av.at(i, j) - bv.at(i, j);
      s += d * d;
    }
    out.at(i, 0) = s;
  }
  bool ng = requires_grad(a) || requires_grad(b);
  Var r = emit(std::move(out), ng, nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [a, b, r](Tape& t) {
    const Tensor& g = t.grad_ref(r);
    const Tensor& av2 = t.value(a);
    const Tensor& bv2 = t.value(b);
    int64_t m2 = av2.shape[0], n2 = av2.shape[1];
    Tensor da({m2, n2});
    for (int64_t i = 0; i < m2; ++i)
      for (int64_t j = 0; j < n2; ++j)
        da.at(i, j) = 2.0 * (av2.at(i, j) - bv2.at(i, j)) * g.at(i, 0);
    if (t.requires_grad(b)) t.accumulate(b, kernels::scale(da, -1.0));
    t.accumulate(a, da);
  };
  return r;
}

Var Tape::rows_dot(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) throw DimensionError("rows_dot: shape mismatch");
  int64_t m = av.shape[0], n = av.shape[1];
  Tensor out({m, 1});
  for (int64_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) s += av.at(i, j) * bv.at(i, j);
    out.at(i, 0) = s;
  }
  bool ng = requires_grad(a) || requires_grad(b);
  Var r = emit(std::move(out), ng, nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [a, b, r](Tape& t) {
    const Tensor& g = t.grad_ref(r);
    const Tensor& av2 = t.value(a);
    const Tensor& bv2 = t.value(b);
    int64_t m2 = av2.shape[0], n2 = av2.shape[1];
    if (t.requires_grad(a)) {
      Tensor da({m2, n2});
      for (int64_t i = 0; i < m2; ++i)
        for (int64_t j = 0; j < n2; ++j) da.at(i, j) = bv2.at(i, j) * g.at(i, 0);
      t.accumulate(a, da);
    }
    if (t.requires_grad(b)) {
      Tensor db({m2, n2});
      for (int64_t i = 0; i < m2; ++i)
        for (int64_t j = 0; j < n2; ++j) db.at(i, j) = av2.at(i, j) * g.at(i, 0);
      t.accumulate(b, db);
    }
  };
  return r;
}

Var Tape::batchnorm_train(Var x, Var gamma, Var beta, double eps, Tensor* batch_mean_out,
                          Tensor* batch_var_out) {
  const Tensor& xv = value(x);
  if (xv.rank() != 2) throw DimensionError("batchnorm: expects rank-2 input");
  int64_t n = xv.shape[0], d = xv.shape[1];
  Tensor mu = kernels::col_mean(xv);
  Tensor var({1, d});
  for (int64_t j = 0; j < d; ++j) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double c = xv.at(i, j) - mu.at(0, j);
      s += c * c;
    }
    var.at(0, j) = s / static_cast<double>(n);
  }
  if (batch_mean_out) *batch_mean_out = mu;
  if (batch_var_out) *batch_var_out = var;
  Tensor out({n, d});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j)
      out.at(i, j) = (xv.at(i, j) - mu.at(0, j)) / std::sqrt(var.at(0, j) + eps) *
                         value(gamma).at(j) +
                     value(beta).at(j);
  bool ng = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
  Var r = emit(std::move(out), ng, nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [x, gamma, beta, r, mu, var, eps](Tape& t) {
    const Tensor& g = t.grad_ref(r);
    const Tensor& xv2 = t.value(x);
    const Tensor& gam = t.value(gamma);
    int64_t n2 = xv2.shape[0], d2 = xv2.shape[1];
    Tensor dgamma({d2}), dbeta({d2});
    Tensor dx({n2, d2});
    for (int64_t j = 0; j < d2; ++j) {
      double istd = 1.0 / std::sqrt(var.at(0, j) + eps);
      double sum_g = 0.0, sum_gx = 0.0;
      for (int64_t i = 0; i < n2; ++i) {
        double xh = (xv2.at(i, j) - mu.at(0, j)) * istd;
        sum_g += g.at(i, j);
        sum_gx += g.at(i, j) * xh;
      }
      dbeta.at(j) = sum_g;
      dgamma.at(j) = sum_gx;
      double gj = gam.at(j);
      for (int64_t i = 0; i < n2; ++i) {
        double xh = (xv2.at(i, j) - mu.at(0, j)) * istd;
        dx.at(i, j) = gj * istd *
                      (g.at(i, j) - sum_g / static_cast<double>(n2) -
                       xh * sum_gx / static_cast<double>(n2));
      }
    }
    t.accumulate(x, dx);
    if (t.requires_grad(gamma)) t.accumulate(gamma, dgamma);
    if (t.requires_grad(beta)) t.accumulate(beta, dbeta);
  };
  return r;
}

Var Tape::batchnorm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean,
                         const Tensor& running_var, double eps) {
  const Tensor& xv = value(x);
  int64_t n = xv.shape[0], d = xv.shape[1];
  Tensor out({n, d});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j)
      out.at(i, j) = (xv.at(i, j) - running_mean.at(j)) /
                         std::sqrt(running_var.at(j) + eps) * value(gamma).at(j) +
                     value(beta).at(j);
  bool ng = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
  Var r = emit(std::move(out), ng, nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [x, gamma, beta, r, running_mean, running_var,
                                            eps](Tape& t) {
    const Tensor& g = t.grad_ref(r);
    const Tensor& xv2 = t.value(x);
    const Tensor& gam = t.value(gamma);
    int64_t n2 = xv2.shape[0], d2 = xv2.shape[1];
    Tensor dx({n2, d2}), dgamma({d2}), dbeta({d2});
    for (int64_t j = 0; j < d2; ++j) {
      double istd = 1.0 / std::sqrt(running_var.at(j) + eps);
      for (int64_t i = 0; i < n2; ++i) {
        double xh = (xv2.at(i, j) - running_mean.at(j)) * istd;
        dx.at(i, j) = g.at(i, j) * gam.at(j) * istd;
        dgamma.at(j) += g.at(i, j) * xh;
        dbeta.at(j) += g.at(i, j);
      }
    }
    t.accumulate(x, dx);
    if (t.requires_grad(gamma)) t.accumulate(gamma, dgamma);
    if (t.requires_grad(beta)) t.accumulate(beta, dbeta);
  };
  return r;
}

Var Tape::straight_through(Var u, const Tensor& codebook, const std::vector<int32_t>& idx) {
  Tensor out = kernels::gather_rows(codebook, idx);
  Var r = emit(std::move(out), requires_grad(u), nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [u, r](Tape& t) {
    t.accumulate(u, t.grad_ref(r));
  };
  return r;
}

Var Tape::cross_entropy_logits(Var logits, const std::vector<int32_t>& labels) {
  const Tensor& lv = value(logits);
  if (lv.shape[0] != static_cast<int64_t>(labels.size()))
    throw DimensionError("cross_entropy: one label per row required");
  Tensor ls = kernels::log_softmax_rows(lv);
  int64_t n = lv.shape[0];
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) loss -= ls.at(i, labels[static_cast<size_t>(i)]);
  loss /= static_cast<double>(n);
  Var r = emit(Tensor::scalar(loss), requires_grad(logits), nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [logits, r, labels](Tape& t) {
    double g = t.grad_ref(r).data[0];
    Tensor p = kernels::softmax_rows(t.value(logits));
    int64_t n2 = p.shape[0];
    for (int64_t i = 0; i < n2; ++i) p.at(i, labels[static_cast<size_t>(i)]) -= 1.0;
    t.accumulate(logits, kernels::scale(p, g / static_cast<double>(n2)));
  };
  return r;
}

Var Tape::sigmoid_bce_logits(Var scores, Tensor targets01) {
  const Tensor& sv = value(scores);
  if (sv.numel() != targets01.numel())
    throw DimensionError("sigmoid_bce: score/target length mismatch");
  int64_t n = sv.numel();
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double s = sv.data[static_cast<size_t>(i)];
    double y = targets01.data[static_cast<size_t>(i)];
    double sp = s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
    loss += sp - y * s;
  }
  loss /= static_cast<double>(n);
  Var r = emit(Tensor::scalar(loss), requires_grad(scores), nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [scores, r, targets01 = std::move(targets01)](Tape& t) {
    double g = t.grad_ref(r).data[0];
    const Tensor& sv2 = t.value(scores);
    Tensor ds(sv2.shape);
    int64_t n2 = sv2.numel();
    for (int64_t i = 0; i < n2; ++i) {
      double s = sv2.data[static_cast<size_t>(i)];
      double sig = 1.0 / (1.0 + std::exp(-s));
      ds.data[static_cast<size_t>(i)] =
          g * (sig - targets01.data[static_cast<size_t>(i)]) / static_cast<double>(n2);
    }
    t.accumulate(scores, ds);
  };
  return r;
}

Var Tape::masked_sq_error(Var pred, Tensor target, Tensor mask) {
  const Tensor& pv = value(pred);
  if (!pv.same_shape(target) || !pv.same_shape(mask))
    throw DimensionError("masked_sq_error: shape mismatch");
  int64_t n = pv.numel();
  double nnz = 0.0, loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double m = mask.data[static_cast<size_t>(i)];
    double d = pv.data[static_cast<size_t>(i)] - target.data[static_cast<size_t>(i)];
    loss += m * d * d;
    nnz += m;
  }
  double denom = nnz > 0.0 ? nnz : 1.0;
  loss /= denom;
  Var r = emit(Tensor::scalar(loss), requires_grad(pred), nullptr);
  nodes_[static_cast<size_t>(r.id)].back =
      [pred, r, target = std::move(target), mask = std::move(mask), denom](Tape& t) {
        double g = t.grad_ref(r).data[0];
        const Tensor& pv2 = t.value(pred);
        Tensor dp(pv2.shape);
        int64_t n2 = pv2.numel();
        for (int64_t i = 0; i < n2; ++i)
          dp.data[static_cast<size_t>(i)] =
              g * 2.0 * mask.data[static_cast<size_t>(i)] *
              (pv2.data[static_cast<size_t>(i)] - target.data[static_cast<size_t>(i)]) / denom;
        t.accumulate(pred, dp);
      };
  return r;
}

Var Tape::gumbel_softmax_sample(Var logits, double tau, RngStream& rng) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax: tau must be positive");
  const Tensor& lv = value(logits);
  check_finite(lv, "gumbel_softmax");
  Tensor noisy = lv;
  int64_t n = noisy.numel();
  for (int64_t i = 0; i < n; ++i)
    noisy.data[static_cast<size_t>(i)] =
        (noisy.data[static_cast<size_t>(i)] + rng.gumbel()) / tau;
  Tensor y = kernels::softmax_rows(noisy);
  Var r = emit(std::move(y), requires_grad(logits), nullptr);
  nodes_[static_cast<size_t>(r.id)].back = [logits, r, tau](Tape& t) {
    const Tensor& g = t.grad_ref(r);
    const Tensor& y2 = t.value(r);
    int64_t m = y2.shape[0], k = y2.shape[1];
    Tensor da({m, k});
    for (int64_t i = 0; i < m; ++i) {
      double dotv = 0.0;
      for (int64_t j = 0; j < k; ++j) dotv += g.at(i, j) * y2.at(i, j);
      for (int64_t j = 0; j < k; ++j)
        da.at(i, j) = y2.at(i, j) * (g.at(i, j) - dotv) / tau;
    }
    t.accumulate(logits, da);
  };
  return r;
}

void Tape::backward(Var output) {
  Node& out = nodes_[static_cast<size_t>(output.id)];
  if (out.value.numel() != 1)
    throw DimensionError("backward: output must be scalar, got " + out.value.shape_str());
  for (auto& n : nodes_)
    if (n.grad.numel()) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
  if (out.grad.numel() == 0) out.grad = Tensor(out.value.shape);
  out.grad.data[0] = 1.0;
  for (int32_t id = output.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad || !n.back || n.grad.numel() == 0) continue;
    n.back(*this);
  }
}

}  // namespace stemgnn
