#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "stemgnn/rng.hpp"
#include "stemgnn/tensor.hpp"

namespace stemgnn {

// Handle into a Tape; cheap to copy, invalid when id < 0.
struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Single-owner, not shared across threads; parallel evaluation
// uses one tape per worker. Ops reference only earlier nodes, so reverse node order
// is a topological order for backward accumulation.
class Tape {
 public:
  Var input(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return input(std::move(value), false); }

  // Value copy with no parents: backward contributes exactly zero to the wrapped node.
  Var stop_gradient(Var x);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_rowvec(Var a, Var v);
  Var mul_colvec(Var a, Var c);  // scale row i of a by c[i]; c is [n,1]
  Var slice_col(Var a, int64_t j);  // column j of a as [n,1]
  Var relu(Var a);
  Var softmax_rows(Var a);
  Var concat_cols(Var a, Var b);
  Var gather_rows(Var a, std::vector<int32_t> idx);
  // Holds references to the CSR arrays; the graph must outlive the tape.
  Var neighbor_mean(Var h, const std::vector<int64_t>& offsets,
                    const std::vector<int32_t>& targets);
  Var sum(Var a);
  Var mean(Var a);
  Var frobenius_sq(Var a);
  Var sq_dist_rows(Var a, Var b);
  Var rows_dot(Var a, Var b);
  Var batchnorm_train(Var x, Var gamma, Var beta, double eps, Tensor* batch_mean_out,
                      Tensor* batch_var_out);
  Var batchnorm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean,
                     const Tensor& running_var, double eps);
  // Forward emits the assigned codewords; backward copies the output gradient to u.
  // The codebook is consumed as plain values and receives no gradient here.
  Var straight_through(Var u, const Tensor& codebook, const std::vector<int32_t>& idx);
  Var cross_entropy_logits(Var logits, const std::vector<int32_t>& labels);
  Var sigmoid_bce_logits(Var scores, Tensor targets01);
  Var masked_sq_error(Var pred, Tensor target, Tensor mask);
  Var gumbel_softmax_sample(Var logits, double tau, RngStream& rng);

  void backward(Var output);

  const Tensor& value(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].needs_grad; }
  size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::function<void(Tape&)> back;  // pulls this node's grad into its parents
  };

  std::vector<Node> nodes_;

  Var emit(Tensor value, bool needs_grad, std::function<void(Tape&)> back);
  Tensor& grad_ref(Var v) { return nodes_[static_cast<size_t>(v.id)].grad; }
  void accumulate(Var v, const Tensor& g);
};

}  // namespace stemgnn
