#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sgtlab/tensor.hpp"

namespace sgtlab {

struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

// Reverse-mode tape over tensor operations. Nodes are created in evaluation
// order; backward() walks them in reverse. One tape per forward pass; all
// math is double precision.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  const Tensor& val(Var v) const { return nodes_[v.i].value; }
  const Tensor& grad(Var v) const { return nodes_[v.i].grad; }

  // Seeds d(root)=1 (root must be scalar) and accumulates grads on every node.
  void backward(Var root);

  size_t node_count() const { return nodes_.size(); }

  // elementwise, same shape
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  // value/grad forced to zero where |denominator| < eps
  Var guarded_div(Var num, Var den, double eps);
  Var minimum(Var a, Var b);
  Var maximum(Var a, Var b);
  Var atan2v(Var y, Var x);
  Var relu(Var a);
  Var leaky_relu(Var a, double slope);
  Var softplus(Var a);
  Var abs(Var a);
  Var scale(Var a, double c);
  Var scale_by(Var a, Var s);  // s is a scalar leaf
  Var add_const(Var a, double c);
  Var dropout(Var a, const Tensor& keep_mask, double keep_prob);

  // matrix ops on rank-2 tensors
  Var matmul(Var x, Var w);             // (R,K) x (K,C)
  Var add_row_broadcast(Var x, Var b);  // (R,C) + (C)
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_cols(Var x, int c0, int len);
  Var gather_rows(Var x, std::vector<int> idx);
  Var segment_sum_rows(Var x, int group);     // sums consecutive groups of rows
  Var layer_norm(Var x, Var gamma, Var beta); // per row, eps 1e-5
  Var sum_all(Var x);                         // -> scalar

  // per-row weighted cross entropy over logit rows; rows with weight 0 are
  // skipped entirely
  Var cross_entropy(Var scores, std::vector<int> targets, std::vector<double> weights);
  // cosine similarity of every feature row against every codebook row; rows
  // or codevectors of near-zero norm score 0 with zero gradient
  Var cosine_scores(Var features, Var codebook);

  // single-sample image ops on rank-3 (C,H,W) tensors
  Var conv2d(Var x, Var w, Var b, int stride, int pad);
  Var instance_norm(Var x, Var gamma, Var beta);  // per channel over H*W
  Var mean_pool_cells(Var x, std::vector<int> cell_idx);  // -> (1,C)

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void()> back;
  };
  std::vector<Node> nodes_;

  Var push(Tensor value, std::function<void()> back = nullptr);
  Tensor& g(Var v) { return nodes_[v.i].grad; }
  const Tensor& v(Var v) const { return nodes_[v.i].value; }
  void check_same_shape(Var a, Var b, const char* op) const;
};

}  // namespace sgtlab
