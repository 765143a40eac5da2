#pragma once

// Tape-free reverse-mode autodiff over row-major double matrices. Each op
// allocates a node that remembers its parents and a backward closure; calling
// backward() on a scalar walks the graph in reverse topological order.
// Nodes whose inputs do not require gradients carry no closure at all, so
// inference through the same code path builds no graph.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "a2s/tensor_file.hpp"

namespace a2s::ad {

struct Node {
  Mat value;
  Mat grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Mat& g);
  template <typename Expr>
  void accumulate_expr(const Expr& g) {
    if (grad.size() == 0) grad = g;
    else grad += g;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(Mat value, bool requires_grad = false);

  const Mat& value() const { return node_->value; }
  Mat& mutable_value() { return node_->value; }
  const Mat& grad() const { return node_->grad; }
  Mat& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }
  bool defined() const { return static_cast<bool>(node_); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Mat value);
Var zeros(Eigen::Index rows, Eigen::Index cols);

// Seeds d(loss)/d(loss) = 1 and accumulates into every reachable node.
void backward(const Var& loss);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_bias(const Var& x, const Var& bias);  // bias is 1 x cols, broadcast over rows
Var scale(const Var& x, double s);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var relu(const Var& x);
Var exp(const Var& x);
Var clamp01(const Var& x);
// bound * tanh(x / bound): smooth limit to (-bound, bound).
Var soft_bound(const Var& x, double bound);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index n);
Var slice_rows(const Var& x, Eigen::Index start, Eigen::Index n);
// Reinterprets row-major storage with a new shape.
Var reshape(const Var& x, Eigen::Index rows, Eigen::Index cols);
Var gather_rows(const Var& table, std::span<const int> indices);

Var sum(const Var& x);
Var add_scalars(std::span<const Var> terms);

// Fused GRU update. gx and gh are the input and hidden projections laid out
// as [reset | update | candidate]; returns (1 - z) * n + z * h.
Var gru_cell(const Var& gx, const Var& gh, const Var& h);

// Sum over rows of -log softmax(logits)[target]; rows with target < 0 ignored.
Var softmax_cross_entropy(const Var& logits, std::span<const int> targets);
// Sum of elementwise binary cross-entropy with logits, weighted by mask (same shape or empty).
Var bce_with_logits(const Var& logits, const Mat& targets, const Mat& mask = Mat());
// Sum of squared differences against a constant target.
Var squared_error(const Var& pred, const Mat& target);
// Sum over all entries of KL(N(mean, exp(logvar)) || N(0, 1)).
Var kl_standard_normal(const Var& mean, const Var& logvar);
// mean + exp(0.5 * logvar) * noise.
Var reparameterize(const Var& mean, const Var& logvar, const Mat& noise);

}  // namespace a2s::ad
