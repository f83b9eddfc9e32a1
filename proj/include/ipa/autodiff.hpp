#pragma once

// Reverse-mode automatic differentiation over dense Tensors.
//
// Every operation returns a Var. When gradient tracking is enabled and at
// least one operand requires a gradient, the result owns a Node recording its
// inputs and a derivative rule; backward() walks the reachable nodes in
// reverse topological order exactly once and accumulates into leaves.
//
// Broadcasting is never implicit: binary elementwise ops require identical
// shapes and `broadcast` expands an extent-1 axis explicitly.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ipa/tensor.hpp"

namespace ipa::ad {

struct Node {
  Tensor value;
  Tensor grad;  // empty until a gradient flows in
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;  // propagates `grad` into `inputs`
  const char* kind = "leaf";
  bool requires_grad = false;

  bool is_leaf() const noexcept { return inputs.empty(); }
  // Returns the gradient buffer, allocating zeros of value's shape if needed.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  // Mutable access for optimizers and loaders; shape must be preserved.
  Tensor& mutable_value() { return node_->value; }
  // Gradient of a leaf (zeros if nothing has flowed in yet).
  Tensor grad() const;
  Tensor& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad();

  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const noexcept { return static_cast<bool>(node_); }

  const std::shared_ptr<Node>& node() const noexcept { return node_; }
  static Var from_node(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

// A named trainable leaf.
struct Parameter {
  std::string name;
  Var var;
};

Var parameter(Tensor value);
Var constant(Tensor value);

bool grad_enabled() noexcept;

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- operations ----------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var power(const Var& a, double exponent);
Var relu(const Var& a);

// Sum over `axis` of a rank-2 tensor; the reduced axis keeps extent 1.
Var sum(const Var& a, std::size_t axis);
Var sum_all(const Var& a);
// Repeats an extent-1 `axis` of a rank-2 tensor `count` times.
Var broadcast(const Var& a, std::size_t axis, std::size_t count);

// Normalized exponential along `axis` of a rank-2 tensor, max-shifted.
// Entries equal to -inf receive exactly zero weight.
Var softmax(const Var& a, std::size_t axis);

// D[p, j] = ||x_.j - c_.p||^2 for x: n x m and centers: n x P.
Var sqdist(const Var& x, const Var& centers);

Var slice_rows(const Var& a, std::size_t begin, std::size_t end);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);

// Rows of `table` selected by `ids`: result is ids.size() x table.cols().
Var gather_rows(const Var& table, std::span<const std::int32_t> ids);

// out = mask != 0 ? value : a. The mask has a's shape.
Var masked_fill(const Var& a, const Tensor& mask, double value);

// Mean over columns j of -log softmax(logits[:, j])[targets[j]].
Var cross_entropy(const Var& logits, std::span<const std::int32_t> targets);

// ---- reverse pass --------------------------------------------------------

// Accumulates d(loss)/d(leaf) into every reachable leaf that requires a
// gradient. Intermediate gradients are released afterwards.
void backward(const Var& loss);

void zero_grad(std::span<Parameter> params);

// Number of nodes reachable from `root` (graph introspection for tests).
std::size_t graph_size(const Var& root);

}  // namespace ipa::ad
