#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace notasign {

class Rng;

using Shape = std::vector<int64_t>;

int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One node of the define-by-run graph. The graph is rebuilt on every forward
// pass; nodes own their value and (lazily) their gradient buffer. backward_fn
// reads this node's grad and accumulates into the parents' grads.
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// Value-semantics handle to a graph node. Tensors are immutable once created
// except for the grad buffer and in-place optimizer updates on leaf params.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  int64_t dim(int axis) const;
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> grad_mut() { return node_->grad; }
  void ensure_zero_grad() { node_->ensure_grad(); }
  void clear_grad() { node_->grad.clear(); }

  double item() const;
  double at(std::span<const int64_t> index) const;

  // Deep copy of the value; detached from any graph.
  Tensor detached_clone() const;

  std::shared_ptr<detail::TensorNode>& node() { return node_; }
  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Reverse-mode differentiation from a scalar loss. Gradients accumulate
// across calls until cleared.
void backward(const Tensor& loss);

// --- forward ops -----------------------------------------------------------
// Each op records the computation graph when any input requires gradients.

Tensor matmul(const Tensor& a, const Tensor& b);
// add/mul support equal shapes, scalar broadcast, and row-vector broadcast of
// a length-n vector across a (m, n) matrix.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor silu(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor sum_all(const Tensor& a);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor reshape(const Tensor& a, Shape new_shape);
Tensor slice(const Tensor& a, int axis, int64_t start, int64_t length);
Tensor transpose2d(const Tensor& a);
// Row gather from a (rows, cols) table; backward scatter-adds.
Tensor gather_rows(const Tensor& table, std::span<const int> indices);
// Row-wise softmax over the last axis of a (q, k) matrix. key_padding marks
// keys to exclude (true = padding); excluded keys get exactly zero weight.
Tensor softmax_masked(const Tensor& scores, const std::vector<uint8_t>& key_padding);
// Row-wise layer normalization of a (rows, d) matrix with learnable gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// Inverted dropout; identity when training == false or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

// Escape hatch for modules that implement a fused op with a hand-written
// backward. backward_fn reads the node's grad and accumulates into the
// parents' grads (buffers are pre-allocated for parents that require them).
Tensor custom_op(Shape out_shape, std::vector<double> out_value, std::span<const Tensor> parents,
                 std::function<void(detail::TensorNode&)> backward_fn);

}  // namespace notasign
