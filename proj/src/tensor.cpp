#include "notasign/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "notasign/error.hpp"
#include "notasign/rng.hpp"

namespace notasign {

int64_t numel_of(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

namespace {

using Node = detail::TensorNode;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(Shape shape, std::vector<double> value) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return n;
}

Tensor wrap(NodePtr node) {
  Tensor t;
  t.node() = std::move(node);
  return t;
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                              shape_str(b));
}

// Attach graph edges when any input requires gradients; otherwise the result
// is a plain value and the graph stays empty.
void track(const NodePtr& out, std::initializer_list<NodePtr> parents,
           std::function<void(Node&)> backward_fn) {
  bool needs = false;
  for (const auto& p : parents) {
    if (p && p->requires_grad) needs = true;
  }
  if (!needs) return;
  out->requires_grad = true;
  out->parents.assign(parents.begin(), parents.end());
  out->backward_fn = std::move(backward_fn);
}

// C (m, n) += A (m, k) * B (k, n); ikj order so the inner loop streams rows.
void matmul_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = b + kk * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C (m, k) += A (m, n) * B^T where B is (k, n); row-by-row dot products.
void matmul_nt_acc(const double* a, const double* b, double* c, int64_t m, int64_t n, int64_t k) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double* brow = b + kk * n;
      double acc = 0.0;
      for (int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[kk] += acc;
    }
  }
}

// C (k, n) += A^T * B where A is (m, k), B is (m, n).
void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      double* crow = c + kk * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

enum class BroadcastKind { kSame, kScalarRight, kRowRight };

// add/mul accept (same shapes) | (x, scalar) | ((m, n), (n)).
BroadcastKind classify_broadcast(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return BroadcastKind::kSame;
  if (numel_of(b) == 1) return BroadcastKind::kScalarRight;
  if (a.size() == 2 && b.size() == 1 && b[0] == a[1]) return BroadcastKind::kRowRight;
  shape_error(op, a, b);
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = make_node(shape, std::vector<double>(static_cast<size_t>(numel_of(shape)), 0.0));
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = make_node(shape, std::vector<double>(static_cast<size_t>(numel_of(shape)), value));
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (numel_of(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("from_data: shape " + shape_str(shape) + " expects " +
                                std::to_string(numel_of(shape)) + " values, got " +
                                std::to_string(data.size()));
  }
  auto n = make_node(std::move(shape), std::move(data));
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

int64_t Tensor::dim(int axis) const {
  const int nd = ndim();
  if (axis < 0) axis += nd;
  return node_->shape[static_cast<size_t>(axis)];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("item: tensor has shape " + shape_str(shape()) +
                                ", expected a scalar");
  }
  return node_->value[0];
}

double Tensor::at(std::span<const int64_t> index) const {
  int64_t flat = 0;
  for (size_t i = 0; i < index.size(); ++i) flat = flat * node_->shape[i] + index[i];
  return node_->value[static_cast<size_t>(flat)];
}

Tensor Tensor::detached_clone() const {
  return Tensor::from_data(node_->shape, node_->value, false);
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got " +
                                (loss.defined() ? shape_str(loss.shape()) : std::string("null")));
  }
  Node* root = loss.node().get();
  if (!root->requires_grad) return;

  // Iterative post-order DFS to build a topological order over the subgraph
  // that requires gradients.
  std::vector<Node*> topo;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      Node* child = node->parents[next_child].get();
      ++next_child;
      if (child && child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* node = *it;
    if (!node->backward_fn) continue;
    for (auto& parent : node->parents) {
      if (parent && parent->requires_grad) parent->ensure_grad();
    }
    node->backward_fn(*node);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    shape_error("matmul", a.shape(), b.shape());
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto out = make_node({m, n}, std::vector<double>(static_cast<size_t>(m * n), 0.0));
  matmul_acc(a.data().data(), b.data().data(), out->value.data(), m, k, n);

  auto pa = a.node(), pb = b.node();
  track(out, {pa, pb}, [pa, pb, m, k, n](Node& o) {
    if (pa->requires_grad) matmul_nt_acc(o.grad.data(), pb->value.data(), pa->grad.data(), m, n, k);
    if (pb->requires_grad) matmul_tn_acc(pa->value.data(), o.grad.data(), pb->grad.data(), m, k, n);
  });
  return wrap(std::move(out));
}

Tensor add(const Tensor& a, const Tensor& b) {
  // Normalize so the broadcast side (if any) is on the right.
  if (a.numel() < b.numel()) return add(b, a);
  const BroadcastKind kind = classify_broadcast("add", a.shape(), b.shape());
  const int64_t n = a.numel();
  auto out = make_node(a.shape(), std::vector<double>(a.data().begin(), a.data().end()));
  const double* bv = b.data().data();
  double* ov = out->value.data();
  switch (kind) {
    case BroadcastKind::kSame:
      for (int64_t i = 0; i < n; ++i) ov[i] += bv[i];
      break;
    case BroadcastKind::kScalarRight:
      for (int64_t i = 0; i < n; ++i) ov[i] += bv[0];
      break;
    case BroadcastKind::kRowRight: {
      const int64_t cols = a.dim(1);
      for (int64_t i = 0; i < n; ++i) ov[i] += bv[i % cols];
      break;
    }
  }
  auto pa = a.node(), pb = b.node();
  track(out, {pa, pb}, [pa, pb, kind, n](Node& o) {
    const double* g = o.grad.data();
    if (pa->requires_grad) {
      double* ga = pa->grad.data();
      for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
    }
    if (pb->requires_grad) {
      double* gb = pb->grad.data();
      switch (kind) {
        case BroadcastKind::kSame:
          for (int64_t i = 0; i < n; ++i) gb[i] += g[i];
          break;
        case BroadcastKind::kScalarRight:
          for (int64_t i = 0; i < n; ++i) gb[0] += g[i];
          break;
        case BroadcastKind::kRowRight: {
          const int64_t cols = static_cast<int64_t>(pb->value.size());
          for (int64_t i = 0; i < n; ++i) gb[i % cols] += g[i];
          break;
        }
      }
    }
  });
  return wrap(std::move(out));
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.numel() < b.numel()) return mul(b, a);
  const BroadcastKind kind = classify_broadcast("mul", a.shape(), b.shape());
  const int64_t n = a.numel();
  auto out = make_node(a.shape(), std::vector<double>(static_cast<size_t>(n), 0.0));
  const double* av = a.data().data();
  const double* bv = b.data().data();
  double* ov = out->value.data();
  const int64_t cols = kind == BroadcastKind::kRowRight ? a.dim(1) : 0;
  for (int64_t i = 0; i < n; ++i) {
    const double bb = kind == BroadcastKind::kSame      ? bv[i]
                      : kind == BroadcastKind::kScalarRight ? bv[0]
                                                              : bv[i % cols];
    ov[i] = av[i] * bb;
  }
  auto pa = a.node(), pb = b.node();
  track(out, {pa, pb}, [pa, pb, kind, n, cols](Node& o) {
    const double* g = o.grad.data();
    const double* av = pa->value.data();
    const double* bv = pb->value.data();
    if (pa->requires_grad) {
      double* ga = pa->grad.data();
      for (int64_t i = 0; i < n; ++i) {
        const double bb = kind == BroadcastKind::kSame      ? bv[i]
                          : kind == BroadcastKind::kScalarRight ? bv[0]
                                                                  : bv[i % cols];
        ga[i] += g[i] * bb;
      }
    }
    if (pb->requires_grad) {
      double* gb = pb->grad.data();
      switch (kind) {
        case BroadcastKind::kSame:
          for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
          break;
        case BroadcastKind::kScalarRight:
          for (int64_t i = 0; i < n; ++i) gb[0] += g[i] * av[i];
          break;
        case BroadcastKind::kRowRight:
          for (int64_t i = 0; i < n; ++i) gb[i % cols] += g[i] * av[i];
          break;
      }
    }
  });
  return wrap(std::move(out));
}

Tensor scale(const Tensor& a, double c) {
  const int64_t n = a.numel();
  auto out = make_node(a.shape(), std::vector<double>(static_cast<size_t>(n), 0.0));
  const double* av = a.data().data();
  for (int64_t i = 0; i < n; ++i) out->value[static_cast<size_t>(i)] = av[i] * c;
  auto pa = a.node();
  track(out, {pa}, [pa, c, n](Node& o) {
    double* ga = pa->grad.data();
    const double* g = o.grad.data();
    for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * c;
  });
  return wrap(std::move(out));
}

Tensor silu(const Tensor& a) {
  const int64_t n = a.numel();
  auto out = make_node(a.shape(), std::vector<double>(static_cast<size_t>(n), 0.0));
  auto sig = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
  const double* av = a.data().data();
  for (int64_t i = 0; i < n; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-av[i]));
    (*sig)[static_cast<size_t>(i)] = s;
    out->value[static_cast<size_t>(i)] = av[i] * s;
  }
  auto pa = a.node();
  track(out, {pa}, [pa, sig, n](Node& o) {
    double* ga = pa->grad.data();
    const double* g = o.grad.data();
    const double* av = pa->value.data();
    for (int64_t i = 0; i < n; ++i) {
      const double s = (*sig)[static_cast<size_t>(i)];
      ga[i] += g[i] * s * (1.0 + av[i] * (1.0 - s));
    }
  });
  return wrap(std::move(out));
}

Tensor tanh_op(const Tensor& a) {
  const int64_t n = a.numel();
  auto out = make_node(a.shape(), std::vector<double>(static_cast<size_t>(n), 0.0));
  const double* av = a.data().data();
  for (int64_t i = 0; i < n; ++i) out->value[static_cast<size_t>(i)] = std::tanh(av[i]);
  auto pa = a.node();
  // Backward reads the stored tanh values through the node argument; holding
  // the output pointer in its own closure would leak the whole graph.
  track(out, {pa}, [pa, n](Node& o) {
    double* ga = pa->grad.data();
    const double* g = o.grad.data();
    const double* y = o.value.data();
    for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
  return wrap(std::move(out));
}

Tensor log_op(const Tensor& a) {
  const int64_t n = a.numel();
  auto out = make_node(a.shape(), std::vector<double>(static_cast<size_t>(n), 0.0));
  const double* av = a.data().data();
  for (int64_t i = 0; i < n; ++i) {
    if (!(av[i] > 0.0)) {
      throw NumericError("log: non-positive input " + std::to_string(av[i]) + " at index " +
                         std::to_string(i));
    }
    out->value[static_cast<size_t>(i)] = std::log(av[i]);
  }
  auto pa = a.node();
  track(out, {pa}, [pa, n](Node& o) {
    double* ga = pa->grad.data();
    const double* g = o.grad.data();
    const double* av = pa->value.data();
    for (int64_t i = 0; i < n; ++i) ga[i] += g[i] / av[i];
  });
  return wrap(std::move(out));
}

Tensor sum_all(const Tensor& a) {
  const int64_t n = a.numel();
  double total = 0.0;
  const double* av = a.data().data();
  for (int64_t i = 0; i < n; ++i) total += av[i];
  auto out = make_node({1}, {total});
  auto pa = a.node();
  track(out, {pa}, [pa, n](Node& o) {
    double* ga = pa->grad.data();
    const double g = o.grad[0];
    for (int64_t i = 0; i < n; ++i) ga[i] += g;
  });
  return wrap(std::move(out));
}

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.numel())); }

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const int nd = parts[0].ndim();
  if (axis < 0) axis += nd;
  if (nd != 2 || (axis != 0 && axis != 1)) {
    throw std::invalid_argument("concat: only 2-D tensors on axis 0 or 1, got " +
                                shape_str(parts[0].shape()));
  }
  const int64_t rows = parts[0].dim(0), cols = parts[0].dim(1);
  for (const auto& p : parts) {
    if (p.ndim() != 2) shape_error("concat", parts[0].shape(), p.shape());
    if (axis == 0 && p.dim(1) != cols) shape_error("concat", parts[0].shape(), p.shape());
    if (axis == 1 && p.dim(0) != rows) shape_error("concat", parts[0].shape(), p.shape());
  }
  int64_t total = 0;
  for (const auto& p : parts) total += p.dim(axis);
  const Shape out_shape = axis == 0 ? Shape{total, cols} : Shape{rows, total};
  auto out = make_node(out_shape, std::vector<double>(static_cast<size_t>(numel_of(out_shape)), 0.0));

  std::vector<NodePtr> parents;
  parents.reserve(parts.size());
  for (const auto& p : parts) parents.push_back(p.node());

  if (axis == 0) {
    int64_t row_off = 0;
    for (const auto& p : parts) {
      std::copy(p.data().begin(), p.data().end(), out->value.begin() + row_off * cols);
      row_off += p.dim(0);
    }
  } else {
    int64_t col_off = 0;
    const int64_t out_cols = out_shape[1];
    for (const auto& p : parts) {
      const int64_t pc = p.dim(1);
      const double* pv = p.data().data();
      for (int64_t r = 0; r < rows; ++r) {
        std::copy(pv + r * pc, pv + (r + 1) * pc, out->value.begin() + r * out_cols + col_off);
      }
      col_off += pc;
    }
  }

  bool needs = false;
  for (const auto& p : parents) {
    if (p->requires_grad) needs = true;
  }
  if (needs) {
    out->requires_grad = true;
    out->parents = parents;
    const int64_t out_cols = out_shape[1];
    out->backward_fn = [parents, axis, rows, out_cols](Node& o) {
      if (axis == 0) {
        int64_t row_off = 0;
        const int64_t cols = out_cols;
        for (const auto& p : parents) {
          const int64_t pr = p->shape[0];
          if (p->requires_grad) {
            p->ensure_grad();
            const double* g = o.grad.data() + row_off * cols;
            for (int64_t i = 0; i < pr * cols; ++i) p->grad[static_cast<size_t>(i)] += g[i];
          }
          row_off += pr;
        }
      } else {
        int64_t col_off = 0;
        for (const auto& p : parents) {
          const int64_t pc = p->shape[1];
          if (p->requires_grad) {
            p->ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
              const double* g = o.grad.data() + r * out_cols + col_off;
              double* pg = p->grad.data() + r * pc;
              for (int64_t j = 0; j < pc; ++j) pg[j] += g[j];
            }
          }
          col_off += pc;
        }
      }
    };
  }
  return wrap(std::move(out));
}

Tensor reshape(const Tensor& a, Shape new_shape) {
  if (numel_of(new_shape) != a.numel()) shape_error("reshape", a.shape(), new_shape);
  auto out = make_node(std::move(new_shape), std::vector<double>(a.data().begin(), a.data().end()));
  auto pa = a.node();
  const int64_t n = a.numel();
  track(out, {pa}, [pa, n](Node& o) {
    double* ga = pa->grad.data();
    const double* g = o.grad.data();
    for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
  });
  return wrap(std::move(out));
}

Tensor slice(const Tensor& a, int axis, int64_t start, int64_t length) {
  if (a.ndim() != 2 || (axis != 0 && axis != 1)) {
    throw std::invalid_argument("slice: only 2-D tensors on axis 0 or 1, got " +
                                shape_str(a.shape()));
  }
  const int64_t rows = a.dim(0), cols = a.dim(1);
  const int64_t limit = axis == 0 ? rows : cols;
  if (start < 0 || length < 0 || start + length > limit) {
    throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " +
                                std::to_string(start + length) + ") out of bounds for axis " +
                                std::to_string(axis) + " of " + shape_str(a.shape()));
  }
  Shape out_shape = axis == 0 ? Shape{length, cols} : Shape{rows, length};
  auto out = make_node(out_shape, std::vector<double>(static_cast<size_t>(numel_of(out_shape)), 0.0));
  const double* av = a.data().data();
  if (axis == 0) {
    std::copy(av + start * cols, av + (start + length) * cols, out->value.begin());
  } else {
    for (int64_t r = 0; r < rows; ++r) {
      std::copy(av + r * cols + start, av + r * cols + start + length,
                out->value.begin() + r * length);
    }
  }
  auto pa = a.node();
  track(out, {pa}, [pa, axis, start, length, rows, cols](Node& o) {
    double* ga = pa->grad.data();
    const double* g = o.grad.data();
    if (axis == 0) {
      for (int64_t i = 0; i < length * cols; ++i) ga[start * cols + i] += g[i];
    } else {
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t j = 0; j < length; ++j) ga[r * cols + start + j] += g[r * length + j];
      }
    }
  });
  return wrap(std::move(out));
}

Tensor transpose2d(const Tensor& a) {
  if (a.ndim() != 2) {
    throw std::invalid_argument("transpose2d: input must be 2-D, got " + shape_str(a.shape()));
  }
  const int64_t rows = a.dim(0), cols = a.dim(1);
  auto out = make_node({cols, rows}, std::vector<double>(static_cast<size_t>(rows * cols), 0.0));
  const double* av = a.data().data();
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) out->value[static_cast<size_t>(c * rows + r)] = av[r * cols + c];
  }
  auto pa = a.node();
  track(out, {pa}, [pa, rows, cols](Node& o) {
    double* ga = pa->grad.data();
    const double* g = o.grad.data();
    for (int64_t r = 0; r < rows; ++r) {
      for (int64_t c = 0; c < cols; ++c) ga[r * cols + c] += g[c * rows + r];
    }
  });
  return wrap(std::move(out));
}

Tensor gather_rows(const Tensor& table, std::span<const int> indices) {
  if (table.ndim() != 2) {
    throw std::invalid_argument("gather_rows: table must be 2-D, got " + shape_str(table.shape()));
  }
  const int64_t rows = table.dim(0), cols = table.dim(1);
  for (int idx : indices) {
    if (idx < 0 || idx >= rows) {
      throw std::invalid_argument("gather_rows: index " + std::to_string(idx) +
                                  " out of range for table " + shape_str(table.shape()));
    }
  }
  const int64_t out_rows = static_cast<int64_t>(indices.size());
  auto out = make_node({out_rows, cols}, std::vector<double>(static_cast<size_t>(out_rows * cols), 0.0));
  const double* tv = table.data().data();
  for (int64_t r = 0; r < out_rows; ++r) {
    const int64_t src = indices[static_cast<size_t>(r)];
    std::copy(tv + src * cols, tv + (src + 1) * cols, out->value.begin() + r * cols);
  }
  auto pt = table.node();
  std::vector<int> idx(indices.begin(), indices.end());
  track(out, {pt}, [pt, idx = std::move(idx), cols](Node& o) {
    double* gt = pt->grad.data();
    const double* g = o.grad.data();
    for (size_t r = 0; r < idx.size(); ++r) {
      double* dst = gt + static_cast<int64_t>(idx[r]) * cols;
      const double* src = g + static_cast<int64_t>(r) * cols;
      for (int64_t j = 0; j < cols; ++j) dst[j] += src[j];
    }
  });
  return wrap(std::move(out));
}

Tensor softmax_masked(const Tensor& scores, const std::vector<uint8_t>& key_padding) {
  if (scores.ndim() != 2) {
    throw std::invalid_argument("softmax_masked: scores must be 2-D, got " +
                                shape_str(scores.shape()));
  }
  const int64_t q = scores.dim(0), k = scores.dim(1);
  if (static_cast<int64_t>(key_padding.size()) != k) {
    throw std::invalid_argument("softmax_masked: mask length " + std::to_string(key_padding.size()) +
                                " does not match key count " + std::to_string(k));
  }
  bool any_valid = false;
  for (uint8_t m : key_padding) {
    if (!m) any_valid = true;
  }
  if (!any_valid) throw NumericError("softmax_masked: every key position is masked");

  auto out = make_node({q, k}, std::vector<double>(static_cast<size_t>(q * k), 0.0));
  const double* sv = scores.data().data();
  for (int64_t r = 0; r < q; ++r) {
    const double* row = sv + r * k;
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < k; ++j) {
      if (!key_padding[static_cast<size_t>(j)] && row[j] > mx) mx = row[j];
    }
    double denom = 0.0;
    double* orow = out->value.data() + r * k;
    for (int64_t j = 0; j < k; ++j) {
      if (key_padding[static_cast<size_t>(j)]) {
        orow[j] = 0.0;
      } else {
        orow[j] = std::exp(row[j] - mx);
        denom += orow[j];
      }
    }
    for (int64_t j = 0; j < k; ++j) orow[j] /= denom;
  }
  auto ps = scores.node();
  auto mask = std::make_shared<std::vector<uint8_t>>(key_padding);
  track(out, {ps}, [ps, mask, q, k](Node& o) {
    double* gs = ps->grad.data();
    const double* g = o.grad.data();
    const double* y = o.value.data();
    for (int64_t r = 0; r < q; ++r) {
      const double* grow = g + r * k;
      const double* yrow = y + r * k;
      double dot = 0.0;
      for (int64_t j = 0; j < k; ++j) dot += grow[j] * yrow[j];
      double* gsrow = gs + r * k;
      for (int64_t j = 0; j < k; ++j) {
        if (!(*mask)[static_cast<size_t>(j)]) gsrow[j] += yrow[j] * (grow[j] - dot);
      }
    }
  });
  return wrap(std::move(out));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.ndim() != 2) {
    throw std::invalid_argument("layer_norm: input must be 2-D, got " + shape_str(x.shape()));
  }
  const int64_t rows = x.dim(0), d = x.dim(1);
  if (gain.numel() != d || bias.numel() != d) shape_error("layer_norm", x.shape(), gain.shape());

  auto out = make_node({rows, d}, std::vector<double>(static_cast<size_t>(rows * d), 0.0));
  auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(rows * d));
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  const double* xv = x.data().data();
  const double* gv = gain.data().data();
  const double* bv = bias.data().data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* row = xv + r * d;
    double mean = 0.0;
    for (int64_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(r)] = is;
    double* orow = out->value.data() + r * d;
    double* hrow = xhat->data() + r * d;
    for (int64_t j = 0; j < d; ++j) {
      hrow[j] = (row[j] - mean) * is;
      orow[j] = gv[j] * hrow[j] + bv[j];
    }
  }
  auto px = x.node(), pg = gain.node(), pb = bias.node();
  track(out, {px, pg, pb}, [px, pg, pb, xhat, inv_std, rows, d](Node& o) {
    const double* g = o.grad.data();
    const double* gv = pg->value.data();
    for (int64_t r = 0; r < rows; ++r) {
      const double* grow = g + r * d;
      const double* hrow = xhat->data() + r * d;
      if (pg->requires_grad || pb->requires_grad) {
        for (int64_t j = 0; j < d; ++j) {
          if (pg->requires_grad) pg->grad[static_cast<size_t>(j)] += grow[j] * hrow[j];
          if (pb->requires_grad) pb->grad[static_cast<size_t>(j)] += grow[j];
        }
      }
      if (px->requires_grad) {
        const double is = (*inv_std)[static_cast<size_t>(r)];
        double mean_dy = 0.0, mean_dyh = 0.0;
        for (int64_t j = 0; j < d; ++j) {
          const double dy = grow[j] * gv[j];
          mean_dy += dy;
          mean_dyh += dy * hrow[j];
        }
        mean_dy /= static_cast<double>(d);
        mean_dyh /= static_cast<double>(d);
        double* gx = px->grad.data() + r * d;
        for (int64_t j = 0; j < d; ++j) {
          const double dy = grow[j] * gv[j];
          gx[j] += is * (dy - mean_dy - hrow[j] * mean_dyh);
        }
      }
    }
  });
  return wrap(std::move(out));
}

Tensor custom_op(Shape out_shape, std::vector<double> out_value, std::span<const Tensor> parents,
                 std::function<void(detail::TensorNode&)> backward_fn) {
  if (numel_of(out_shape) != static_cast<int64_t>(out_value.size())) {
    throw std::invalid_argument("custom_op: value size does not match shape " +
                                shape_str(out_shape));
  }
  auto out = make_node(std::move(out_shape), std::move(out_value));
  bool needs = false;
  for (const Tensor& p : parents) {
    if (p.requires_grad()) needs = true;
  }
  if (needs) {
    out->requires_grad = true;
    out->parents.reserve(parents.size());
    for (const Tensor& p : parents) out->parents.push_back(p.node());
    out->backward_fn = std::move(backward_fn);
  }
  return wrap(std::move(out));
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw std::invalid_argument("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const int64_t n = x.numel();
  const double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    (*mask)[static_cast<size_t>(i)] = rng.uniform01() < rate ? 0.0 : 1.0 / keep;
  }
  auto out = make_node(x.shape(), std::vector<double>(static_cast<size_t>(n), 0.0));
  const double* xv = x.data().data();
  for (int64_t i = 0; i < n; ++i) out->value[static_cast<size_t>(i)] = xv[i] * (*mask)[static_cast<size_t>(i)];
  auto px = x.node();
  track(out, {px}, [px, mask, n](Node& o) {
    double* gx = px->grad.data();
    const double* g = o.grad.data();
    for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * (*mask)[static_cast<size_t>(i)];
  });
  return wrap(std::move(out));
}

}  // namespace notasign
