#ifndef SPARSERNN_AUTODIFF_HPP
#define SPARSERNN_AUTODIFF_HPP

// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// A graph is built eagerly: every op computes its value immediately and
// records its parents plus a local derivative rule. Nodes are numbered in
// creation order, which is a valid topological order, so backward() only has
// to collect the reachable subgraph and walk it by descending number.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sparsernn/errors.hpp"
#include "sparsernn/tensor.hpp"

namespace sparsernn::ad {

template <class Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;  // sized by backward(); empty until then
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> propagate;  // pushes this->grad into parents
  bool requires_grad = false;
  std::uint64_t order = 0;
};

namespace detail {

inline std::uint64_t next_order() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

// Handle to a graph node. Cheap to copy; copies share the node.
template <class Scalar>
class Var {
 public:
  using NodeType = Node<Scalar>;

  Var() = default;
  explicit Var(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

  const Tensor<Scalar>& value() const { return node_->value; }
  const Tensor<Scalar>& grad() const { return node_->grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool valid() const { return static_cast<bool>(node_); }

  // Scalar value of a 1×1 node.
  Scalar item() const {
    if (rows() != 1 || cols() != 1) throw UsageError("item() on non-scalar " + shape_string(value()));
    return node_->value(0, 0);
  }

  const NodeType* node() const { return node_.get(); }
  const std::shared_ptr<NodeType>& ptr() const { return node_; }

 private:
  std::shared_ptr<NodeType> node_;
};

// Trainable input: gradients are accumulated into it by backward().
template <class Scalar>
Var<Scalar> leaf(Tensor<Scalar> value) {
  auto n = std::make_shared<Node<Scalar>>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->order = detail::next_order();
  return Var<Scalar>(std::move(n));
}

template <class Scalar>
Var<Scalar> constant(Tensor<Scalar> value) {
  auto n = std::make_shared<Node<Scalar>>();
  n->value = std::move(value);
  n->requires_grad = false;
  n->order = detail::next_order();
  return Var<Scalar>(std::move(n));
}

template <class Scalar>
Var<Scalar> detach(const Var<Scalar>& v) {
  return constant<Scalar>(v.value());
}

namespace detail {

template <class Scalar>
Var<Scalar> make_node(Tensor<Scalar> value, std::vector<std::shared_ptr<Node<Scalar>>> parents,
                      std::function<void(Node<Scalar>&)> propagate, const char* op) {
  if (!value.allFinite()) throw NumericError(std::string(op) + ": produced non-finite values");
  auto n = std::make_shared<Node<Scalar>>();
  n->value = std::move(value);
  n->requires_grad = std::any_of(parents.begin(), parents.end(),
                                 [](const auto& p) { return p->requires_grad; });
  if (n->requires_grad) n->propagate = std::move(propagate);
  n->parents = std::move(parents);
  n->order = next_order();
  return Var<Scalar>(std::move(n));
}

// Sums g over the axes along which an operand of shape rows×cols was broadcast.
template <class Scalar>
Tensor<Scalar> reduce_to(const Tensor<Scalar>& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Tensor<Scalar>::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

// Returns t itself when it already has the target shape, else a broadcast copy
// held in `storage`.
template <class Scalar>
const Tensor<Scalar>& expand_to(const Tensor<Scalar>& t, Index rows, Index cols, Tensor<Scalar>& storage) {
  if (t.rows() == rows && t.cols() == cols) return t;
  storage = t.replicate(rows / t.rows(), cols / t.cols());
  return storage;
}

inline Index broadcast_dim(Index a, Index b, const char* op) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw DimensionError(std::string(op) + ": incompatible extents " + std::to_string(a) + " and " +
                       std::to_string(b));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <class Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: " + shape_string(a.value()) + " * " + shape_string(b.value()));
  Tensor<Scalar> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  return detail::make_node<Scalar>(
      std::move(out), {a.ptr(), b.ptr()},
      [](Node<Scalar>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) pa->grad.noalias() += self.grad * pb->value.transpose();
        if (pb->requires_grad) pb->grad.noalias() += pa->value.transpose() * self.grad;
      },
      "matmul");
}

// ---------------------------------------------------------------------------
// Elementwise binary ops with scalar/row/column broadcasting.

enum class BinaryOp { add, sub, mul, div };

template <class Scalar>
Var<Scalar> binary(BinaryOp op, const Var<Scalar>& a, const Var<Scalar>& b) {
  const char* name = op == BinaryOp::add ? "add" : op == BinaryOp::sub ? "sub" : op == BinaryOp::mul ? "mul" : "div";
  const Index r = detail::broadcast_dim(a.rows(), b.rows(), name);
  const Index c = detail::broadcast_dim(a.cols(), b.cols(), name);
  Tensor<Scalar> sa, sb;
  const Tensor<Scalar>& ax = detail::expand_to(a.value(), r, c, sa);
  const Tensor<Scalar>& bx = detail::expand_to(b.value(), r, c, sb);
  Tensor<Scalar> out(r, c);
  switch (op) {
    case BinaryOp::add: out = ax + bx; break;
    case BinaryOp::sub: out = ax - bx; break;
    case BinaryOp::mul: out = ax.cwiseProduct(bx); break;
    case BinaryOp::div: out = ax.cwiseQuotient(bx); break;
  }
  return detail::make_node<Scalar>(
      std::move(out), {a.ptr(), b.ptr()},
      [op](Node<Scalar>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const Index r = self.value.rows(), c = self.value.cols();
        const Tensor<Scalar>& g = self.grad;
        Tensor<Scalar> sa, sb;
        switch (op) {
          case BinaryOp::add:
            if (pa->requires_grad) pa->grad += detail::reduce_to<Scalar>(g, pa->value.rows(), pa->value.cols());
            if (pb->requires_grad) pb->grad += detail::reduce_to<Scalar>(g, pb->value.rows(), pb->value.cols());
            break;
          case BinaryOp::sub:
            if (pa->requires_grad) pa->grad += detail::reduce_to<Scalar>(g, pa->value.rows(), pa->value.cols());
            if (pb->requires_grad) pb->grad -= detail::reduce_to<Scalar>(g, pb->value.rows(), pb->value.cols());
            break;
          case BinaryOp::mul:
            if (pa->requires_grad) {
              Tensor<Scalar> ga = g.cwiseProduct(detail::expand_to(pb->value, r, c, sb));
              pa->grad += detail::reduce_to<Scalar>(ga, pa->value.rows(), pa->value.cols());
            }
            if (pb->requires_grad) {
              Tensor<Scalar> gb = g.cwiseProduct(detail::expand_to(pa->value, r, c, sa));
              pb->grad += detail::reduce_to<Scalar>(gb, pb->value.rows(), pb->value.cols());
            }
            break;
          case BinaryOp::div: {
            const Tensor<Scalar>& bx = detail::expand_to(pb->value, r, c, sb);
            if (pa->requires_grad) {
              Tensor<Scalar> ga = g.cwiseQuotient(bx);
              pa->grad += detail::reduce_to<Scalar>(ga, pa->value.rows(), pa->value.cols());
            }
            if (pb->requires_grad) {
              Tensor<Scalar> gb =
                  -(g.array() * detail::expand_to(pa->value, r, c, sa).array() / bx.array().square()).matrix();
              pb->grad += detail::reduce_to<Scalar>(gb, pb->value.rows(), pb->value.cols());
            }
            break;
          }
        }
      },
      name);
}

template <class Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) { return binary(BinaryOp::add, a, b); }
template <class Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) { return binary(BinaryOp::sub, a, b); }
template <class Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) { return binary(BinaryOp::mul, a, b); }
template <class Scalar>
Var<Scalar> div(const Var<Scalar>& a, const Var<Scalar>& b) { return binary(BinaryOp::div, a, b); }

template <class Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) { return add(a, b); }
template <class Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) { return sub(a, b); }

// ---------------------------------------------------------------------------
// Elementwise unary ops

enum class UnaryOp { sigmoid, tanh, log, sqrt, exp, neg, abs, softplus, square };

namespace detail {

template <class Derived>
auto stable_sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return S(0.5) * ((S(0.5) * x).tanh() + S(1));
}

}  // namespace detail

template <class Scalar>
Var<Scalar> unary(UnaryOp op, const Var<Scalar>& a) {
  const auto x = a.value().array();
  Tensor<Scalar> out(a.rows(), a.cols());
  const char* name = "unary";
  switch (op) {
    case UnaryOp::sigmoid: name = "sigmoid"; out = detail::stable_sigmoid(x).matrix(); break;
    case UnaryOp::tanh: name = "tanh"; out = x.tanh().matrix(); break;
    case UnaryOp::log:
      name = "log";
      if ((x <= Scalar(0)).any()) throw DomainError("log: non-positive input");
      out = x.log().matrix();
      break;
    case UnaryOp::sqrt:
      name = "sqrt";
      if ((x < Scalar(0)).any()) throw DomainError("sqrt: negative input");
      out = x.sqrt().matrix();
      break;
    case UnaryOp::exp: name = "exp"; out = x.exp().matrix(); break;
    case UnaryOp::neg: name = "neg"; out = (-x).matrix(); break;
    case UnaryOp::abs: name = "abs"; out = x.abs().matrix(); break;
    case UnaryOp::softplus:
      name = "softplus";
      out = ((-x.abs()).exp().log1p() + x.max(Scalar(0))).matrix();
      break;
    case UnaryOp::square: name = "square"; out = x.square().matrix(); break;
  }
  return detail::make_node<Scalar>(
      std::move(out), {a.ptr()},
      [op](Node<Scalar>& self) {
        auto& p = self.parents[0];
        const auto g = self.grad.array();
        const auto y = self.value.array();
        const auto x = p->value.array();
        auto& pg = p->grad;
        switch (op) {
          case UnaryOp::sigmoid: pg.array() += g * y * (Scalar(1) - y); break;
          case UnaryOp::tanh: pg.array() += g * (Scalar(1) - y.square()); break;
          case UnaryOp::log: pg.array() += g / x; break;
          case UnaryOp::sqrt: pg.array() += g / (Scalar(2) * y); break;
          case UnaryOp::exp: pg.array() += g * y; break;
          case UnaryOp::neg: pg.array() -= g; break;
          case UnaryOp::abs: pg.array() += g * x.sign(); break;
          case UnaryOp::softplus: pg.array() += g * detail::stable_sigmoid(x); break;
          case UnaryOp::square: pg.array() += Scalar(2) * g * x; break;
        }
      },
      name);
}

template <class Scalar> Var<Scalar> sigmoid(const Var<Scalar>& a) { return unary(UnaryOp::sigmoid, a); }
template <class Scalar> Var<Scalar> tanh(const Var<Scalar>& a) { return unary(UnaryOp::tanh, a); }
template <class Scalar> Var<Scalar> log(const Var<Scalar>& a) { return unary(UnaryOp::log, a); }
template <class Scalar> Var<Scalar> sqrt(const Var<Scalar>& a) { return unary(UnaryOp::sqrt, a); }
template <class Scalar> Var<Scalar> exp(const Var<Scalar>& a) { return unary(UnaryOp::exp, a); }
template <class Scalar> Var<Scalar> neg(const Var<Scalar>& a) { return unary(UnaryOp::neg, a); }
template <class Scalar> Var<Scalar> abs(const Var<Scalar>& a) { return unary(UnaryOp::abs, a); }
template <class Scalar> Var<Scalar> softplus(const Var<Scalar>& a) { return unary(UnaryOp::softplus, a); }
template <class Scalar> Var<Scalar> square(const Var<Scalar>& a) { return unary(UnaryOp::square, a); }
template <class Scalar> Var<Scalar> operator-(const Var<Scalar>& a) { return neg(a); }

// s * a + shift, with s and shift compile-time-free constants.
template <class Scalar>
Var<Scalar> affine(const Var<Scalar>& a, Scalar s, Scalar shift = Scalar(0)) {
  Tensor<Scalar> out = ((a.value().array() * s) + shift).matrix();
  return detail::make_node<Scalar>(
      std::move(out), {a.ptr()},
      [s](Node<Scalar>& self) { self.parents[0]->grad += s * self.grad; }, "affine");
}

template <class Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  return affine(a, s);
}

// Gradient passes where lo <= x <= hi, zero elsewhere.
template <class Scalar>
Var<Scalar> clamp(const Var<Scalar>& a, Scalar lo, Scalar hi) {
  Tensor<Scalar> out = a.value().array().max(lo).min(hi).matrix();
  return detail::make_node<Scalar>(
      std::move(out), {a.ptr()},
      [lo, hi](Node<Scalar>& self) {
        auto& p = self.parents[0];
        const auto x = p->value.array();
        p->grad.array() += ((x >= lo) && (x <= hi)).select(self.grad.array(), Scalar(0));
      },
      "clamp");
}

// ---------------------------------------------------------------------------
// Structural ops

template <class Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  Tensor<Scalar> out = Tensor<Scalar>::Constant(1, 1, a.value().sum());
  return detail::make_node<Scalar>(
      std::move(out), {a.ptr()},
      [](Node<Scalar>& self) { self.parents[0]->grad.array() += self.grad(0, 0); }, "sum");
}

// Row lookup; repeated indices scatter-add on the way back.
template <class Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& m, std::span<const Index> idx) {
  const Index n = m.rows();
  Tensor<Scalar> out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= n)
      throw IndexError("gather_rows: index " + std::to_string(idx[r]) + " outside [0, " + std::to_string(n) + ")");
    out.row(static_cast<Index>(r)) = m.value().row(idx[r]);
  }
  std::vector<Index> saved(idx.begin(), idx.end());
  return detail::make_node<Scalar>(
      std::move(out), {m.ptr()},
      [saved = std::move(saved)](Node<Scalar>& self) {
        auto& pg = self.parents[0]->grad;
        for (std::size_t r = 0; r < saved.size(); ++r) pg.row(saved[r]) += self.grad.row(static_cast<Index>(r));
      },
      "gather_rows");
}

// out(i, 0) = m(i, idx[i]).
template <class Scalar>
Var<Scalar> gather_per_row(const Var<Scalar>& m, std::span<const Index> idx) {
  if (static_cast<Index>(idx.size()) != m.rows())
    throw DimensionError("gather_per_row: " + std::to_string(idx.size()) + " indices for " +
                         std::to_string(m.rows()) + " rows");
  Tensor<Scalar> out(m.rows(), 1);
  for (Index r = 0; r < m.rows(); ++r) {
    const Index j = idx[static_cast<std::size_t>(r)];
    if (j < 0 || j >= m.cols())
      throw IndexError("gather_per_row: index " + std::to_string(j) + " outside [0, " + std::to_string(m.cols()) + ")");
    out(r, 0) = m.value()(r, j);
  }
  std::vector<Index> saved(idx.begin(), idx.end());
  return detail::make_node<Scalar>(
      std::move(out), {m.ptr()},
      [saved = std::move(saved)](Node<Scalar>& self) {
        auto& pg = self.parents[0]->grad;
        for (std::size_t r = 0; r < saved.size(); ++r) pg(static_cast<Index>(r), saved[r]) += self.grad(static_cast<Index>(r), 0);
      },
      "gather_per_row");
}

template <class Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw IndexError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside " + shape_string(a.value()));
  Tensor<Scalar> out = a.value().middleCols(start, count);
  return detail::make_node<Scalar>(
      std::move(out), {a.ptr()},
      [start, count](Node<Scalar>& self) { self.parents[0]->grad.middleCols(start, count) += self.grad; },
      "slice_cols");
}

template <class Scalar>
Var<Scalar> slice_rows(const Var<Scalar>& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw IndexError("slice_rows: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside " + shape_string(a.value()));
  Tensor<Scalar> out = a.value().middleRows(start, count);
  return detail::make_node<Scalar>(
      std::move(out), {a.ptr()},
      [start, count](Node<Scalar>& self) { self.parents[0]->grad.middleRows(start, count) += self.grad; },
      "slice_rows");
}

// Vertical stack of equally wide blocks.
template <class Scalar>
Var<Scalar> concat_rows(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw UsageError("concat_rows: no inputs");
  const Index c = parts.front().cols();
  Index r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw DimensionError("concat_rows: column mismatch");
    r += p.rows();
  }
  Tensor<Scalar> out(r, c);
  std::vector<std::shared_ptr<Node<Scalar>>> parents;
  parents.reserve(parts.size());
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
    parents.push_back(p.ptr());
  }
  return detail::make_node<Scalar>(
      std::move(out), std::move(parents),
      [](Node<Scalar>& self) {
        Index at = 0;
        for (auto& p : self.parents) {
          if (p->requires_grad) p->grad += self.grad.middleRows(at, p->value.rows());
          at += p->value.rows();
        }
      },
      "concat_rows");
}

// Mean over rows of -log softmax(logits)[target]; softmax and NLL fused with
// max-subtraction so confident logits do not overflow.
template <class Scalar>
Var<Scalar> softmax_cross_entropy(const Var<Scalar>& logits, std::span<const Index> targets) {
  const Index b = logits.rows(), k = logits.cols();
  if (static_cast<Index>(targets.size()) != b)
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(b) + " rows");
  if (b == 0) throw UsageError("softmax_cross_entropy: empty batch");
  const auto& x = logits.value();
  Tensor<Scalar> probs(b, k);
  Scalar total = 0;
  for (Index r = 0; r < b; ++r) {
    const Index t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= k)
      throw IndexError("softmax_cross_entropy: target " + std::to_string(t) + " outside [0, " + std::to_string(k) + ")");
    const Scalar m = x.row(r).maxCoeff();
    probs.row(r) = (x.row(r).array() - m).exp().matrix();
    const Scalar z = probs.row(r).sum();
    probs.row(r) /= z;
    total += (m + std::log(z)) - x(r, t);
  }
  Tensor<Scalar> out = Tensor<Scalar>::Constant(1, 1, total / static_cast<Scalar>(b));
  std::vector<Index> saved(targets.begin(), targets.end());
  return detail::make_node<Scalar>(
      std::move(out), {logits.ptr()},
      [probs = std::move(probs), saved = std::move(saved)](Node<Scalar>& self) {
        const Scalar g = self.grad(0, 0) / static_cast<Scalar>(probs.rows());
        auto& pg = self.parents[0]->grad;
        pg += g * probs;
        for (std::size_t r = 0; r < saved.size(); ++r) pg(static_cast<Index>(r), saved[r]) -= g;
      },
      "softmax_cross_entropy");
}

// ---------------------------------------------------------------------------

// Populates grad on every node reachable from `loss` (which must be 1×1).
// Gradients from earlier backward passes are discarded.
template <class Scalar>
void backward(const Var<Scalar>& loss) {
  if (!loss.valid() || loss.rows() != 1 || loss.cols() != 1)
    throw UsageError("backward: root must be a scalar, got " + (loss.valid() ? shape_string(loss.value()) : "null"));
  std::vector<Node<Scalar>*> nodes;
  std::unordered_set<const Node<Scalar>*> seen;
  std::vector<Node<Scalar>*> stack{loss.ptr().get()};
  while (!stack.empty()) {
    Node<Scalar>* n = stack.back();
    stack.pop_back();
    if (!n->requires_grad || !seen.insert(n).second) continue;
    nodes.push_back(n);
    for (auto& p : n->parents) stack.push_back(p.get());
  }
  std::sort(nodes.begin(), nodes.end(), [](const auto* a, const auto* b) { return a->order > b->order; });
  for (auto* n : nodes) n->grad = Tensor<Scalar>::Zero(n->value.rows(), n->value.cols());
  if (nodes.empty()) return;
  loss.ptr()->grad(0, 0) = Scalar(1);
  for (auto* n : nodes)
    if (n->propagate) n->propagate(*n);
}

}  // namespace sparsernn::ad

#endif  // SPARSERNN_AUTODIFF_HPP
