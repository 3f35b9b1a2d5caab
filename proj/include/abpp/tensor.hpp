#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "abpp/rng.hpp"

namespace abpp {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<MatX<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const MatX<S>>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << "]";
  return os.str();
}

inline Index shape_numel(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

inline void check_shape_dims(const Shape& s, const char* who) {
  for (Index d : s) {
    if (d <= 0)
      throw std::invalid_argument(std::string(who) + ": dimensions must be positive, got " +
                                  shape_str(s));
  }
}

// --- gradient recording mode -------------------------------------------------
// Thread-local so evaluation batches can fan out across threads, each with its
// own mode, while a training step (single-threaded) records normally.

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

struct NoGradGuard {
  NoGradGuard() : prev_(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// --- graph node ---------------------------------------------------------------

template <typename S>
struct NodeT {
  Shape shape;
  VecX<S> value;
  VecX<S> grad;  // empty until the backward pass (or an accumulation) touches it
  bool requires_grad = false;
  bool tracked = false;  // reachable from some requires_grad leaf
  bool backward_consumed = false;
  std::vector<std::shared_ptr<NodeT>> parents;      // tracked parents, for ordering
  std::function<void(const VecX<S>&)> backward_fn;  // out-grad -> accumulate into parents
};

// Value-semantics handle onto a shared graph node. Copies alias the node, so
// tensors are cheap to pass around and safe to move between threads as long
// as a recorded graph stays confined to the thread that built it.
template <typename S>
class TensorT {
 public:
  TensorT() = default;

  static TensorT leaf(Shape shape, VecX<S> data, bool requires_grad = false) {
    check_shape_dims(shape, "tensor");
    if (shape_numel(shape) != data.size())
      throw std::invalid_argument("tensor: shape " + shape_str(shape) + " wants " +
                                  std::to_string(shape_numel(shape)) + " values, got " +
                                  std::to_string(data.size()));
    TensorT t;
    t.n_ = std::make_shared<NodeT<S>>();
    t.n_->shape = std::move(shape);
    t.n_->value = std::move(data);
    t.n_->requires_grad = requires_grad;
    t.n_->tracked = requires_grad;
    return t;
  }

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    Index n = shape_numel(shape);
    return leaf(std::move(shape), VecX<S>::Zero(n), requires_grad);
  }

  static TensorT full(Shape shape, S v, bool requires_grad = false) {
    Index n = shape_numel(shape);
    return leaf(std::move(shape), VecX<S>::Constant(n, v), requires_grad);
  }

  static TensorT scalar(S v) { return full({1}, v); }

  static TensorT from_matrix(const MatX<S>& m, bool requires_grad = false) {
    VecX<S> v(m.size());
    MatMap<S>(v.data(), m.rows(), m.cols()) = m;
    return leaf({m.rows(), m.cols()}, std::move(v), requires_grad);
  }

  static TensorT uniform(Shape shape, Rng& rng, S lo, S hi, bool requires_grad = false) {
    Index n = shape_numel(shape);
    VecX<S> v(n);
    for (Index i = 0; i < n; ++i) v[i] = S(rng.uniform(double(lo), double(hi)));
    return leaf(std::move(shape), std::move(v), requires_grad);
  }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  Index numel() const { return node().value.size(); }
  Index dim(size_t i) const { return node().shape.at(i); }
  size_t rank() const { return node().shape.size(); }

  // Matrix view: all leading axes folded into rows, last axis as columns.
  Index cols() const {
    const Shape& s = node().shape;
    return s.empty() ? 1 : s.back();
  }
  Index rows() const { return numel() / cols(); }

  VecX<S>& value() { return node().value; }
  const VecX<S>& value() const { return node().value; }

  ConstMatMap<S> mat() const { return ConstMatMap<S>(node().value.data(), rows(), cols()); }
  MatMap<S> mat_mut() { return MatMap<S>(node().value.data(), rows(), cols()); }

  S item() const {
    if (numel() != 1)
      throw std::invalid_argument("item: tensor has shape " + shape_str(shape()) +
                                  ", expected a single element");
    return node().value[0];
  }

  bool requires_grad() const { return node().requires_grad; }
  bool tracked() const { return defined() && n_->tracked; }

  bool has_grad() const { return node().grad.size() != 0; }
  // Gradient as a dense vector; zeros if backward never reached this tensor.
  VecX<S> grad() const {
    const NodeT<S>& nd = node();
    if (nd.grad.size() == 0) return VecX<S>::Zero(nd.value.size());
    return nd.grad;
  }
  ConstMatMap<S> grad_mat() const {
    const NodeT<S>& nd = node();
    if (nd.grad.size() == 0)
      throw std::logic_error("grad_mat: no gradient recorded for this tensor");
    return ConstMatMap<S>(nd.grad.data(), rows(), cols());
  }

  void zero_grad() {
    if (defined()) n_->grad.resize(0);
  }

  NodeT<S>& node() {
    require();
    return *n_;
  }
  const NodeT<S>& node() const {
    require();
    return *n_;
  }
  std::shared_ptr<NodeT<S>> node_ptr() const { return n_; }

  // Ensures a zero-initialized gradient buffer and returns a matrix view of it.
  MatMap<S> grad_accum() {
    NodeT<S>& nd = node();
    if (nd.grad.size() == 0) nd.grad = VecX<S>::Zero(nd.value.size());
    return MatMap<S>(nd.grad.data(), rows(), cols());
  }
  Eigen::Map<VecX<S>> grad_accum_vec() {
    NodeT<S>& nd = node();
    if (nd.grad.size() == 0) nd.grad = VecX<S>::Zero(nd.value.size());
    return Eigen::Map<VecX<S>>(nd.grad.data(), nd.grad.size());
  }

 private:
  void require() const {
    if (!n_) throw std::logic_error("tensor: operation on an empty handle");
  }
  std::shared_ptr<NodeT<S>> n_;
};

// Builds an op node. `backward` receives the node's output gradient and must
// accumulate into the parents it captured (via grad_accum). Parents that are
// not tracked are recorded only as lambda captures, not graph edges. This is
// also the extension point for custom ops in tests.
template <typename S, typename BW>
TensorT<S> make_op(Shape shape, VecX<S> value, std::vector<TensorT<S>> parents, BW&& backward) {
  TensorT<S> out = TensorT<S>::leaf(std::move(shape), std::move(value), false);
  if (!grad_enabled()) return out;
  bool any_tracked = false;
  for (const auto& p : parents)
    if (p.tracked()) any_tracked = true;
  if (!any_tracked) return out;
  NodeT<S>& nd = out.node();
  nd.tracked = true;
  nd.backward_fn = std::forward<BW>(backward);
  for (const auto& p : parents)
    if (p.tracked()) nd.parents.push_back(p.node_ptr());
  return out;
}

// Reverse sweep from a scalar loss. Replays the recorded operations in
// reverse topological (i.e. reverse forward) order, accumulating dL/dx into
// every tracked node. A record can only be consumed once.
template <typename S>
void backward(TensorT<S> loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: empty tensor");
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                shape_str(loss.shape()));
  NodeT<S>& root = loss.node();
  if (root.backward_consumed)
    throw std::logic_error("backward: this computation record was already consumed");
  root.backward_consumed = true;
  if (!root.tracked) return;  // constant loss: every gradient is zero

  // Iterative post-order DFS; post-order of a DAG is a topological order, and
  // children are emitted before parents, matching forward execution order.
  std::vector<NodeT<S>*> order;
  std::unordered_set<NodeT<S>*> seen;
  std::vector<std::pair<NodeT<S>*, size_t>> stack;
  stack.push_back({&root, 0});
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT<S>* p = node->parents[next++].get();
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.grad = VecX<S>::Ones(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT<S>* node = *it;
    if (!node->backward_fn) continue;
    if (node->grad.size() == 0) continue;  // no contribution reached this node
    node->backward_fn(node->grad);
  }
}

using Tensor = TensorT<double>;

// Named parameter list; ordered, so optimizer iteration is deterministic.
using Params = std::vector<std::pair<std::string, Tensor>>;

inline void zero_grad(Params& params) {
  for (auto& [name, t] : params) t.zero_grad();
}

inline Tensor find_param(const Params& params, const std::string& name) {
  for (const auto& [n, t] : params)
    if (n == name) return t;
  throw std::invalid_argument("params: no parameter named '" + name + "'");
}

}  // namespace abpp
