#ifndef SSEP_AUTOGRAD_HPP
#define SSEP_AUTOGRAD_HPP

#include <functional>
#include <memory>
#include <vector>

#include "ssep/array.hpp"
#include "ssep/kernels.hpp"

namespace ssep::ag {

// Reverse-mode autodiff over a dynamically built DAG. Backward functions
// build their results out of the same public ops, so gradients are
// themselves differentiable graphs when grad mode is on during the backward
// pass (create_graph) — required for the penalty on critic input gradients,
// whose parameter gradient needs a second differentiation.

template <typename T>
struct Node;

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  bool defined() const { return node_ != nullptr; }
  const Array<T>& value() const { return node_->value; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Node<T>* node() const { return node_.get(); }
  std::int64_t numel() const { return node_->value.size(); }
  const Shape& shape() const { return node_->value.shape(); }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
using BackwardFn = std::function<std::vector<Var<T>>(const Var<T>& gout)>;

template <typename T>
struct Node {
  Array<T> value;
  bool requires_grad = false;
  std::vector<Var<T>> parents;
  BackwardFn<T> backward;
};

/// Whether newly created ops record the graph (thread-local).
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }

 private:
  bool prev_;
};

template <typename T>
Var<T> constant(Array<T> v);
template <typename T>
Var<T> leaf(Array<T> v, bool requires_grad = true);
template <typename T>
Var<T> detach(const Var<T>& v);

// Elementwise & scalar ops.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> neg(const Var<T>& a);
template <typename T>
Var<T> scale(const Var<T>& a, T c);
template <typename T>
Var<T> add_scalar(const Var<T>& a, T c);
template <typename T>
Var<T> square(const Var<T>& a);
template <typename T>
Var<T> sqrt_elem(const Var<T>& a);
template <typename T>
Var<T> relu(const Var<T>& a);
template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope);

// `b` broadcasts against `a` (rank-4 semantics, size-1 dims repeat).
template <typename T>
Var<T> add_broadcast(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul_broadcast(const Var<T>& a, const Var<T>& b);

// Structure ops.
template <typename T>
Var<T> reshape(const Var<T>& a, Shape s);
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> slice_channels(const Var<T>& a, int c0, int c1);
/// Embed `a`'s channels [c0, c0+ca) into a zero tensor with total_c channels.
template <typename T>
Var<T> pad_channels(const Var<T>& a, int c0, int total_c);

// Reductions.
template <typename T>
Var<T> sum_all(const Var<T>& a);          // -> shape (1)
template <typename T>
Var<T> mean_all(const Var<T>& a);         // -> shape (1)
template <typename T>
Var<T> sum_per_example(const Var<T>& a);  // (m, ...) -> (m)
/// Repeat a scalar over `s`; adjoint of sum_all.
template <typename T>
Var<T> broadcast_scalar(const Var<T>& a, Shape s);
/// Repeat per-example scalars over trailing dims; adjoint of sum_per_example.
template <typename T>
Var<T> broadcast_per_example(const Var<T>& a, Shape s);

// Linear algebra / conv ops.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool trans_a = false, bool trans_b = false);
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const kernels::ConvGeom& g);
/// Adjoint of conv2d in its data argument; doubles as the forward pass of a
/// transposed convolution (g describes the conv out->in direction).
template <typename T>
Var<T> conv2d_data_adjoint(const Var<T>& gy, const Var<T>& w, const kernels::ConvGeom& g);
template <typename T>
Var<T> conv2d_weight_adjoint(const Var<T>& x, const Var<T>& gy, const kernels::ConvGeom& g);

/// Gradients of a scalar `root` with respect to `wrt`. With `create_graph`
/// the returned vars carry graphs and can be differentiated again. Leaves
/// that the root does not depend on get zero gradients.
template <typename T>
std::vector<Var<T>> grad(const Var<T>& root, const std::vector<Var<T>>& wrt, bool create_graph);

}  // namespace ssep::ag

#endif  // SSEP_AUTOGRAD_HPP
