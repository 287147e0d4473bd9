#include "ssep/autograd.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace ssep::ag {

// internal broadcast-reduction pair (adjoints of one another)
template <typename T>
Var<T> reduce_to_shape(const Var<T>& g, const Shape& target);
template <typename T>
Var<T> broadcast_to_shape(const Var<T>& b, const Shape& full);

namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
Var<T> make_node(Array<T> value, std::vector<Var<T>> parents, BackwardFn<T> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  if (g_grad_enabled) {
    for (const auto& p : parents) {
      if (p.defined() && p.requires_grad()) {
        n->requires_grad = true;
        break;
      }
    }
  }
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return Var<T>(std::move(n));
}

template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.value().shape() != b.value().shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.value().shape()) + " vs " +
                                shape_str(b.value().shape()));
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

template <typename T>
Var<T> constant(Array<T> v) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(v);
  return Var<T>(std::move(n));
}

template <typename T>
Var<T> leaf(Array<T> v, bool requires_grad) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  return Var<T>(std::move(n));
}

template <typename T>
Var<T> detach(const Var<T>& v) {
  return constant(v.value());
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "add");
  Array<T> out(a.value().shape());
  kernels::vadd(a.value().data(), b.value().data(), out.data(), out.size());
  return make_node<T>(std::move(out), {a, b},
                      [](const Var<T>& g) { return std::vector<Var<T>>{g, g}; });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "sub");
  Array<T> out(a.value().shape());
  kernels::vsub(a.value().data(), b.value().data(), out.data(), out.size());
  return make_node<T>(std::move(out), {a, b},
                      [](const Var<T>& g) { return std::vector<Var<T>>{g, neg(g)}; });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "mul");
  Array<T> out(a.value().shape());
  kernels::vmul(a.value().data(), b.value().data(), out.data(), out.size());
  return make_node<T>(std::move(out), {a, b}, [a, b](const Var<T>& g) {
    return std::vector<Var<T>>{mul(g, b), mul(g, a)};
  });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "div");
  Array<T> out(a.value().shape());
  kernels::vdiv(a.value().data(), b.value().data(), out.data(), out.size());
  return make_node<T>(std::move(out), {a, b}, [a, b](const Var<T>& g) {
    // d/da = g/b ; d/db = -g*a/b^2  (expressed via parents only, no
    // self-capture, so the node does not own itself through the closure)
    return std::vector<Var<T>>{div(g, b), neg(div(mul(g, a), square(b)))};
  });
}

template <typename T>
Var<T> neg(const Var<T>& a) {
  Array<T> out(a.value().shape());
  kernels::vscale(a.value().data(), T(-1), out.data(), out.size());
  return make_node<T>(std::move(out), {a},
                      [](const Var<T>& g) { return std::vector<Var<T>>{neg(g)}; });
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  Array<T> out(a.value().shape());
  kernels::vscale(a.value().data(), c, out.data(), out.size());
  return make_node<T>(std::move(out), {a},
                      [c](const Var<T>& g) { return std::vector<Var<T>>{scale(g, c)}; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
  Array<T> out(a.value().shape());
  const T* src = a.value().data();
  T* dst = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) dst[i] = src[i] + c;
  return make_node<T>(std::move(out), {a},
                      [](const Var<T>& g) { return std::vector<Var<T>>{g}; });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  Array<T> out(a.value().shape());
  kernels::vmul(a.value().data(), a.value().data(), out.data(), out.size());
  return make_node<T>(std::move(out), {a}, [a](const Var<T>& g) {
    return std::vector<Var<T>>{scale(mul(g, a), T(2))};
  });
}

template <typename T>
Var<T> sqrt_elem(const Var<T>& a) {
  Array<T> out(a.value().shape());
  const T* src = a.value().data();
  T* dst = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) dst[i] = std::sqrt(src[i]);
  return make_node<T>(std::move(out), {a}, [a](const Var<T>& g) {
    return std::vector<Var<T>>{div(scale(g, T(0.5)), sqrt_elem(a))};
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Array<T> out(a.value().shape());
  kernels::map_relu(a.value().data(), out.data(), out.size());
  Var<T> result = make_node<T>(std::move(out), {a}, nullptr);
  if (result.requires_grad()) {
    Array<T> mask(a.value().shape());
    kernels::map_mask_positive(a.value().data(), mask.data(), mask.size(), T(0));
    Var<T> mask_c = constant(std::move(mask));
    result.node()->backward = [mask_c](const Var<T>& g) {
      return std::vector<Var<T>>{mul(g, mask_c)};
    };
  }
  return result;
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  Array<T> out(a.value().shape());
  kernels::map_leaky_relu(a.value().data(), out.data(), out.size(), slope);
  Var<T> result = make_node<T>(std::move(out), {a}, nullptr);
  if (result.requires_grad()) {
    Array<T> mask(a.value().shape());
    kernels::map_mask_positive(a.value().data(), mask.data(), mask.size(), slope);
    Var<T> mask_c = constant(std::move(mask));
    result.node()->backward = [mask_c](const Var<T>& g) {
      return std::vector<Var<T>>{mul(g, mask_c)};
    };
  }
  return result;
}

template <typename T>
Var<T> add_broadcast(const Var<T>& a, const Var<T>& b) {
  Array<T> out(a.value().shape());
  kernels::broadcast_add(a.value(), b.value(), out);
  Shape b_shape = b.value().shape();
  return make_node<T>(std::move(out), {a, b}, [b_shape](const Var<T>& g) {
    return std::vector<Var<T>>{g, reduce_to_shape(g, b_shape)};
  });
}

template <typename T>
Var<T> mul_broadcast(const Var<T>& a, const Var<T>& b) {
  Array<T> out(a.value().shape());
  kernels::broadcast_mul(a.value(), b.value(), out);
  Shape b_shape = b.value().shape();
  return make_node<T>(std::move(out), {a, b}, [a, b, b_shape](const Var<T>& g) {
    return std::vector<Var<T>>{mul_broadcast(g, b), reduce_to_shape(mul(g, a), b_shape)};
  });
}

// Internal: sum g down to a broadcast-compatible shape (graph op so that the
// broadcast adjoints stay differentiable).
template <typename T>
Var<T> reduce_to_shape(const Var<T>& g, const Shape& target) {
  if (g.value().shape() == target) return g;
  Array<T> out(target);
  kernels::reduce_to(g.value(), out);
  Shape g_shape = g.value().shape();
  return make_node<T>(std::move(out), {g}, [g_shape](const Var<T>& u) {
    return std::vector<Var<T>>{broadcast_to_shape(u, g_shape)};
  });
}

template <typename T>
Var<T> broadcast_to_shape(const Var<T>& b, const Shape& full) {
  if (b.value().shape() == full) return b;
  Array<T> zeros(full);
  Array<T> out(full);
  kernels::broadcast_add(zeros, b.value(), out);
  Shape b_shape = b.value().shape();
  return make_node<T>(std::move(out), {b}, [b_shape](const Var<T>& u) {
    return std::vector<Var<T>>{reduce_to_shape(u, b_shape)};
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape s) {
  Array<T> out = a.value().reshaped(std::move(s));
  Shape orig = a.value().shape();
  return make_node<T>(std::move(out), {a}, [orig](const Var<T>& g) {
    return std::vector<Var<T>>{reshape(g, orig)};
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const auto& sa = a.value().shape();
  const auto& sb = b.value().shape();
  if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
    throw std::invalid_argument("concat_channels: incompatible shapes");
  const int n = sa[0], ca = sa[1], cb = sb[1], hw = sa[2] * sa[3];
  Array<T> out({n, ca + cb, sa[2], sa[3]});
  const std::int64_t a_n = static_cast<std::int64_t>(ca) * hw;
  const std::int64_t b_n = static_cast<std::int64_t>(cb) * hw;
  for (int e = 0; e < n; ++e) {
    std::memcpy(out.data() + e * (a_n + b_n), a.value().data() + e * a_n, sizeof(T) * a_n);
    std::memcpy(out.data() + e * (a_n + b_n) + a_n, b.value().data() + e * b_n, sizeof(T) * b_n);
  }
  return make_node<T>(std::move(out), {a, b}, [ca, cb](const Var<T>& g) {
    return std::vector<Var<T>>{slice_channels(g, 0, ca), slice_channels(g, ca, ca + cb)};
  });
}

template <typename T>
Var<T> slice_channels(const Var<T>& a, int c0, int c1) {
  const auto& s = a.value().shape();
  if (s.size() != 4 || c0 < 0 || c1 > s[1] || c0 >= c1)
    throw std::invalid_argument("slice_channels: bad range");
  const int n = s[0], c = s[1], hw = s[2] * s[3], cs = c1 - c0;
  Array<T> out({n, cs, s[2], s[3]});
  const std::int64_t in_n = static_cast<std::int64_t>(c) * hw;
  const std::int64_t out_n = static_cast<std::int64_t>(cs) * hw;
  for (int e = 0; e < n; ++e) {
    std::memcpy(out.data() + e * out_n, a.value().data() + e * in_n + c0 * hw, sizeof(T) * out_n);
  }
  const int total_c = c;
  return make_node<T>(std::move(out), {a}, [c0, total_c](const Var<T>& g) {
    return std::vector<Var<T>>{pad_channels(g, c0, total_c)};
  });
}

template <typename T>
Var<T> pad_channels(const Var<T>& a, int c0, int total_c) {
  const auto& s = a.value().shape();
  if (s.size() != 4) throw std::invalid_argument("pad_channels: rank-4 input required");
  const int n = s[0], ca = s[1], hw = s[2] * s[3];
  Array<T> out({n, total_c, s[2], s[3]});
  const std::int64_t in_n = static_cast<std::int64_t>(ca) * hw;
  const std::int64_t out_n = static_cast<std::int64_t>(total_c) * hw;
  for (int e = 0; e < n; ++e) {
    std::memcpy(out.data() + e * out_n + c0 * hw, a.value().data() + e * in_n, sizeof(T) * in_n);
  }
  const int c1 = c0 + ca;
  return make_node<T>(std::move(out), {a}, [c0, c1](const Var<T>& g) {
    return std::vector<Var<T>>{slice_channels(g, c0, c1)};
  });
}

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  Array<T> out({1});
  out[0] = static_cast<T>(kernels::reduce_sum(a.value().data(), a.value().size()));
  Shape s = a.value().shape();
  return make_node<T>(std::move(out), {a}, [s](const Var<T>& g) {
    return std::vector<Var<T>>{broadcast_scalar(g, s)};
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  return scale(sum_all(a), T(1.0 / static_cast<double>(a.value().size())));
}

template <typename T>
Var<T> sum_per_example(const Var<T>& a) {
  const auto& s = a.value().shape();
  const int m = s[0];
  const std::int64_t inner = a.value().size() / m;
  Array<T> out({m});
  for (int e = 0; e < m; ++e)
    out[e] = static_cast<T>(kernels::reduce_sum(a.value().data() + e * inner, inner));
  Shape shape = s;
  return make_node<T>(std::move(out), {a}, [shape](const Var<T>& g) {
    return std::vector<Var<T>>{broadcast_per_example(g, shape)};
  });
}

template <typename T>
Var<T> broadcast_scalar(const Var<T>& a, Shape s) {
  if (a.value().size() != 1) throw std::invalid_argument("broadcast_scalar: scalar input required");
  Array<T> out(s, a.value()[0]);
  return make_node<T>(std::move(out), {a},
                      [](const Var<T>& g) { return std::vector<Var<T>>{sum_all(g)}; });
}

template <typename T>
Var<T> broadcast_per_example(const Var<T>& a, Shape s) {
  const int m = s[0];
  if (a.value().size() != m)
    throw std::invalid_argument("broadcast_per_example: length must equal batch");
  Array<T> out(s);
  const std::int64_t inner = out.size() / m;
  for (int e = 0; e < m; ++e) {
    T v = a.value()[e];
    T* dst = out.data() + e * inner;
    for (std::int64_t i = 0; i < inner; ++i) dst[i] = v;
  }
  return make_node<T>(std::move(out), {a},
                      [](const Var<T>& g) { return std::vector<Var<T>>{sum_per_example(g)}; });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool ta, bool tb) {
  const auto& sa = a.value().shape();
  const auto& sb = b.value().shape();
  if (sa.size() != 2 || sb.size() != 2) throw std::invalid_argument("matmul: rank-2 inputs");
  const int m = ta ? sa[1] : sa[0];
  const int k = ta ? sa[0] : sa[1];
  const int kb = tb ? sb[1] : sb[0];
  const int n = tb ? sb[0] : sb[1];
  if (k != kb) throw std::invalid_argument("matmul: inner dims differ");
  Array<T> out({m, n});
  kernels::gemm(ta, tb, m, n, k, T(1), a.value().data(), sa[1], b.value().data(), sb[1], T(0),
                out.data(), n);
  return make_node<T>(std::move(out), {a, b}, [a, b, ta, tb](const Var<T>& g) {
    Var<T> da, db;
    if (!ta && !tb) {
      da = matmul(g, b, false, true);
      db = matmul(a, g, true, false);
    } else if (ta && !tb) {
      da = matmul(b, g, false, true);
      db = matmul(a, g, false, false);
    } else if (!ta && tb) {
      da = matmul(g, b, false, false);
      db = matmul(g, a, true, false);
    } else {
      da = matmul(b, g, true, true);
      db = matmul(g, a, true, true);
    }
    return std::vector<Var<T>>{da, db};
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const kernels::ConvGeom& g) {
  const int n = x.value().dim(0);
  const int co = w.value().dim(0);
  Array<T> out({n, co, g.out_h, g.out_w});
  kernels::conv2d_fwd(x.value(), w.value(), g, out);
  return make_node<T>(std::move(out), {x, w}, [x, w, g](const Var<T>& gy) {
    return std::vector<Var<T>>{conv2d_data_adjoint(gy, w, g), conv2d_weight_adjoint(x, gy, g)};
  });
}

template <typename T>
Var<T> conv2d_data_adjoint(const Var<T>& gy, const Var<T>& w, const kernels::ConvGeom& g) {
  const int n = gy.value().dim(0);
  const int ci = w.value().dim(1);
  Array<T> out({n, ci, g.in_h, g.in_w});
  kernels::conv2d_data_bwd(gy.value(), w.value(), g, out);
  return make_node<T>(std::move(out), {gy, w}, [gy, w, g](const Var<T>& u) {
    return std::vector<Var<T>>{conv2d(u, w, g), conv2d_weight_adjoint(u, gy, g)};
  });
}

template <typename T>
Var<T> conv2d_weight_adjoint(const Var<T>& x, const Var<T>& gy, const kernels::ConvGeom& g) {
  const int ci = x.value().dim(1);
  const int co = gy.value().dim(1);
  Array<T> out({co, ci, g.k_h, g.k_w});
  kernels::conv2d_weight_bwd(x.value(), gy.value(), g, out);
  return make_node<T>(std::move(out), {x, gy}, [x, gy, g](const Var<T>& v) {
    return std::vector<Var<T>>{conv2d_data_adjoint(gy, v, g), conv2d(x, v, g)};
  });
}

template <typename T>
std::vector<Var<T>> grad(const Var<T>& root, const std::vector<Var<T>>& wrt, bool create_graph) {
  if (root.numel() != 1) throw std::invalid_argument("grad: root must be scalar");

  std::vector<Var<T>> result(wrt.size());
  auto zero_fill = [&] {
    for (size_t i = 0; i < wrt.size(); ++i)
      result[i] = constant(Array<T>(wrt[i].value().shape()));
  };
  if (!root.requires_grad()) {
    zero_fill();
    return result;
  }

  // topological order: parents before node
  std::vector<Node<T>*> topo;
  std::unordered_set<Node<T>*> visited;
  {
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.emplace_back(root.node(), 0);
    visited.insert(root.node());
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->parents.size()) {
        Node<T>* p = node->parents[idx].node();
        ++idx;
        if (p && p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        topo.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::unordered_map<Node<T>*, Var<T>> grads;
  grads[root.node()] = constant(Array<T>(root.value().shape(), T(1)));

  bool prev_mode = grad_enabled();
  set_grad_enabled(create_graph);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node<T>* node = *it;
    auto git = grads.find(node);
    if (git == grads.end() || !node->backward) continue;
    std::vector<Var<T>> pgrads = node->backward(git->second);
    for (size_t i = 0; i < node->parents.size(); ++i) {
      const Var<T>& p = node->parents[i];
      if (!p.defined() || !p.requires_grad() || i >= pgrads.size() || !pgrads[i].defined())
        continue;
      auto pit = grads.find(p.node());
      if (pit == grads.end()) {
        grads[p.node()] = pgrads[i];
      } else {
        pit->second = add(pit->second, pgrads[i]);
      }
    }
  }
  set_grad_enabled(prev_mode);

  for (size_t i = 0; i < wrt.size(); ++i) {
    auto it = grads.find(wrt[i].node());
    if (it != grads.end()) {
      result[i] = it->second;
    } else {
      result[i] = constant(Array<T>(wrt[i].value().shape()));
    }
  }
  return result;
}

#define SSEP_INSTANTIATE_AG(T)                                                          \
  template Var<T> constant<T>(Array<T>);                                                \
  template Var<T> leaf<T>(Array<T>, bool);                                              \
  template Var<T> detach<T>(const Var<T>&);                                             \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                 \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                 \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                 \
  template Var<T> div<T>(const Var<T>&, const Var<T>&);                                 \
  template Var<T> neg<T>(const Var<T>&);                                                \
  template Var<T> scale<T>(const Var<T>&, T);                                           \
  template Var<T> add_scalar<T>(const Var<T>&, T);                                      \
  template Var<T> square<T>(const Var<T>&);                                             \
  template Var<T> sqrt_elem<T>(const Var<T>&);                                          \
  template Var<T> relu<T>(const Var<T>&);                                               \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                      \
  template Var<T> add_broadcast<T>(const Var<T>&, const Var<T>&);                       \
  template Var<T> mul_broadcast<T>(const Var<T>&, const Var<T>&);                       \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                     \
  template Var<T> concat_channels<T>(const Var<T>&, const Var<T>&);                     \
  template Var<T> slice_channels<T>(const Var<T>&, int, int);                           \
  template Var<T> pad_channels<T>(const Var<T>&, int, int);                             \
  template Var<T> sum_all<T>(const Var<T>&);                                            \
  template Var<T> mean_all<T>(const Var<T>&);                                           \
  template Var<T> sum_per_example<T>(const Var<T>&);                                    \
  template Var<T> broadcast_scalar<T>(const Var<T>&, Shape);                            \
  template Var<T> broadcast_per_example<T>(const Var<T>&, Shape);                       \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&, bool, bool);                  \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const kernels::ConvGeom&);    \
  template Var<T> conv2d_data_adjoint<T>(const Var<T>&, const Var<T>&,                  \
                                         const kernels::ConvGeom&);                     \
  template Var<T> conv2d_weight_adjoint<T>(const Var<T>&, const Var<T>&,                \
                                           const kernels::ConvGeom&);                   \
  template std::vector<Var<T>> grad<T>(const Var<T>&, const std::vector<Var<T>>&, bool);

SSEP_INSTANTIATE_AG(float)
SSEP_INSTANTIATE_AG(double)

#undef SSEP_INSTANTIATE_AG

}  // namespace ssep::ag
