#ifndef SSEP_ADAM_HPP
#define SSEP_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ssep/autograd.hpp"
#include "ssep/nn.hpp"

namespace ssep::nn {

struct AdamConfig {
  double lr = 0.0001;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;

  void validate() const {
    if (lr < 0) throw std::invalid_argument("adam: lr must be >= 0");
    if (!(0 <= beta1 && beta1 < beta2 && beta2 < 1))
      throw std::invalid_argument("adam: need 0 <= beta1 < beta2 < 1");
  }
};

/// Adam with bias correction. Moment buffers are indexed by parameter
/// position, so the parameter list must be stable across steps.
template <typename T>
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  void step(const std::vector<NamedParam<T>>& params, const std::vector<ag::Var<T>>& grads) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.var.value().shape());
        v_.emplace_back(p.var.value().shape());
      }
    }
    if (params.size() != grads.size() || params.size() != m_.size())
      throw std::invalid_argument("adam: parameter/gradient count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (size_t i = 0; i < params.size(); ++i) {
      Array<T>& p = const_cast<Array<T>&>(params[i].var.value());
      const Array<T>& g = grads[i].value();
      Array<T>& m = m_[i];
      Array<T>& v = v_[i];
      const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
      for (std::int64_t j = 0; j < p.size(); ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        const double mhat = static_cast<double>(m[j]) / bc1;
        const double vhat = static_cast<double>(v[j]) / bc2;
        p[j] -= static_cast<T>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

  const AdamConfig& config() const { return cfg_; }
  std::int64_t t() const { return t_; }
  std::vector<Array<T>>& m_state() { return m_; }
  std::vector<Array<T>>& v_state() { return v_; }
  void restore(std::int64_t t, std::vector<Array<T>> m, std::vector<Array<T>> v) {
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Array<T>> m_, v_;
};

}  // namespace ssep::nn

#endif  // SSEP_ADAM_HPP
