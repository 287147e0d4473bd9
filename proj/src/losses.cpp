#include "ssep/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace ssep::losses {

LossWeights LossWeights::defaults(int n_sources) {
  LossWeights w;
  if (n_sources == 4) {
    w.alpha = {0.25, 0.25, 0.4, 0.1};
  } else {
    w.alpha.assign(n_sources, 1.0 / n_sources);
  }
  return w;
}

void LossWeights::validate(int n_sources) const {
  if (lambda_gp < 0 || beta_energy < 0)
    throw std::invalid_argument("loss weights: lambda and beta must be >= 0");
  if (static_cast<int>(alpha.size()) != n_sources)
    throw std::invalid_argument("loss weights: need one alpha per source");
  for (double a : alpha)
    if (a < 0) throw std::invalid_argument("loss weights: alpha must be >= 0");
}

template <typename T>
ag::Var<T> energy_preservation_loss(const std::vector<ag::Var<T>>& estimates,
                                    const Array<T>& mixture, double beta) {
  if (beta == 0.0) return ag::constant(Array<T>({1}, T(0)));
  if (estimates.empty()) throw std::invalid_argument("energy loss: no estimates");
  const int m = mixture.dim(0);

  ag::Var<T> total_energy;  // (m), sum over sources of per-example energy
  for (const auto& est : estimates) {
    if (est.value().dim(0) != m) throw std::invalid_argument("energy loss: batch mismatch");
    ag::Var<T> e = ag::sum_per_example(ag::square(est));
    total_energy = total_energy.defined() ? ag::add(total_energy, e) : e;
  }

  Array<T> mix_energy({m});
  const std::int64_t inner = mixture.size() / m;
  for (int e = 0; e < m; ++e)
    mix_energy[e] = static_cast<T>(kernels::reduce_sumsq(mixture.data() + e * inner, inner));

  ag::Var<T> gap = ag::sub(total_energy, ag::constant(std::move(mix_energy)));
  return ag::scale(ag::mean_all(ag::square(gap)), static_cast<T>(beta));
}

template <typename T>
Interpolates<T> sample_interpolates(const std::vector<Array<T>>& real,
                                    const std::vector<Array<T>>& fake, Rng& rng,
                                    bool shared_epsilon) {
  if (real.size() != fake.size()) throw std::invalid_argument("interpolates: source count differs");
  Interpolates<T> out;
  Array<T> shared;
  for (size_t s = 0; s < real.size(); ++s) {
    if (!real[s].same_shape(fake[s]))
      throw std::invalid_argument("interpolates: shape mismatch in source " + std::to_string(s));
    const int m = real[s].dim(0);
    Array<T> eps({m});
    if (shared_epsilon && s > 0) {
      eps = shared;
    } else {
      for (int e = 0; e < m; ++e) eps[e] = static_cast<T>(rng.uniform01());
      if (shared_epsilon) shared = eps;
    }
    Array<T> mix(real[s].shape());
    const std::int64_t inner = real[s].size() / m;
    for (int e = 0; e < m; ++e) {
      const T t = eps[e];
      const T* r = real[s].data() + e * inner;
      const T* f = fake[s].data() + e * inner;
      T* y = mix.data() + e * inner;
      for (std::int64_t i = 0; i < inner; ++i) y[i] = t * r[i] + (T(1) - t) * f[i];
    }
    out.values.push_back(std::move(mix));
    out.eps.push_back(std::move(eps));
  }
  return out;
}

template <typename T>
GradientPenalty<T> gradient_penalty(const CriticFn<T>& critic, const Array<T>& interpolates,
                                    double lambda_gp) {
  const int m = interpolates.dim(0);
  ag::Var<T> x =
      ag::leaf(interpolates.reshaped({m, 1, interpolates.dim(1), interpolates.dim(2)}));
  ag::Var<T> scores = critic(x);
  if (scores.value().size() != m)
    throw std::invalid_argument("gradient_penalty: critic must emit one score per example");
  ag::Var<T> g = ag::grad(ag::sum_all(scores), {x}, /*create_graph=*/true)[0];
  ag::Var<T> sumsq = ag::sum_per_example(ag::square(g));
  // tiny epsilon keeps sqrt differentiable at an exactly zero gradient
  ag::Var<T> norm = ag::sqrt_elem(ag::add_scalar(sumsq, static_cast<T>(1e-24)));
  ag::Var<T> pen =
      ag::scale(ag::mean_all(ag::square(ag::add_scalar(norm, T(-1)))), static_cast<T>(lambda_gp));

  GradientPenalty<T> out;
  out.penalty = pen;
  out.norms.resize(m);
  for (int e = 0; e < m; ++e) out.norms[e] = static_cast<double>(norm.value()[e]);
  return out;
}

template <typename T>
ag::Var<T> combined_critic_score(const std::vector<CriticFn<T>>& critics,
                                 const std::vector<ag::Var<T>>& sources,
                                 const std::vector<double>& alpha) {
  if (critics.size() != sources.size() || critics.size() != alpha.size())
    throw std::invalid_argument("combined_critic_score: critic/source/alpha counts differ");
  ag::Var<T> total;
  for (size_t i = 0; i < critics.size(); ++i) {
    if (alpha[i] == 0.0) continue;
    const auto& s = sources[i].value().shape();
    ag::Var<T> input = s.size() == 3 ? ag::reshape(sources[i], {s[0], 1, s[1], s[2]}) : sources[i];
    ag::Var<T> term = ag::scale(critics[i](input), static_cast<T>(alpha[i]));
    total = total.defined() ? ag::add(total, term) : term;
  }
  if (!total.defined()) {
    int m = sources.empty() ? 1 : sources[0].value().dim(0);
    total = ag::constant(Array<T>({m}, T(0)));
  }
  return total;
}

namespace {

template <typename T>
std::vector<ag::Var<T>> as_const_vars(const std::vector<Array<T>>& arrays) {
  std::vector<ag::Var<T>> out;
  out.reserve(arrays.size());
  for (const auto& a : arrays) out.push_back(ag::constant(a));
  return out;
}

// Evaluates each critic once; returns the weighted mean combined score plus
// the per-source mean scores for reporting. Critics with alpha == 0 are not
// evaluated (their contribution is identically zero) and report 0.
template <typename T>
struct ScoredCombination {
  ag::Var<T> mean_combined;          // scalar
  std::vector<double> source_means;  // E[d_i(s_i)]
};

template <typename T>
ScoredCombination<T> score_sources(const std::vector<CriticFn<T>>& critics,
                                   const std::vector<ag::Var<T>>& sources,
                                   const std::vector<double>& alpha) {
  if (critics.size() != sources.size() || critics.size() != alpha.size())
    throw std::invalid_argument("critic scoring: critic/source/alpha counts differ");
  ScoredCombination<T> out;
  ag::Var<T> total;
  for (size_t i = 0; i < critics.size(); ++i) {
    if (alpha[i] == 0.0) {
      out.source_means.push_back(0.0);
      continue;
    }
    const auto& s = sources[i].value().shape();
    ag::Var<T> input = s.size() == 3 ? ag::reshape(sources[i], {s[0], 1, s[1], s[2]}) : sources[i];
    ag::Var<T> scores = critics[i](input);
    out.source_means.push_back(kernels::reduce_sum(scores.value().data(), scores.value().size()) /
                               static_cast<double>(scores.value().size()));
    ag::Var<T> term = ag::scale(scores, static_cast<T>(alpha[i]));
    total = total.defined() ? ag::add(total, term) : term;
  }
  if (!total.defined()) {
    int m = sources.empty() ? 1 : sources[0].value().dim(0);
    total = ag::constant(Array<T>({m}, T(0)));
  }
  out.mean_combined = ag::mean_all(total);
  return out;
}

}  // namespace

template <typename T>
LossResult<T> critic_loss(const std::vector<CriticFn<T>>& critics,
                          const std::vector<Array<T>>& real_sources,
                          const std::vector<Array<T>>& fake_sources,
                          const std::vector<GradientPenalty<T>>& penalties,
                          const std::vector<double>& alpha, bool alpha_weighted_gp) {
  if (penalties.size() != critics.size())
    throw std::invalid_argument("critic_loss: one gradient penalty per source required");
  auto real = score_sources(critics, as_const_vars(real_sources), alpha);
  auto fake = score_sources(critics, as_const_vars(fake_sources), alpha);

  ag::Var<T> pen_total;
  for (size_t i = 0; i < penalties.size(); ++i) {
    ag::Var<T> p = alpha_weighted_gp ? ag::scale(penalties[i].penalty, static_cast<T>(alpha[i]))
                                     : penalties[i].penalty;
    pen_total = pen_total.defined() ? ag::add(pen_total, p) : p;
  }

  LossResult<T> out;
  out.total = ag::add(ag::sub(fake.mean_combined, real.mean_combined), pen_total);
  out.breakdown.wasserstein = static_cast<double>(real.mean_combined.value()[0]) -
                              static_cast<double>(fake.mean_combined.value()[0]);
  out.breakdown.grad_penalty = static_cast<double>(pen_total.value()[0]);
  out.breakdown.energy = 0.0;
  out.breakdown.total = static_cast<double>(out.total.value()[0]);
  // per-source gap E[d_i(real_i)] - E[d_i(fake_i)]
  for (size_t i = 0; i < real.source_means.size(); ++i)
    out.breakdown.per_source_critic_scores.push_back(real.source_means[i] - fake.source_means[i]);
  for (const auto& p : penalties)
    out.interp_grad_norms.insert(out.interp_grad_norms.end(), p.norms.begin(), p.norms.end());
  return out;
}

template <typename T>
LossResult<T> generator_loss(const std::vector<CriticFn<T>>& critics,
                             const std::vector<ag::Var<T>>& fake_sources, const Array<T>& mixture,
                             const std::vector<double>& alpha, double beta) {
  auto fake = score_sources(critics, fake_sources, alpha);
  ag::Var<T> energy = energy_preservation_loss(fake_sources, mixture, beta);
  LossResult<T> out;
  out.total = ag::add(ag::neg(fake.mean_combined), energy);
  out.breakdown.wasserstein = static_cast<double>(fake.mean_combined.value()[0]);
  out.breakdown.grad_penalty = 0.0;
  out.breakdown.energy = static_cast<double>(energy.value()[0]);
  out.breakdown.total = static_cast<double>(out.total.value()[0]);
  out.breakdown.per_source_critic_scores = fake.source_means;
  return out;
}

#define SSEP_INSTANTIATE_LOSSES(T)                                                             \
  template ag::Var<T> energy_preservation_loss<T>(const std::vector<ag::Var<T>>&,              \
                                                  const Array<T>&, double);                    \
  template Interpolates<T> sample_interpolates<T>(const std::vector<Array<T>>&,                \
                                                  const std::vector<Array<T>>&, Rng&, bool);   \
  template GradientPenalty<T> gradient_penalty<T>(const CriticFn<T>&, const Array<T>&,         \
                                                  double);                                     \
  template ag::Var<T> combined_critic_score<T>(const std::vector<CriticFn<T>>&,                \
                                               const std::vector<ag::Var<T>>&,                 \
                                               const std::vector<double>&);                    \
  template LossResult<T> critic_loss<T>(const std::vector<CriticFn<T>>&,                       \
                                        const std::vector<Array<T>>&,                          \
                                        const std::vector<Array<T>>&,                          \
                                        const std::vector<GradientPenalty<T>>&,                \
                                        const std::vector<double>&, bool);                     \
  template LossResult<T> generator_loss<T>(const std::vector<CriticFn<T>>&,                    \
                                           const std::vector<ag::Var<T>>&, const Array<T>&,    \
                                           const std::vector<double>&, double);

SSEP_INSTANTIATE_LOSSES(float)
SSEP_INSTANTIATE_LOSSES(double)

#undef SSEP_INSTANTIATE_LOSSES

}  // namespace ssep::losses
