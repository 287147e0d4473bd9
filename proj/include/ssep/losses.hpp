#ifndef SSEP_LOSSES_HPP
#define SSEP_LOSSES_HPP

#include <functional>
#include <vector>

#include "ssep/autograd.hpp"
#include "ssep/rng.hpp"

namespace ssep::losses {

/// Mixing weights of the objective: lambda for the gradient penalty, beta
/// for the spectrum-energy term, alpha_i for the per-source critics.
struct LossWeights {
  double lambda_gp = 10.0;
  double beta_energy = 10.0;
  std::vector<double> alpha;

  /// Defaults: the published four-source weights for n=4 in the order
  /// (bass, drums, vocals, other); uniform 1/n otherwise.
  static LossWeights defaults(int n_sources);
  void validate(int n_sources) const;
};

struct LossBreakdown {
  double wasserstein = 0.0;
  double grad_penalty = 0.0;
  double energy = 0.0;
  double total = 0.0;
  std::vector<double> per_source_critic_scores;
};

template <typename T>
using CriticFn = std::function<ag::Var<T>(const ag::Var<T>&)>;

/// beta * mean_e (sum_i ||s_i[e]||^2 - ||x[e]||^2)^2. Estimates and mixture
/// must live in the same magnitude scaling (both normalized or both raw).
template <typename T>
ag::Var<T> energy_preservation_loss(const std::vector<ag::Var<T>>& estimates,
                                    const Array<T>& mixture, double beta);

/// Per-example, per-source convex combinations eps*real + (1-eps)*fake.
template <typename T>
struct Interpolates {
  std::vector<Array<T>> values;  // one (m, C, F) array per source
  std::vector<Array<T>> eps;     // one (m) array per source
};

template <typename T>
Interpolates<T> sample_interpolates(const std::vector<Array<T>>& real,
                                    const std::vector<Array<T>>& fake, Rng& rng,
                                    bool shared_epsilon = false);

template <typename T>
struct GradientPenalty {
  ag::Var<T> penalty;         // differentiable wrt critic parameters
  std::vector<double> norms;  // per-example input-gradient norms
};

/// lambda * mean_e (||d d(x)/dx [e]||_2 - 1)^2 on the given interpolates.
template <typename T>
GradientPenalty<T> gradient_penalty(const CriticFn<T>& critic, const Array<T>& interpolates,
                                    double lambda_gp);

/// Per-example combined score sum_i alpha_i * d_i(s_i); sources are
/// (m, C, F) and fed to critics as (m, 1, C, F).
template <typename T>
ag::Var<T> combined_critic_score(const std::vector<CriticFn<T>>& critics,
                                 const std::vector<ag::Var<T>>& sources,
                                 const std::vector<double>& alpha);

template <typename T>
struct LossResult {
  ag::Var<T> total;
  LossBreakdown breakdown;
  std::vector<double> interp_grad_norms;  // critic loss only
};

/// Critic objective: -E[D(real)] + E[D(fake)] + sum_i alpha_i * gp_i.
/// Minimizing it maximizes the inner (max over critics) objective; the
/// breakdown's `wasserstein` field reports E[D(real)] - E[D(fake)].
/// `penalties` must hold one gradient_penalty result per source, computed on
/// that source's interpolates. With `alpha_weighted_gp` false, penalties are
/// summed unweighted.
template <typename T>
LossResult<T> critic_loss(const std::vector<CriticFn<T>>& critics,
                          const std::vector<Array<T>>& real_sources,
                          const std::vector<Array<T>>& fake_sources,
                          const std::vector<GradientPenalty<T>>& penalties,
                          const std::vector<double>& alpha, bool alpha_weighted_gp = true);

/// Separator objective: -E[D(fake)] + energy term. The gradient penalty is
/// constant with respect to separator parameters (interpolates are constants
/// for this update), so it is not part of the returned total; the breakdown
/// field is filled by the caller for reporting.
template <typename T>
LossResult<T> generator_loss(const std::vector<CriticFn<T>>& critics,
                             const std::vector<ag::Var<T>>& fake_sources, const Array<T>& mixture,
                             const std::vector<double>& alpha, double beta);

}  // namespace ssep::losses

#endif  // SSEP_LOSSES_HPP
