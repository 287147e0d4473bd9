#ifndef SSEP_NN_HPP
#define SSEP_NN_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssep/autograd.hpp"
#include "ssep/rng.hpp"

namespace ssep::nn {

using kernels::ConvGeom;

/// Separator (generator): strided-conv encoder, per-source noise injection
/// at the bottleneck, and n transposed-conv decoders with skip concatenation
/// from the matching encoder stages at the first three decoder stages.
struct SeparatorConfig {
  int n_sources = 4;
  int context_frames = 32;   // time axis (H)
  int freq_bins = 513;       // frequency axis (W)
  std::vector<int> encoder_filters = {16, 32, 64, 128};
  int bottleneck_channels = 256;  // per source; encoder's last layer emits n*this
  std::vector<int> decoder_filters = {128, 64, 64, 64, 1};
  int kernel = 3;
  int stride = 2;
  bool use_skip_connections = true;
  int skip_stages = 3;

  void validate() const;
};

/// Critic (discriminator): conv stack with LeakyReLU and a scalar
/// fully-connected head, no normalization layers (per-example input
/// gradients must stay independent across the batch).
struct CriticConfig {
  int context_frames = 32;
  int freq_bins = 513;
  std::vector<int> filters = {64, 64, 128, 128, 256, 256};
  std::vector<int> strides = {2, 2, 1, 2, 2, 1};
  int kernel = 3;
  double leaky_slope = 0.2;

  void validate() const;
};

template <typename T>
struct NamedParam {
  std::string name;
  ag::Var<T> var;
};

template <typename T>
struct Conv2d {
  ag::Var<T> w, b;
  ConvGeom geom;

  ag::Var<T> forward(const ag::Var<T>& x) const;
};

template <typename T>
struct ConvTranspose2d {
  // weights in conv layout (in_channels, out_channels, kh, kw); geom is the
  // conv that runs output -> input
  ag::Var<T> w, b;
  ConvGeom geom;

  ag::Var<T> forward(const ag::Var<T>& x) const;
};

template <typename T>
struct Dense {
  ag::Var<T> w, b;  // (in, out), (1, out)

  ag::Var<T> forward(const ag::Var<T>& x) const;
};

template <typename T>
class Separator {
 public:
  Separator() = default;
  Separator(SeparatorConfig config, std::uint64_t init_seed);

  /// x: (m, 1, C, F) in [0,1]; noise: one (m, 1, 1, W_b) array per source
  /// (W_b = bottleneck width), added to the source's bottleneck before the
  /// bottleneck ReLU. Returns n estimates, each (m, 1, C, F), nonnegative.
  std::vector<ag::Var<T>> forward(const ag::Var<T>& x,
                                  const std::vector<Array<T>>& noise) const;

  /// Inference entry: zero noise unless a seed is given; rejects non-finite
  /// weights. Input (m, C, F), outputs n arrays (m, C, F).
  std::vector<Array<T>> separate(const Array<T>& magnitudes,
                                 std::optional<std::uint64_t> noise_seed = std::nullopt) const;

  std::vector<Array<T>> make_noise(int m, std::uint64_t seed) const;
  std::vector<Array<T>> zero_noise(int m) const;

  std::vector<NamedParam<T>> params();
  std::vector<NamedParam<T>> params() const;
  const SeparatorConfig& config() const { return config_; }
  /// (H, W) after each encoder stage, bottleneck last.
  std::vector<std::pair<int, int>> encoder_shapes() const;
  /// (H, W) after each decoder stage.
  std::vector<std::pair<int, int>> decoder_shapes() const;
  int bottleneck_width() const { return enc_layers_.back().geom.out_w; }
  bool params_finite() const;

 private:
  SeparatorConfig config_;
  std::vector<Conv2d<T>> enc_layers_;
  // decoders_[source][stage]
  std::vector<std::vector<ConvTranspose2d<T>>> decoders_;
};

template <typename T>
class Critic {
 public:
  Critic() = default;
  Critic(CriticConfig config, std::uint64_t init_seed);

  /// x: (m, 1, C, F) -> scores (m).
  ag::Var<T> forward(const ag::Var<T>& x) const;
  ag::Var<T> operator()(const ag::Var<T>& x) const { return forward(x); }

  std::vector<NamedParam<T>> params();
  std::vector<NamedParam<T>> params() const;
  const CriticConfig& config() const { return config_; }
  std::vector<std::pair<int, int>> conv_shapes() const;
  int head_inputs() const;

 private:
  CriticConfig config_;
  std::vector<Conv2d<T>> conv_layers_;
  Dense<T> head_;
};

template <typename T>
Separator<T> build_separator(const SeparatorConfig& config, std::uint64_t init_seed) {
  return Separator<T>(config, init_seed);
}

template <typename T>
Critic<T> build_critic(const CriticConfig& config, std::uint64_t init_seed) {
  return Critic<T>(config, init_seed);
}

/// Uniform fan-in scaled initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
Array<T> init_uniform(Shape shape, int fan_in, Rng& rng);

}  // namespace ssep::nn

#endif  // SSEP_NN_HPP
