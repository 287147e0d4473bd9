#include "ssep/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ssep::nn {

namespace {

int down(int v, int stride) { return v / stride; }  // floor(in/stride)

std::string layer_err(const std::string& layer, const std::string& what) {
  return "network build: layer " + layer + ": " + what;
}

}  // namespace

void SeparatorConfig::validate() const {
  if (n_sources < 2) throw std::invalid_argument("SeparatorConfig: n_sources must be >= 2");
  if (encoder_filters.size() != 4)
    throw std::invalid_argument("SeparatorConfig: expected 4 pre-bottleneck encoder filters");
  if (decoder_filters.size() != 5 || decoder_filters.back() != 1)
    throw std::invalid_argument("SeparatorConfig: decoder must have 5 stages ending in 1 filter");
  if (context_frames < (1 << 5) || freq_bins < (1 << 5))
    throw std::invalid_argument("SeparatorConfig: input too small for 5 stride-2 stages");
}

void CriticConfig::validate() const {
  if (filters.size() != strides.size() || filters.empty())
    throw std::invalid_argument("CriticConfig: filters/strides length mismatch");
}

template <typename T>
Array<T> init_uniform(Shape shape, int fan_in, Rng& rng) {
  Array<T> out(shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<T>(rng.uniform(-bound, bound));
  return out;
}

template <typename T>
ag::Var<T> Conv2d<T>::forward(const ag::Var<T>& x) const {
  return ag::add_broadcast(ag::conv2d(x, w, geom), b);
}

template <typename T>
ag::Var<T> ConvTranspose2d<T>::forward(const ag::Var<T>& x) const {
  return ag::add_broadcast(ag::conv2d_data_adjoint(x, w, geom), b);
}

template <typename T>
ag::Var<T> Dense<T>::forward(const ag::Var<T>& x) const {
  return ag::add_broadcast(ag::matmul(x, w), b);
}

namespace {

template <typename T>
Conv2d<T> make_conv(int ci, int co, int in_h, int in_w, int k, int stride, int out_h, int out_w,
                    Rng& rng, const std::string& name) {
  Conv2d<T> layer;
  try {
    layer.geom = ConvGeom::from_output_target(in_h, in_w, k, stride, out_h, out_w);
  } catch (const std::exception& e) {
    throw std::invalid_argument(layer_err(name, e.what()));
  }
  layer.w = ag::leaf(init_uniform<T>({co, ci, k, k}, ci * k * k, rng));
  layer.b = ag::leaf(Array<T>({1, co, 1, 1}));
  return layer;
}

template <typename T>
ConvTranspose2d<T> make_deconv(int ci, int co, int in_h, int in_w, int k, int stride, int out_h,
                               int out_w, Rng& rng, const std::string& name) {
  ConvTranspose2d<T> layer;
  try {
    // geometry of the conv that maps (out_h,out_w) back to (in_h,in_w)
    layer.geom = ConvGeom::from_output_target(out_h, out_w, k, stride, in_h, in_w);
  } catch (const std::exception& e) {
    throw std::invalid_argument(layer_err(name, e.what()));
  }
  layer.w = ag::leaf(init_uniform<T>({ci, co, k, k}, ci * k * k, rng));
  layer.b = ag::leaf(Array<T>({1, co, 1, 1}));
  return layer;
}

}  // namespace

template <typename T>
Separator<T>::Separator(SeparatorConfig config, std::uint64_t init_seed)
    : config_(std::move(config)) {
  config_.validate();
  Rng rng(init_seed);

  const int k = config_.kernel, s = config_.stride;
  int h = config_.context_frames, w = config_.freq_bins;
  int ci = 1;
  // 4 conv+ReLU stages, then the linear bottleneck conv with n*C_b filters
  for (size_t i = 0; i < config_.encoder_filters.size(); ++i) {
    int co = config_.encoder_filters[i];
    int oh = down(h, s), ow = down(w, s);
    enc_layers_.push_back(
        make_conv<T>(ci, co, h, w, k, s, oh, ow, rng, "enc" + std::to_string(i + 1)));
    ci = co;
    h = oh;
    w = ow;
  }
  {
    int co = config_.bottleneck_channels * config_.n_sources;
    int oh = down(h, s), ow = down(w, s);
    enc_layers_.push_back(make_conv<T>(ci, co, h, w, k, s, oh, ow, rng, "enc5"));
    h = oh;
    w = ow;
  }

  // one decoder per source; all share the same shape plan
  const auto enc_hw = encoder_shapes();
  for (int src = 0; src < config_.n_sources; ++src) {
    std::vector<ConvTranspose2d<T>> dec;
    int dh = h, dw = w;
    int dci = config_.bottleneck_channels;
    for (size_t i = 0; i < config_.decoder_filters.size(); ++i) {
      const bool last = i + 1 == config_.decoder_filters.size();
      int co = config_.decoder_filters[i];
      int oh = last ? config_.context_frames : dh * s;
      int ow = last ? config_.freq_bins : dw * s;
      std::string name = "dec" + std::to_string(src) + "." + std::to_string(i + 1);
      dec.push_back(make_deconv<T>(dci, co, dh, dw, k, s, oh, ow, rng, name));
      dci = co;
      if (config_.use_skip_connections && i < static_cast<size_t>(config_.skip_stages)) {
        // concat with the encoder stage of matching (H, W)
        int enc_stage = static_cast<int>(enc_hw.size()) - 2 - static_cast<int>(i);
        dci += enc_stage >= 0 ? config_.encoder_filters[enc_stage] : 0;
      }
      dh = oh;
      dw = ow;
    }
    decoders_.push_back(std::move(dec));
  }
}

template <typename T>
std::vector<std::pair<int, int>> Separator<T>::encoder_shapes() const {
  std::vector<std::pair<int, int>> out;
  for (const auto& l : enc_layers_) out.emplace_back(l.geom.out_h, l.geom.out_w);
  return out;
}

template <typename T>
std::vector<std::pair<int, int>> Separator<T>::decoder_shapes() const {
  std::vector<std::pair<int, int>> out;
  for (const auto& l : decoders_.front()) out.emplace_back(l.geom.in_h, l.geom.in_w);
  return out;
}

template <typename T>
std::vector<ag::Var<T>> Separator<T>::forward(const ag::Var<T>& x,
                                              const std::vector<Array<T>>& noise) const {
  if (static_cast<int>(noise.size()) != config_.n_sources)
    throw std::invalid_argument("separator forward: need one noise tensor per source");

  // encoder; ReLU after the first four stages, bottleneck stays linear until
  // the per-source noise has been added
  std::vector<ag::Var<T>> enc_out;
  ag::Var<T> h = x;
  for (size_t i = 0; i + 1 < enc_layers_.size(); ++i) {
    h = ag::relu(enc_layers_[i].forward(h));
    enc_out.push_back(h);
  }
  ag::Var<T> bottleneck = enc_layers_.back().forward(h);

  std::vector<ag::Var<T>> estimates;
  const int cb = config_.bottleneck_channels;
  for (int src = 0; src < config_.n_sources; ++src) {
    ag::Var<T> b_src = ag::slice_channels(bottleneck, src * cb, (src + 1) * cb);
    ag::Var<T> z = ag::constant(noise[src]);
    ag::Var<T> d = ag::relu(ag::add_broadcast(b_src, z));
    for (size_t i = 0; i < decoders_[src].size(); ++i) {
      d = ag::relu(decoders_[src][i].forward(d));
      if (config_.use_skip_connections && i < static_cast<size_t>(config_.skip_stages)) {
        int enc_stage = static_cast<int>(enc_layers_.size()) - 2 - static_cast<int>(i);
        d = ag::concat_channels(d, enc_out[enc_stage]);
      }
    }
    estimates.push_back(d);
  }
  return estimates;
}

template <typename T>
std::vector<Array<T>> Separator<T>::make_noise(int m, std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<Array<T>> noise;
  const int wb = bottleneck_width();
  for (int src = 0; src < config_.n_sources; ++src) {
    Array<T> z({m, 1, 1, wb});
    for (std::int64_t i = 0; i < z.size(); ++i) z[i] = static_cast<T>(rng.normal());
    noise.push_back(std::move(z));
  }
  return noise;
}

template <typename T>
std::vector<Array<T>> Separator<T>::zero_noise(int m) const {
  std::vector<Array<T>> noise;
  for (int src = 0; src < config_.n_sources; ++src)
    noise.emplace_back(Shape{m, 1, 1, bottleneck_width()});
  return noise;
}

template <typename T>
std::vector<Array<T>> Separator<T>::separate(const Array<T>& magnitudes,
                                             std::optional<std::uint64_t> noise_seed) const {
  if (!params_finite())
    throw std::runtime_error("separator: non-finite weights; refusing to run inference");
  const int m = magnitudes.dim(0);
  ag::NoGradGuard no_grad;
  ag::Var<T> x = ag::constant(
      magnitudes.reshaped({m, 1, magnitudes.dim(1), magnitudes.dim(2)}));
  auto noise = noise_seed ? make_noise(m, *noise_seed) : zero_noise(m);
  auto outs = forward(x, noise);
  std::vector<Array<T>> result;
  for (auto& o : outs)
    result.push_back(o.value().reshaped({m, magnitudes.dim(1), magnitudes.dim(2)}));
  return result;
}

template <typename T>
std::vector<NamedParam<T>> Separator<T>::params() {
  std::vector<NamedParam<T>> out;
  for (size_t i = 0; i < enc_layers_.size(); ++i) {
    out.push_back({"enc" + std::to_string(i + 1) + ".w", enc_layers_[i].w});
    out.push_back({"enc" + std::to_string(i + 1) + ".b", enc_layers_[i].b});
  }
  for (size_t s = 0; s < decoders_.size(); ++s) {
    for (size_t i = 0; i < decoders_[s].size(); ++i) {
      std::string base = "dec" + std::to_string(s) + "." + std::to_string(i + 1);
      out.push_back({base + ".w", decoders_[s][i].w});
      out.push_back({base + ".b", decoders_[s][i].b});
    }
  }
  return out;
}

template <typename T>
std::vector<NamedParam<T>> Separator<T>::params() const {
  return const_cast<Separator<T>*>(this)->params();
}

template <typename T>
bool Separator<T>::params_finite() const {
  for (const auto& p : params()) {
    const auto& v = p.var.value();
    for (std::int64_t i = 0; i < v.size(); ++i)
      if (!std::isfinite(static_cast<double>(v[i]))) return false;
  }
  return true;
}

template <typename T>
Critic<T>::Critic(CriticConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(init_seed);
  const int k = config_.kernel;
  int h = config_.context_frames, w = config_.freq_bins;
  int ci = 1;
  for (size_t i = 0; i < config_.filters.size(); ++i) {
    const int s = config_.strides[i];
    const int co = config_.filters[i];
    const int oh = down(h, s), ow = down(w, s);
    conv_layers_.push_back(
        make_conv<T>(ci, co, h, w, k, s, oh, ow, rng, "critic.conv" + std::to_string(i + 1)));
    ci = co;
    h = oh;
    w = ow;
  }
  const int features = ci * h * w;
  head_.w = ag::leaf(init_uniform<T>({features, 1}, features, rng));
  head_.b = ag::leaf(Array<T>({1, 1}));
}

template <typename T>
std::vector<std::pair<int, int>> Critic<T>::conv_shapes() const {
  std::vector<std::pair<int, int>> out;
  for (const auto& l : conv_layers_) out.emplace_back(l.geom.out_h, l.geom.out_w);
  return out;
}

template <typename T>
int Critic<T>::head_inputs() const {
  return head_.w.value().dim(0);
}

template <typename T>
ag::Var<T> Critic<T>::forward(const ag::Var<T>& x) const {
  const T slope = static_cast<T>(config_.leaky_slope);
  ag::Var<T> h = x;
  for (const auto& layer : conv_layers_) h = ag::leaky_relu(layer.forward(h), slope);
  const int m = h.value().dim(0);
  h = ag::reshape(h, {m, head_inputs()});
  h = ag::leaky_relu(head_.forward(h), slope);
  return ag::reshape(h, {m});
}

template <typename T>
std::vector<NamedParam<T>> Critic<T>::params() {
  std::vector<NamedParam<T>> out;
  for (size_t i = 0; i < conv_layers_.size(); ++i) {
    out.push_back({"conv" + std::to_string(i + 1) + ".w", conv_layers_[i].w});
    out.push_back({"conv" + std::to_string(i + 1) + ".b", conv_layers_[i].b});
  }
  out.push_back({"head.w", head_.w});
  out.push_back({"head.b", head_.b});
  return out;
}

template <typename T>
std::vector<NamedParam<T>> Critic<T>::params() const {
  return const_cast<Critic<T>*>(this)->params();
}

template struct Conv2d<float>;
template struct Conv2d<double>;
template struct ConvTranspose2d<float>;
template struct ConvTranspose2d<double>;
template struct Dense<float>;
template struct Dense<double>;
template class Separator<float>;
template class Separator<double>;
template class Critic<float>;
template class Critic<double>;
template Array<float> init_uniform<float>(Shape, int, Rng&);
template Array<double> init_uniform<double>(Shape, int, Rng&);

}  // namespace ssep::nn
