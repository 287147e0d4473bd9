#include "ssep/signal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ssep/container.hpp"
#include "ssep/kernels.hpp"

namespace ssep::signal {

namespace {

constexpr double kSynthesisFloor = 1e-8;

double wrap_phase(double p) {
  // atan2 yields [-pi, pi]; map -pi to pi so phases live in (-pi, pi]
  return p == -M_PI ? M_PI : p;
}

}  // namespace

std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / n));
  return w;
}

AudioClip downmix_to_mono(const AudioBuffer& buffer) {
  if (buffer.channels.empty()) throw std::invalid_argument("downmix: no channels");
  const size_t len = buffer.channels[0].size();
  for (const auto& ch : buffer.channels)
    if (ch.size() != len) throw std::invalid_argument("downmix: channel lengths differ");
  AudioClip out;
  out.sample_rate = buffer.sample_rate;
  out.samples.resize(len);
  const double inv_k = 1.0 / buffer.channels.size();
  for (size_t i = 0; i < len; ++i) {
    double acc = 0.0;
    for (const auto& ch : buffer.channels) acc += ch[i];
    out.samples[i] = acc * inv_k;
  }
  return out;
}

std::vector<std::vector<double>> frame_signal(const AudioClip& clip, int frame_size, int hop) {
  if (frame_size < 1) throw std::invalid_argument("frame_signal: frame_size must be >= 1");
  if (hop < 1 || hop > frame_size)
    throw std::invalid_argument("frame_signal: need 1 <= hop <= frame_size");
  const std::int64_t len = static_cast<std::int64_t>(clip.samples.size());
  const std::int64_t extra = std::max<std::int64_t>(len - frame_size, 0);
  const std::int64_t count = (extra + hop - 1) / hop + 1;
  std::vector<std::vector<double>> frames(count, std::vector<double>(frame_size, 0.0));
  for (std::int64_t f = 0; f < count; ++f) {
    const std::int64_t start = f * hop;
    const std::int64_t n =
        std::min<std::int64_t>(frame_size, std::max<std::int64_t>(len - start, 0));
    for (std::int64_t i = 0; i < n; ++i) frames[f][i] = clip.samples[start + i];
  }
  return frames;
}

std::vector<std::complex<double>> window_frame_dft(const std::vector<double>& frame) {
  const int n = static_cast<int>(frame.size());
  auto w = hann_window(n);
  std::vector<std::complex<double>> bins(n);
  for (int i = 0; i < n; ++i) bins[i] = frame[i] * w[i];
  kernels::fft_inplace(bins.data(), n, /*inverse=*/false);
  return bins;
}

ClipSpectra stft_magnitude_phase(const AudioClip& clip, const StftConfig& config) {
  if (clip.sample_rate <= 0) throw std::invalid_argument("stft: sample_rate must be positive");
  if (config.context_frames < 1 || config.context_hop < 1)
    throw std::invalid_argument("stft: context configuration invalid");

  auto frames = frame_signal(clip, config.frame_size, config.hop);
  const int n_frames = static_cast<int>(frames.size());
  const int f_bins = config.freq_bins();
  const auto w = hann_window(config.frame_size);

  // windowed FFT of every frame, parallel across frames
  std::vector<std::vector<kernels::Complex>> spectra(n_frames);
  for (int f = 0; f < n_frames; ++f) {
    spectra[f].resize(config.frame_size);
    for (int i = 0; i < config.frame_size; ++i) spectra[f][i] = frames[f][i] * w[i];
  }
  kernels::fft_rows(spectra, /*inverse=*/false);

  ClipSpectra out;
  out.config = config;
  out.sample_rate = clip.sample_rate;
  out.n_frames = n_frames;
  out.n_samples = static_cast<std::int64_t>(clip.samples.size());

  const int c = config.context_frames;
  for (int start = 0; start < n_frames; start += config.context_hop) {
    Spectrogram ctx;
    ctx.magnitude = Array<double>({c, f_bins});
    ctx.phase = Array<double>({c, f_bins});
    ctx.frame_size = config.frame_size;
    ctx.hop = config.hop;
    ctx.sample_rate = clip.sample_rate;
    ctx.scale_factor = 1.0;
    for (int i = 0; i < c; ++i) {
      const int f = start + i;
      if (f >= n_frames) break;  // trailing context rows stay zero-padded
      for (int k = 0; k < f_bins; ++k) {
        const auto v = spectra[f][k];
        ctx.magnitude[i * f_bins + k] = std::abs(v);
        ctx.phase[i * f_bins + k] = wrap_phase(std::atan2(v.imag(), v.real()));
      }
    }
    out.contexts.push_back(std::move(ctx));
    if (start + config.context_hop >= n_frames) break;
  }
  return out;
}

Spectrogram normalize_unit(const Spectrogram& spec) {
  Spectrogram out = spec;
  double max_mag = 0.0;
  for (std::int64_t i = 0; i < spec.magnitude.size(); ++i)
    max_mag = std::max(max_mag, spec.magnitude[i]);
  if (max_mag <= 0.0) return out;  // all-zero context: unchanged, factor stays
  out.magnitude = Array<double>(spec.magnitude.shape());
  for (std::int64_t i = 0; i < spec.magnitude.size(); ++i)
    out.magnitude[i] = spec.magnitude[i] / max_mag;
  out.scale_factor = spec.scale_factor * max_mag;
  return out;
}

namespace {

// Spectrum rows from magnitude/phase on bins [0, F); bins [F, N) filled by
// conjugate symmetry so the inverse DFT is real.
std::vector<std::vector<kernels::Complex>> frames_from_mag_phase(const double* mag,
                                                                 const double* phase,
                                                                 int n_ctx_frames, int f_bins,
                                                                 int frame_size, double scale) {
  std::vector<std::vector<kernels::Complex>> rows(n_ctx_frames);
  for (int i = 0; i < n_ctx_frames; ++i) {
    auto& row = rows[i];
    row.assign(frame_size, kernels::Complex(0.0, 0.0));
    for (int k = 0; k < f_bins; ++k) {
      const double m = mag[i * f_bins + k] * scale;
      const double p = phase[i * f_bins + k];
      row[k] = kernels::Complex(m * std::cos(p), m * std::sin(p));
    }
    for (int k = 1; k < f_bins - 1; ++k) row[frame_size - k] = std::conj(row[k]);
  }
  return rows;
}

// Weighted overlap-add with squared-window compensation:
// out(t) = sum_f w(t-fh) y_f(t-fh) / max(sum_f w^2(t-fh), eps).
std::vector<double> overlap_add(const std::vector<std::vector<kernels::Complex>>& time_frames,
                                int frame_size, int hop) {
  const int n_frames = static_cast<int>(time_frames.size());
  const std::int64_t total = static_cast<std::int64_t>(n_frames - 1) * hop + frame_size;
  const auto w = hann_window(frame_size);
  std::vector<double> num(total, 0.0), den(total, 0.0);
  for (int f = 0; f < n_frames; ++f) {
    const std::int64_t off = static_cast<std::int64_t>(f) * hop;
    for (int i = 0; i < frame_size; ++i) {
      num[off + i] += w[i] * time_frames[f][i].real();
      den[off + i] += w[i] * w[i];
    }
  }
  std::vector<double> out(total);
  for (std::int64_t i = 0; i < total; ++i) out[i] = num[i] / std::max(den[i], kSynthesisFloor);
  return out;
}

}  // namespace

std::vector<AudioClip> reconstruct_sources(const SourceSet& estimates,
                                           const Array<double>& mixture_phase, double scale_factor,
                                           const StftConfig& config, int sample_rate) {
  const int c = config.context_frames;
  const int f_bins = config.freq_bins();
  if (mixture_phase.shape() != Shape{c, f_bins})
    throw std::invalid_argument("reconstruct_sources: phase shape must be (C,F)");
  std::vector<AudioClip> out;
  for (const auto& mag : estimates.magnitudes) {
    if (mag.shape() != mixture_phase.shape())
      throw std::invalid_argument("reconstruct_sources: estimate/phase shape mismatch");
    auto rows = frames_from_mag_phase(mag.data(), mixture_phase.data(), c, f_bins,
                                      config.frame_size, scale_factor);
    kernels::fft_rows(rows, /*inverse=*/true);
    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples = overlap_add(rows, config.frame_size, config.hop);
    out.push_back(std::move(clip));
  }
  return out;
}

AudioClip reconstruct_track(const std::vector<Array<double>>& context_magnitudes,
                            const std::vector<double>& scale_factors,
                            const std::vector<Array<double>>& mixture_phases,
                            const StftConfig& config, int sample_rate, int n_frames,
                            std::int64_t n_samples) {
  if (context_magnitudes.size() != scale_factors.size() ||
      context_magnitudes.size() != mixture_phases.size())
    throw std::invalid_argument("reconstruct_track: per-context inputs must align");
  if (config.context_hop != config.context_frames)
    throw std::invalid_argument("reconstruct_track: overlapping contexts are not blended");

  const int c = config.context_frames;
  const int f_bins = config.freq_bins();
  std::vector<std::vector<kernels::Complex>> all_rows;
  for (size_t ci = 0; ci < context_magnitudes.size(); ++ci) {
    auto rows = frames_from_mag_phase(context_magnitudes[ci].data(), mixture_phases[ci].data(), c,
                                      f_bins, config.frame_size, scale_factors[ci]);
    for (auto& r : rows) {
      if (static_cast<int>(all_rows.size()) >= n_frames) break;  // drop context padding
      all_rows.push_back(std::move(r));
    }
  }
  kernels::fft_rows(all_rows, /*inverse=*/true);
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples = overlap_add(all_rows, config.frame_size, config.hop);
  clip.samples.resize(n_samples);  // trim frame padding
  return clip;
}

void save_spectra(const std::string& path, const ClipSpectra& spectra) {
  container::Meta meta;
  meta.json["kind"] = "spectra";
  meta.json["frame_size"] = spectra.config.frame_size;
  meta.json["hop"] = spectra.config.hop;
  meta.json["context_frames"] = spectra.config.context_frames;
  meta.json["context_hop"] = spectra.config.context_hop;
  meta.json["sample_rate"] = spectra.sample_rate;
  meta.json["n_frames"] = spectra.n_frames;
  meta.json["n_samples"] = spectra.n_samples;
  std::vector<double> factors;
  for (const auto& c : spectra.contexts) factors.push_back(c.scale_factor);
  meta.json["scale_factors"] = factors;

  std::vector<container::Blob> blobs;
  for (size_t i = 0; i < spectra.contexts.size(); ++i) {
    blobs.push_back(container::blob_from_array("magnitude" + std::to_string(i),
                                               spectra.contexts[i].magnitude));
    blobs.push_back(
        container::blob_from_array("phase" + std::to_string(i), spectra.contexts[i].phase));
  }
  container::write(path, meta, blobs);
}

ClipSpectra load_spectra(const std::string& path) {
  auto [meta, blobs] = container::read(path);
  if (meta.json.value("kind", "") != "spectra")
    throw std::runtime_error("load_spectra: not a spectra container: " + path);
  ClipSpectra out;
  out.config.frame_size = meta.json.at("frame_size");
  out.config.hop = meta.json.at("hop");
  out.config.context_frames = meta.json.at("context_frames");
  out.config.context_hop = meta.json.at("context_hop");
  out.sample_rate = meta.json.at("sample_rate");
  out.n_frames = meta.json.at("n_frames");
  out.n_samples = meta.json.at("n_samples");
  std::vector<double> factors = meta.json.at("scale_factors");
  for (size_t i = 0; i < factors.size(); ++i) {
    Spectrogram ctx;
    ctx.magnitude = container::array_from_blob<double>(
        container::find_blob(blobs, "magnitude" + std::to_string(i)));
    ctx.phase = container::array_from_blob<double>(
        container::find_blob(blobs, "phase" + std::to_string(i)));
    ctx.frame_size = out.config.frame_size;
    ctx.hop = out.config.hop;
    ctx.sample_rate = out.sample_rate;
    ctx.scale_factor = factors[i];
    out.contexts.push_back(std::move(ctx));
  }
  return out;
}

}  // namespace ssep::signal
