#include "ssep/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <set>
#include <stdexcept>

#include "ssep/kernels.hpp"

namespace fs = std::filesystem;

namespace ssep::data {

namespace {

std::string cap(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(s[0]));
  return s;
}

signal::AudioClip load_mono(const std::string& path) {
  return signal::downmix_to_mono(signal::read_wav(path));
}

}  // namespace

CorpusIndex index_corpus(const std::string& root, const std::string& split,
                         const LayoutSpec& layout) {
  CorpusIndex index;
  index.root = root;
  index.split = split;
  for (const auto& g : layout.groups) index.source_names.push_back(g.first);
  if (index.source_names.empty()) index.source_names = layout.source_names;
  if (index.source_names.empty())
    throw std::invalid_argument("index_corpus: layout names no sources");

  fs::path mix_root, src_root;
  if (layout.kind == "flat") {
    mix_root = fs::path(root) / split;
    src_root = mix_root;
  } else if (layout.kind == "dsd100") {
    mix_root = fs::path(root) / "Mixtures" / cap(split);
    src_root = fs::path(root) / "Sources" / cap(split);
  } else {
    throw std::invalid_argument("index_corpus: unknown layout '" + layout.kind + "'");
  }
  if (!fs::is_directory(mix_root))
    throw std::runtime_error("index_corpus: no such directory: " + mix_root.string());

  std::vector<std::string> track_names;
  for (const auto& entry : fs::directory_iterator(mix_root))
    if (entry.is_directory()) track_names.push_back(entry.path().filename().string());
  std::sort(track_names.begin(), track_names.end());

  // stems actually read from disk (group members when grouping is active)
  std::vector<std::string> stem_names = layout.source_names;
  if (!layout.groups.empty()) {
    std::set<std::string> stems;
    for (const auto& g : layout.groups) stems.insert(g.second.begin(), g.second.end());
    stem_names.assign(stems.begin(), stems.end());
  }

  for (const auto& name : track_names) {
    TrackEntry t;
    t.name = name;
    fs::path mix = mix_root / name / "mixture.wav";
    if (!fs::exists(mix))
      throw std::runtime_error("index_corpus: track '" + name + "' has no mixture.wav");
    t.mixture_path = mix.string();
    auto mix_buf = signal::read_wav(t.mixture_path);
    t.n_samples = mix_buf.length();
    t.sample_rate = mix_buf.sample_rate;

    for (const auto& stem : stem_names) {
      fs::path sp = src_root / name / (stem + ".wav");
      if (!fs::exists(sp)) {
        if (layout.require_sources)
          throw std::runtime_error("index_corpus: track '" + name + "' is missing stem '" + stem +
                                   "'");
        continue;
      }
      auto buf = signal::read_wav(sp.string());
      if (buf.length() != t.n_samples || buf.sample_rate != t.sample_rate)
        throw std::runtime_error("index_corpus: track '" + name + "' stem '" + stem +
                                 "' does not match the mixture's length/rate");
      t.source_paths.push_back(sp.string());
    }
    index.tracks.push_back(std::move(t));
  }
  return index;
}

BatchSampler::BatchSampler(const CorpusIndex& index, const signal::StftConfig& config,
                           const LayoutSpec& layout)
    : config_(config), source_names_(index.source_names) {
  if (index.tracks.empty()) throw std::invalid_argument("sampler: empty corpus");
  sample_rate_ = index.tracks[0].sample_rate;

  // resolve stem grouping: which on-disk stems sum into each source
  std::vector<std::vector<std::string>> members;
  if (!layout.groups.empty()) {
    for (const auto& g : layout.groups) members.push_back(g.second);
  } else {
    for (const auto& n : source_names_) members.push_back({n});
  }

  std::int64_t cum = 0;
  for (const auto& t : index.tracks) {
    TrackCache cache;
    cache.name = t.name;

    auto mix_clip = load_mono(t.mixture_path);
    auto spectra = signal::stft_magnitude_phase(mix_clip, config_);
    const int f_bins = config_.freq_bins();
    cache.mixture_mag = Array<double>({spectra.n_frames, f_bins});
    {
      // flatten per-context rows back into one (frames, F) table
      int row = 0;
      for (const auto& ctx : spectra.contexts)
        for (int i = 0; i < config_.context_frames && row < spectra.n_frames; ++i, ++row)
          std::copy_n(ctx.magnitude.data() + i * f_bins, f_bins,
                      cache.mixture_mag.data() + row * f_bins);
    }

    // stems for this track, keyed by file name
    std::vector<std::pair<std::string, signal::AudioClip>> stems;
    for (const auto& p : t.source_paths) {
      std::string stem = fs::path(p).stem().string();
      stems.emplace_back(stem, load_mono(p));
    }
    for (size_t s = 0; s < members.size(); ++s) {
      signal::AudioClip combined;
      combined.sample_rate = t.sample_rate;
      combined.samples.assign(t.n_samples, 0.0);
      for (const auto& member : members[s]) {
        auto it = std::find_if(stems.begin(), stems.end(),
                               [&](const auto& kv) { return kv.first == member; });
        if (it == stems.end())
          throw std::runtime_error("sampler: track '" + t.name + "' lacks stem '" + member + "'");
        for (std::int64_t i = 0; i < t.n_samples; ++i) combined.samples[i] += it->second.samples[i];
      }
      auto sspec = signal::stft_magnitude_phase(combined, config_);
      Array<double> mag({sspec.n_frames, f_bins});
      int row = 0;
      for (const auto& ctx : sspec.contexts)
        for (int i = 0; i < config_.context_frames && row < sspec.n_frames; ++i, ++row)
          std::copy_n(ctx.magnitude.data() + i * f_bins, f_bins, mag.data() + row * f_bins);
      cache.source_mags.push_back(std::move(mag));
    }

    cache.n_offsets = std::max(cache.mixture_mag.dim(0) - config_.context_frames + 1, 1);
    cum += cache.n_offsets;
    cumulative_offsets_.push_back(cum);
    tracks_.push_back(std::move(cache));
  }
}

std::int64_t BatchSampler::total_mixture_contexts() const { return cumulative_offsets_.back(); }

std::pair<int, int> BatchSampler::draw_context(Rng& rng) const {
  const std::int64_t pick = static_cast<std::int64_t>(rng.below(cumulative_offsets_.back()));
  const auto it = std::upper_bound(cumulative_offsets_.begin(), cumulative_offsets_.end(), pick);
  const int track = static_cast<int>(it - cumulative_offsets_.begin());
  const std::int64_t base = track == 0 ? 0 : cumulative_offsets_[track - 1];
  return {track, static_cast<int>(pick - base)};
}

Array<double> BatchSampler::normalized_context(const Array<double>& mags, int offset) const {
  const int c = config_.context_frames;
  const int f_bins = config_.freq_bins();
  const int n_frames = mags.dim(0);
  Array<double> ctx({c, f_bins});
  double max_mag = 0.0;
  for (int i = 0; i < c; ++i) {
    const int row = offset + i;
    if (row >= n_frames) break;
    std::copy_n(mags.data() + row * f_bins, f_bins, ctx.data() + i * f_bins);
  }
  for (std::int64_t i = 0; i < ctx.size(); ++i) max_mag = std::max(max_mag, ctx[i]);
  if (max_mag > 0.0)
    for (std::int64_t i = 0; i < ctx.size(); ++i) ctx[i] /= max_mag;
  return ctx;
}

Array<double> BatchSampler::sample_mixtures(int m, Rng& rng) const {
  const int c = config_.context_frames;
  const int f_bins = config_.freq_bins();
  Array<double> out({m, c, f_bins});
  for (int e = 0; e < m; ++e) {
    auto [track, offset] = draw_context(rng);
    Array<double> ctx = normalized_context(tracks_[track].mixture_mag, offset);
    std::copy_n(ctx.data(), ctx.size(), out.data() + static_cast<std::int64_t>(e) * ctx.size());
  }
  return out;
}

Batch BatchSampler::sample_batch(int m, Rng& rng) const {
  if (m < 1) throw std::invalid_argument("sample_batch: m must be >= 1");
  const int c = config_.context_frames;
  const int f_bins = config_.freq_bins();
  Batch batch;
  batch.mixtures = Array<double>({m, c, f_bins});
  for (int e = 0; e < m; ++e) {
    auto [track, offset] = draw_context(rng);
    Array<double> ctx = normalized_context(tracks_[track].mixture_mag, offset);
    std::copy_n(ctx.data(), ctx.size(),
                batch.mixtures.data() + static_cast<std::int64_t>(e) * ctx.size());
    batch.provenance_mixture.push_back(tracks_[track].name + "@" + std::to_string(offset));
  }
  for (int s = 0; s < n_sources(); ++s) {
    Array<double> arr({m, c, f_bins});
    std::vector<std::string> prov;
    for (int e = 0; e < m; ++e) {
      Array<double> ctx;
      int track = 0, offset = 0;
      // silent source contexts carry no distributional information; redraw
      for (int attempt = 0; attempt < 100; ++attempt) {
        std::tie(track, offset) = draw_context(rng);
        ctx = normalized_context(tracks_[track].source_mags[s], offset);
        double peak = 0.0;
        for (std::int64_t i = 0; i < ctx.size(); ++i) peak = std::max(peak, ctx[i]);
        if (peak > 0.0) break;
      }
      std::copy_n(ctx.data(), ctx.size(), arr.data() + static_cast<std::int64_t>(e) * ctx.size());
      prov.push_back(tracks_[track].name + "@" + std::to_string(offset));
    }
    batch.real_sources.push_back(std::move(arr));
    batch.provenance_sources.push_back(std::move(prov));
  }
  return batch;
}

ToyCorpusSpec ToyCorpusSpec::defaults() {
  ToyCorpusSpec spec;
  spec.recipes = {{"tone", "tone", 200.0, 400.0, 0.35}, {"noise", "noise", 2000.0, 4000.0, 0.35}};
  return spec;
}

namespace {

// Harmonic tone with a slow random amplitude wobble; partials stay below the
// noise band so the two recipes remain spectrally disjoint.
std::vector<double> render_tone(const SourceRecipe& r, int n, int rate, Rng& rng) {
  const double f0 = rng.uniform(r.freq_lo, r.freq_hi);
  const int harmonics = std::max(1, static_cast<int>(std::floor(1600.0 / f0)));
  std::vector<double> phases, gains;
  for (int h = 0; h < harmonics; ++h) {
    phases.push_back(rng.uniform(0.0, 2.0 * M_PI));
    gains.push_back(std::pow(0.55, h));
  }
  const double lfo_rate = rng.uniform(0.1, 0.8);
  const double lfo_phase = rng.uniform(0.0, 2.0 * M_PI);
  const double depth = rng.uniform(0.1, 0.4);
  std::vector<double> out(n);
  double norm = 0.0;
  for (double g : gains) norm += g;
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    double v = 0.0;
    for (int h = 0; h < harmonics; ++h)
      v += gains[h] * std::sin(2.0 * M_PI * f0 * (h + 1) * t + phases[h]);
    const double env = 1.0 - depth * 0.5 * (1.0 + std::sin(2.0 * M_PI * lfo_rate * t + lfo_phase));
    out[i] = r.amplitude * env * v / norm;
  }
  return out;
}

// White noise band-limited to [freq_lo, freq_hi] by FFT masking, with a
// smooth random envelope.
std::vector<double> render_noise(const SourceRecipe& r, int n, int rate, Rng& rng) {
  int n_fft = 1;
  while (n_fft < n) n_fft <<= 1;
  std::vector<kernels::Complex> spec(n_fft, kernels::Complex(0, 0));
  for (int i = 0; i < n; ++i) spec[i] = kernels::Complex(rng.normal(), 0.0);
  kernels::fft_inplace(spec.data(), n_fft, false);
  const double bin_hz = static_cast<double>(rate) / n_fft;
  for (int k = 0; k <= n_fft / 2; ++k) {
    const double f = k * bin_hz;
    if (f < r.freq_lo || f > r.freq_hi) {
      spec[k] = kernels::Complex(0, 0);
      if (k > 0 && k < n_fft / 2) spec[n_fft - k] = kernels::Complex(0, 0);
    }
  }
  kernels::fft_inplace(spec.data(), n_fft, true);

  // random piecewise-smooth envelope from a few cosine-interpolated nodes
  const int n_nodes = 6;
  std::vector<double> nodes(n_nodes);
  for (auto& v : nodes) v = rng.uniform(0.3, 1.0);
  std::vector<double> out(n);
  double peak = 0.0;
  for (int i = 0; i < n; ++i) peak = std::max(peak, std::abs(spec[i].real()));
  if (peak <= 0) peak = 1.0;
  for (int i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) / n * (n_nodes - 1);
    const int k = std::min(static_cast<int>(pos), n_nodes - 2);
    const double frac = pos - k;
    const double mix = 0.5 * (1.0 - std::cos(M_PI * frac));
    const double env = nodes[k] * (1.0 - mix) + nodes[k + 1] * mix;
    out[i] = r.amplitude * env * spec[i].real() / peak;
  }
  return out;
}

}  // namespace

CorpusIndex generate_toy_corpus(const ToyCorpusSpec& spec, const std::string& out_root) {
  if (spec.recipes.size() < 2)
    throw std::invalid_argument("toy corpus: need at least two source recipes");
  for (size_t a = 0; a < spec.recipes.size(); ++a)
    for (size_t b = a + 1; b < spec.recipes.size(); ++b) {
      const auto& ra = spec.recipes[a];
      const auto& rb = spec.recipes[b];
      if (ra.freq_lo <= rb.freq_hi && rb.freq_lo <= ra.freq_hi)
        std::cerr << "toy corpus warning: recipes '" << ra.name << "' and '" << rb.name
                  << "' have overlapping frequency bands; sources may be hard to distinguish\n";
    }

  const int n = static_cast<int>(spec.duration_s * spec.sample_rate);
  Rng master(spec.seed);

  auto render_split = [&](const std::string& split, int n_tracks, std::uint64_t split_tag) {
    for (int t = 0; t < n_tracks; ++t) {
      Rng rng = master.derive(split_tag * 100003 + t);
      fs::path dir = fs::path(out_root) / split / ("track" + std::to_string(t));
      fs::create_directories(dir);
      std::vector<std::vector<int16_t>> quantized;
      for (const auto& recipe : spec.recipes) {
        std::vector<double> samples = recipe.kind == "tone" ? render_tone(recipe, n, spec.sample_rate, rng)
                                                            : render_noise(recipe, n, spec.sample_rate, rng);
        std::vector<int16_t> q(n);
        for (int i = 0; i < n; ++i) {
          double v = std::clamp(samples[i], -0.49, 0.49);
          q[i] = static_cast<int16_t>(std::lrint(v * 32767.0));
        }
        signal::write_wav_pcm16_raw((dir / (recipe.name + ".wav")).string(), {q},
                                    spec.sample_rate);
        quantized.push_back(std::move(q));
      }
      // integer sum keeps mixture == sum(sources) exact after decoding
      std::vector<int16_t> mix(n, 0);
      for (const auto& q : quantized)
        for (int i = 0; i < n; ++i) mix[i] = static_cast<int16_t>(mix[i] + q[i]);
      signal::write_wav_pcm16_raw((dir / "mixture.wav").string(), {mix}, spec.sample_rate);
    }
  };

  render_split("dev", spec.n_tracks, 1);
  render_split("test", spec.n_test_tracks, 2);

  LayoutSpec layout;
  for (const auto& r : spec.recipes) layout.source_names.push_back(r.name);
  return index_corpus(out_root, "dev", layout);
}

}  // namespace ssep::data
