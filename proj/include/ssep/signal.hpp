#ifndef SSEP_SIGNAL_HPP
#define SSEP_SIGNAL_HPP

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "ssep/array.hpp"

namespace ssep::signal {

/// Mono audio.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 44100;
};

/// Possibly multi-channel audio as decoded from a file.
struct AudioBuffer {
  std::vector<std::vector<double>> channels;
  int sample_rate = 44100;

  std::int64_t length() const { return channels.empty() ? 0 : channels[0].size(); }
};

struct StftConfig {
  int frame_size = 1024;
  int hop = 1024;          // paper setting; 512 satisfies COLA for exact inversion
  int context_frames = 32; // C
  int context_hop = 32;    // contexts per clip advance by this many frames

  int freq_bins() const { return frame_size / 2 + 1; }  // F
  double context_span_seconds(int sample_rate) const {
    return static_cast<double>(context_frames) * hop / sample_rate;
  }
};

/// One context window of the STFT: (C, F) magnitude and phase plus the
/// factor that maps the stored magnitude back to raw STFT magnitude.
struct Spectrogram {
  Array<double> magnitude;  // (C, F), >= 0
  Array<double> phase;      // (C, F), in (-pi, pi]
  int frame_size = 1024;
  int hop = 1024;
  int sample_rate = 44100;
  double scale_factor = 1.0;
};

/// All contexts of one clip, in order, plus what is needed to invert.
struct ClipSpectra {
  std::vector<Spectrogram> contexts;
  int n_frames = 0;           // frames before context padding
  std::int64_t n_samples = 0; // original clip length
  StftConfig config;
  int sample_rate = 44100;
};

/// n per-source magnitudes of one context, all (C, F).
struct SourceSet {
  std::vector<Array<double>> magnitudes;
  std::vector<std::string> source_names;
};

AudioClip downmix_to_mono(const AudioBuffer& buffer);

/// Frames of length frame_size at stride hop; the last frame is
/// zero-padded. count = ceil(max(len - frame_size, 0)/hop) + 1.
std::vector<std::vector<double>> frame_signal(const AudioClip& clip, int frame_size, int hop);

/// Windowed full-spectrum DFT of one frame (all frame_size bins); the
/// pipeline consumes bins [0, F) of this, tests check Parseval on all bins.
std::vector<std::complex<double>> window_frame_dft(const std::vector<double>& frame);

ClipSpectra stft_magnitude_phase(const AudioClip& clip, const StftConfig& config);

/// Divide magnitude by its max (if nonzero) and fold the factor into
/// scale_factor, so magnitude * scale_factor always recovers the raw STFT
/// magnitude. Idempotent.
Spectrogram normalize_unit(const Spectrogram& spec);

/// Inverse of one context: per source, rescale by scale_factor, attach the
/// mixture phase, mirror to a full conjugate-symmetric spectrum, inverse
/// DFT, and overlap-add with squared-window synthesis compensation.
/// Output length is (C-1)*hop + frame_size per source.
std::vector<AudioClip> reconstruct_sources(const SourceSet& estimates,
                                           const Array<double>& mixture_phase, double scale_factor,
                                           const StftConfig& config, int sample_rate);

/// Clip-level inverse: per-context magnitudes for one source (each (C, F)),
/// per-context scale factors and mixture phases; overlap-adds the full frame
/// sequence and trims to n_samples.
AudioClip reconstruct_track(const std::vector<Array<double>>& context_magnitudes,
                            const std::vector<double>& scale_factors,
                            const std::vector<Array<double>>& mixture_phases,
                            const StftConfig& config, int sample_rate, int n_frames,
                            std::int64_t n_samples);

/// Periodic Hann window of length n.
std::vector<double> hann_window(int n);

// WAV I/O: RIFF, 16-bit PCM or 32-bit IEEE float, arbitrary channel count.
AudioBuffer read_wav(const std::string& path);
enum class WavFormat { kPcm16, kFloat32 };
void write_wav(const std::string& path, const AudioBuffer& buffer, WavFormat format);
/// Writes raw int16 channels; used where bit-exact integer arithmetic on
/// samples matters (e.g. mixtures built as integer sums of stems).
void write_wav_pcm16_raw(const std::string& path, const std::vector<std::vector<int16_t>>& channels,
                         int sample_rate);

// Spectra container (.ssp files): magnitude, phase, scale_factor and config
// metadata for every context of a clip.
void save_spectra(const std::string& path, const ClipSpectra& spectra);
ClipSpectra load_spectra(const std::string& path);

}  // namespace ssep::signal

#endif  // SSEP_SIGNAL_HPP
