#ifndef SSEP_DATASET_HPP
#define SSEP_DATASET_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssep/array.hpp"
#include "ssep/rng.hpp"
#include "ssep/signal.hpp"

namespace ssep::data {

struct TrackEntry {
  std::string name;
  std::string mixture_path;
  std::vector<std::string> source_paths;  // aligned with CorpusIndex::source_names
  std::int64_t n_samples = 0;
  int sample_rate = 0;
};

struct CorpusIndex {
  std::vector<TrackEntry> tracks;
  std::vector<std::string> source_names;
  std::string split;  // "dev" | "test"
  std::string root;
};

struct LayoutSpec {
  // "flat":   <root>/<split>/<track>/mixture.wav + <source>.wav
  // "dsd100": <root>/Mixtures/<Split>/<track>/mixture.wav,
  //           <root>/Sources/<Split>/<track>/<source>.wav
  std::string kind = "flat";
  std::vector<std::string> source_names;
  /// Optional stem grouping: each output source is the sample-wise sum of
  /// the listed stems ("vocals:vocals" and "non_vocals:bass,drums,other"
  /// turn a four-stem corpus into the binary task).
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;
  bool require_sources = true;
};

/// Walks the corpus, checks every referenced file decodes and that stems
/// match the mixture's length and rate. Tracks come back sorted by name.
CorpusIndex index_corpus(const std::string& root, const std::string& split,
                         const LayoutSpec& layout);

/// Weakly supervised batch: mixture contexts and per-source real contexts
/// drawn independently of one another (no pairing is represented, none can
/// be used).
struct Batch {
  Array<double> mixtures;                   // (m, C, F), in [0,1]
  std::vector<Array<double>> real_sources;  // n arrays (m, C, F), in [0,1]
  std::vector<std::string> provenance_mixture;
  std::vector<std::vector<std::string>> provenance_sources;
};

/// Caches per-track magnitude frames and serves batches. Offsets are
/// sampled at frame granularity, uniformly over all (track, offset) pairs.
/// Draw counts beyond the number of distinct contexts simply sample with
/// replacement. All-zero source contexts are redrawn (they carry no
/// distributional information); a bounded number of retries guards corpora
/// that are entirely silent.
class BatchSampler {
 public:
  BatchSampler(const CorpusIndex& index, const signal::StftConfig& config,
               const LayoutSpec& layout);

  Batch sample_batch(int m, Rng& rng) const;
  Array<double> sample_mixtures(int m, Rng& rng) const;

  int n_sources() const { return static_cast<int>(source_names_.size()); }
  const std::vector<std::string>& source_names() const { return source_names_; }
  const signal::StftConfig& config() const { return config_; }
  int sample_rate() const { return sample_rate_; }
  std::int64_t total_mixture_contexts() const;

 private:
  struct TrackCache {
    std::string name;
    Array<double> mixture_mag;                // (frames, F)
    std::vector<Array<double>> source_mags;   // n x (frames, F)
    int n_offsets = 0;
  };

  std::pair<int, int> draw_context(Rng& rng) const;  // (track, offset)
  Array<double> normalized_context(const Array<double>& mags, int offset) const;

  signal::StftConfig config_;
  std::vector<std::string> source_names_;
  std::vector<TrackCache> tracks_;
  std::vector<std::int64_t> cumulative_offsets_;
  int sample_rate_ = 0;
};

/// Parametric signal family for one toy source.
struct SourceRecipe {
  std::string name;
  std::string kind;  // "tone" (harmonic partials) | "noise" (band-passed)
  double freq_lo = 200.0;
  double freq_hi = 400.0;
  double amplitude = 0.35;
};

struct ToyCorpusSpec {
  int n_tracks = 8;
  int n_test_tracks = 4;
  double duration_s = 6.0;
  int sample_rate = 16000;
  std::vector<SourceRecipe> recipes;
  std::uint64_t seed = 0;

  static ToyCorpusSpec defaults();
};

/// Writes per-track source WAVs plus a mixture that is the integer-exact
/// sample-wise sum of the sources (16-bit stems, mixture = sum of stem
/// integers), so mixture - sum(sources) decodes to exactly zero. Returns
/// the indexed dev split.
CorpusIndex generate_toy_corpus(const ToyCorpusSpec& spec, const std::string& out_root);

}  // namespace ssep::data

#endif  // SSEP_DATASET_HPP
