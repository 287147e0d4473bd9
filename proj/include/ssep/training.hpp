#ifndef SSEP_TRAINING_HPP
#define SSEP_TRAINING_HPP

#include <deque>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssep/adam.hpp"
#include "ssep/dataset.hpp"
#include "ssep/losses.hpp"
#include "ssep/nn.hpp"
#include "ssep/signal.hpp"

namespace ssep::train {

enum class Ablation { kFull, kVocalsBinary, kGanOnly, kEnergyOnly, kNoSkip };

Ablation parse_ablation(const std::string& name);
std::string ablation_name(Ablation a);

struct TrainConfig {
  int batch_size = 16;
  int i_critic = 5;
  nn::AdamConfig adam;
  int max_steps = 1000;
  losses::LossWeights loss_weights;  // alpha auto-filled per n_sources if empty
  Ablation ablation = Ablation::kFull;
  std::uint64_t seed = 0;
  int checkpoint_every = 200;
  // Alg-1 order is generator first; this flag swaps it for the conventional
  // critic-first schedule.
  bool critic_first = false;
  bool shared_epsilon = false;
  bool gp_alpha_weighted = true;
  bool early_stop = false;
  double early_stop_rel_change = 0.01;
  int early_stop_window = 200;
  int early_stop_span = 500;
  std::string precision = "float32";  // "float32" | "float64"
  signal::StftConfig stft;
  nn::SeparatorConfig separator;
  nn::CriticConfig critic;

  void validate() const;
};

/// gan_only: beta = 0. energy_only: all alpha = 0, critics never update.
/// no_skip: U-net concatenations off. vocals_binary: two sources/critics.
TrainConfig configure_ablation(TrainConfig base, Ablation mode);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Raised when a loss goes non-finite; carries the last good checkpoint.
struct TrainAbort : std::runtime_error {
  explicit TrainAbort(const std::string& msg, std::string checkpoint)
      : std::runtime_error(msg), last_checkpoint(std::move(checkpoint)) {}
  std::string last_checkpoint;
};

struct RunReport {
  std::int64_t steps = 0;
  double wall_seconds = 0.0;
  bool early_stopped = false;
  double final_wasserstein_ma = 0.0;
  double final_energy_ma = 0.0;
  double final_grad_penalty_ma = 0.0;
  double interp_grad_norm_median = 0.0;
  nlohmann::json to_json() const;
};

template <typename T>
class Trainer {
 public:
  Trainer(TrainConfig config, const data::BatchSampler* sampler, std::string out_dir);

  /// One outer iteration: a separator update plus i_critic critic updates
  /// (order per config.critic_first; critic updates skipped in energy_only).
  void train_step();

  /// Runs to max_steps (or early stop), checkpointing along the way.
  RunReport run();

  void save_checkpoint(const std::string& path) const;
  static Trainer<T> resume(const std::string& checkpoint_path, const data::BatchSampler* sampler,
                           std::string out_dir);

  std::int64_t step() const { return step_; }
  nn::Separator<T>& separator() { return separator_; }
  std::vector<nn::Critic<T>>& critics() { return critics_; }
  const TrainConfig& config() const { return config_; }
  const losses::LossBreakdown& last_generator_loss() const { return last_gen_; }
  const losses::LossBreakdown& last_critic_loss() const { return last_critic_; }
  const std::string& last_checkpoint_path() const { return last_checkpoint_; }

  /// Median per-example critic input-gradient norm over `batches` fresh
  /// interpolate batches (diagnostic for how well the penalty worked).
  double measure_interp_grad_norm_median(int batches);

 private:
  void generator_update();
  void critic_update();
  std::vector<Array<T>> make_fakes(const Array<T>& mixtures);
  std::vector<losses::CriticFn<T>> critic_fns() const;
  void log_row(const std::string& role, const losses::LossBreakdown& b, double grad_norm);
  void open_log(bool append);
  void check_finite(double total, const std::string& role);

  TrainConfig config_;
  const data::BatchSampler* sampler_ = nullptr;
  std::string out_dir_;
  nn::Separator<T> separator_;
  std::vector<nn::Critic<T>> critics_;
  nn::Adam<T> adam_sep_;
  nn::Adam<T> adam_critics_;
  Rng sampler_rng_, noise_rng_, interp_rng_;
  std::int64_t step_ = 0;
  losses::LossBreakdown last_gen_, last_critic_;
  double last_critic_gp_ = 0.0;
  std::deque<double> recent_wasserstein_;  // for the early-stop moving average
  std::deque<double> recent_norms_;
  std::ofstream log_;
  std::string last_checkpoint_;
};

/// Precision-dispatching entry used by the CLI: builds (or resumes) a
/// trainer and runs it.
RunReport run_training(const TrainConfig& config, const data::BatchSampler& sampler,
                       const std::string& out_dir, const std::optional<std::string>& resume_from);

/// Inference-side view of a checkpoint (separator only), precision resolved
/// at load time.
class SeparatorHandle {
 public:
  static SeparatorHandle load(const std::string& checkpoint_path);

  /// (m, C, F) in [0,1] -> n arrays (m, C, F); zero inference noise.
  std::vector<Array<double>> separate(const Array<double>& magnitudes) const;

  const signal::StftConfig& stft() const { return stft_; }
  int sample_rate() const { return sample_rate_; }
  const std::vector<std::string>& source_names() const { return source_names_; }
  const std::string& precision() const { return precision_; }
  std::int64_t step() const { return step_; }

 private:
  std::string precision_;
  std::optional<nn::Separator<float>> sep_f_;
  std::optional<nn::Separator<double>> sep_d_;
  signal::StftConfig stft_;
  int sample_rate_ = 0;
  std::vector<std::string> source_names_;
  std::int64_t step_ = 0;
};

}  // namespace ssep::train

#endif  // SSEP_TRAINING_HPP
