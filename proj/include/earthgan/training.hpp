#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "earthgan/checkpoint.hpp"
#include "earthgan/dataset.hpp"
#include "earthgan/models.hpp"
#include "earthgan/pairs.hpp"
#include "earthgan/rng.hpp"

namespace earthgan::train {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
};

// Bias-corrected Adam on one tensor; `t` is the 1-based step count. Moments
// are stored in the parameter's precision so a checkpoint captures them
// exactly.
template <typename T>
void adam_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v,
                 std::uint64_t t, const AdamConfig& cfg) {
  if (param.shape() != grad.shape() || m.shape() != grad.shape() ||
      v.shape() != grad.shape()) {
    throw ShapeError("adam_update: shape mismatch " + to_string(param.shape()) + " vs " +
                     to_string(grad.shape()));
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, double(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = cfg.beta1 * double(m[i]) + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * double(v[i]) + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double step = cfg.lr * (double(m[i]) / c1) / (std::sqrt(double(v[i]) / c2) + cfg.eps);
    param[i] = static_cast<T>(double(param[i]) - step);
  }
}

// Per-parameter moments plus the shared step count.
struct AdamState {
  std::map<std::string, std::pair<Tensor<float>, Tensor<float>>> moments;
  std::uint64_t t = 0;

  void apply(model::ParamStore<float>& params, const std::vector<std::string>& names,
             const std::vector<Tensor<float>>& grads, const AdamConfig& cfg);
};

enum class CriticMode { kGradientPenalty, kClip };

struct TrainConfig {
  CriticMode mode = CriticMode::kGradientPenalty;
  double lambda = 10.0;
  double clip = 0.01;
  std::size_t critic_steps = 1;  // critic updates per generator update
  AdamConfig generator_adam;
  AdamConfig critic_adam;
  std::size_t batch_size = 1;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // steps; 0 = epoch ends only
  std::size_t max_steps = 0;         // 0 = no cap
  std::size_t window_stride = 3;     // low-res columns between windows
  bool augment = true;               // random longitude rotation per pair
  bool noise = true;                 // noise injection during training

  void validate() const;
};

std::string config_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

// Generator, critic and training settings read from one JSON document with
// "generator", "critic" and "train" objects (each optional).
struct RunConfig {
  model::GeneratorConfig generator;
  model::CriticConfig critic;
  TrainConfig train;
};
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text);

struct StepMetrics {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t timestep = 0;
  long long lon_start = 0;
  double critic_loss = 0;
  double wasserstein = 0;  // D(real) - D(fake)
  double gp = 0;
  double gen_loss = 0;
  double l1 = 0;  // mean |fake - target| of the generator step
  double wall_time = 0;
};

// Append-only CSV, one header line then one record per step.
class MetricsLog {
 public:
  static constexpr const char* kHeader =
      "step,epoch,timestep,lon_start,critic_loss,wasserstein,gp,gen_loss,l1,wall_time";

  // Opens for appending. Records with step > keep_through are dropped first,
  // so a resumed run does not duplicate steps.
  explicit MetricsLog(std::filesystem::path path,
                      std::optional<std::uint64_t> keep_through = std::nullopt);
  void append(const StepMetrics& m);
  const std::filesystem::path& path() const { return path_; }

  static std::vector<StepMetrics> read(const std::filesystem::path& path);
  static std::string format(const StepMetrics& m);

 private:
  std::filesystem::path path_;
};

struct CriticStepResult {
  double loss = 0, wasserstein = 0, gp = 0;
};

struct GeneratorStepResult {
  double loss = 0, l1 = 0;
};

// Position in the schedule plus everything needed to continue bit-exactly.
struct TrainState {
  std::uint64_t step = 0;   // completed generator updates
  std::uint64_t epoch = 0;
  std::uint64_t cursor = 0;  // next pair within the epoch
  std::uint64_t rng_counter = 0;
  AdamState generator_adam;
  AdamState critic_adam;
};

// Scores a candidate against its condition with the given critic parameters.
using CriticFn = std::function<ad::Var<float>(const model::ParamStore<float>&,
                                              const ad::Var<float>&, const ad::Var<float>&)>;

class Trainer {
 public:
  Trainer(model::GeneratorConfig gen, model::CriticConfig critic, TrainConfig cfg,
          std::uint64_t init_seed);

  // Restores weights and optimizer state from a checkpoint pair.
  static Trainer resume(const std::filesystem::path& checkpoint, const TrainConfig& cfg);

  // One critic update. `noise_seed` keys the generator's noise when enabled.
  CriticStepResult critic_step(const grid::TrainingPair& pair,
                               std::optional<std::uint64_t> noise_seed = std::nullopt);
  // One generator update (critic frozen).
  GeneratorStepResult generator_step(const grid::TrainingPair& pair,
                                     std::optional<std::uint64_t> noise_seed = std::nullopt);

  // Runs the schedule over the prepared dataset, writing checkpoints and
  // metrics.csv into out_dir. Stops at cfg.epochs or cfg.max_steps.
  void run(const grid::Manifest& manifest, const std::filesystem::path& out_dir);

  // Checkpoint files for the current state: ckpt_NNNNNN.egw and its
  // .state.egw sidecar. Returns the weights path.
  std::filesystem::path save(const std::filesystem::path& out_dir,
                             const std::optional<grid::Stats>& stats) const;

  model::ParamStore<float>& generator() { return gen_; }
  model::ParamStore<float>& critic() { return critic_; }
  const model::GeneratorConfig& generator_config() const { return gen_cfg_; }
  const model::CriticConfig& critic_config() const { return critic_cfg_; }
  const TrainConfig& config() const { return cfg_; }
  TrainConfig& config() { return cfg_; }
  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }

  // Replaceable critic, for tests with hand-built scoring functions.
  CriticFn critic_fn;

 private:
  model::GeneratorConfig gen_cfg_;
  model::CriticConfig critic_cfg_;
  TrainConfig cfg_;
  model::ParamStore<float> gen_;
  model::ParamStore<float> critic_;
  TrainState state_;
  // Data layout of the last run, recorded in checkpoints so inference can
  // rebuild the pair geometry without the manifest.
  std::optional<grid::PrepareParams> prepare_;
  Shape hr_shape_;
};

// Preparation parameters and prepared high-res shape stored in a checkpoint's
// extra JSON by Trainer::save, if the checkpoint came from a training run.
struct DataLayout {
  grid::PrepareParams prepare;
  Shape hr_shape;
};
std::optional<DataLayout> checkpoint_layout(const model::Checkpoint& ckpt);

// Checkpoint path for a step inside out_dir.
std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, std::uint64_t step);
std::filesystem::path state_path(const std::filesystem::path& checkpoint);
// Highest-step checkpoint in a directory, if any.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir);

// Memorises one pair with augmentation off and zero noise. Returns the L1
// trace: entry 0 before training, entry i after i generator updates.
std::vector<double> overfit_single(Trainer& trainer, const grid::TrainingPair& pair,
                                   std::size_t steps);

double mean_abs_diff(const Tensor<float>& a, const Tensor<float>& b);

}  // namespace earthgan::train
