#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "durn/autograd.hpp"
#include "durn/data_io.hpp"
#include "durn/metrics.hpp"
#include "durn/nets.hpp"

namespace durn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// First and second moments keyed by parameter name, plus the step count.
struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::int64_t t = 0;
};

/// One bias-corrected Adam update of every trainable, non-frozen parameter.
/// Throws ContractError when such a parameter has no gradient.
void adam_step(ParamStore& params, const Gradients& grads, AdamState& state, const AdamConfig& cfg);

enum class Task { noise, real_noise, blur, haze, raindrop, rain };
std::string to_string(Task task);
Task parse_task(const std::string& s);
/// Network each task is trained with.
Arch task_arch(Task task);
/// Loss used by each task when no explicit loss is given.
LossPhase task_loss(Task task);

struct PhaseSpan {
  LossPhase phase = LossPhase::main;
  std::int64_t steps = 0;
};

/// Splits a step budget over the task's loss phases. Raindrop runs the main
/// loss then a short l1-only phase in the ratio 4000 : 100.
std::vector<PhaseSpan> default_schedule(Task task, std::int64_t steps);

struct TrainConfig {
  AdamConfig adam;
  int batch_size = 1;
  std::int64_t steps = 0;
  /// Square crop size; 0 trains on whole images (all must share one size).
  std::int64_t crop = 64;
  std::vector<PhaseSpan> schedule;  // empty: `loss` for every step
  LossPhase loss = LossPhase::main;
  std::uint64_t seed = 0;
  /// Fresh Gaussian noise (8-bit sigma) on the clean crop at every step,
  /// replacing the stored degraded image.
  std::optional<double> noise_sigma;
  bool clamp_noise = false;
  /// Checkpoints every `checkpoint_interval` steps (0: only at the end) when
  /// `out_dir` is set; history.csv is written there too.
  std::int64_t checkpoint_interval = 0;
  std::filesystem::path out_dir;
  /// Resume support: steps already taken, optimiser state and sampler state.
  std::int64_t start_step = 0;
  std::optional<AdamState> initial_adam;
  std::string rng_state;

  void validate() const;
};

struct StepRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double psnr = 0.0;  // clamped output vs clean crop
};

struct TrainResult {
  std::vector<StepRecord> history;
  AdamState adam;
  std::string rng_state;
  std::int64_t step = 0;
};

/// Loss phase active at 0-based step `step`.
LossPhase phase_at(const TrainConfig& cfg, std::int64_t step);

/// Runs `cfg.steps` Adam steps. All configuration problems (empty dataset,
/// crop incompatible with the images or the network) raise ConfigError before
/// the first step.
TrainResult train(const NetworkSpec& spec, ParamStore& params, const std::vector<ImagePair>& data,
                  const TrainConfig& cfg);

void write_history_csv(const std::vector<StepRecord>& history, const std::filesystem::path& path);

constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NetworkSpec spec;
  ParamStore params;
  std::optional<AdamState> adam;
  std::int64_t step = 0;
  std::string rng_state;
};

/// Writes atomically (temporary file + rename).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Strict load: bad magic/version, truncation, unknown or missing names all
/// raise FormatError and nothing is returned.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace durn
