#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "durn/error.hpp"
#include "durn/ops.hpp"
#include "durn/optim.hpp"

namespace durn {

namespace fs = std::filesystem;

std::string to_string(Task task) {
  switch (task) {
    case Task::noise: return "noise";
    case Task::real_noise: return "real_noise";
    case Task::blur: return "blur";
    case Task::haze: return "haze";
    case Task::raindrop: return "raindrop";
    case Task::rain: return "rain";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  for (Task t : {Task::noise, Task::real_noise, Task::blur, Task::haze, Task::raindrop, Task::rain})
    if (s == to_string(t)) return t;
  throw ConfigError("unknown task '" + s + "' (noise, real_noise, blur, haze, raindrop, rain)");
}

Arch task_arch(Task task) {
  switch (task) {
    case Task::noise:
    case Task::real_noise: return Arch::durn_p;
    case Task::blur: return Arch::durn_u;
    case Task::haze: return Arch::durn_us;
    case Task::raindrop: return Arch::durn_s_p;
    case Task::rain: return Arch::durn_s;
  }
  return Arch::durn_p;
}

LossPhase task_loss(Task task) {
  return task == Task::noise ? LossPhase::l2_only : LossPhase::main;
}

std::vector<PhaseSpan> default_schedule(Task task, std::int64_t steps) {
  if (task != Task::raindrop) return {{task_loss(task), steps}};
  const std::int64_t tail = steps * 100 / 4100;
  return {{LossPhase::main, steps - tail}, {LossPhase::l1_only, tail}};
}

void TrainConfig::validate() const {
  adam.validate();
  if (batch_size <= 0) throw ConfigError("batch size must be positive");
  if (steps < 0) throw ConfigError("steps must be non-negative");
  if (crop < 0) throw ConfigError("crop must be non-negative");
  if (noise_sigma && !(*noise_sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
  if (checkpoint_interval < 0) throw ConfigError("checkpoint interval must be non-negative");
  if (start_step < 0) throw ConfigError("start step must be non-negative");
  for (const auto& p : schedule)
    if (p.steps < 0) throw ConfigError("schedule phases need non-negative step counts");
}

LossPhase phase_at(const TrainConfig& cfg, std::int64_t step) {
  std::int64_t end = 0;
  for (const auto& p : cfg.schedule) {
    end += p.steps;
    if (step < end) return p.phase;
  }
  return cfg.schedule.empty() ? cfg.loss : cfg.schedule.back().phase;
}

void write_history_csv(const std::vector<StepRecord>& history, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "step,loss,psnr\n" << std::setprecision(9);
  for (const auto& r : history) out << r.step << ',' << r.loss << ',' << r.psnr << '\n';
}

namespace {

void check_data(const NetworkSpec& spec, const std::vector<ImagePair>& data, const TrainConfig& cfg) {
  if (data.empty()) throw ConfigError("training set is empty");
  const int div = spec.spatial_divisor();
  if (cfg.crop > 0 && cfg.crop % div != 0)
    throw ConfigError("crop " + std::to_string(cfg.crop) + " is not a multiple of " +
                      std::to_string(div) + " required by " + to_string(spec.arch));
  const Shape& first = data.front().clean.shape();
  for (const auto& p : data) {
    const Shape& s = p.clean.shape();
    if (s.size() != 4 || s[0] != 1) throw ConfigError(p.name + ": expected a single (1, C, H, W) image");
    if (p.degraded.shape() != s) throw ConfigError(p.name + ": degraded and clean shapes differ");
    if (s[1] != spec.in_channels)
      throw ConfigError(p.name + " has " + std::to_string(s[1]) + " channels, network expects " +
                        std::to_string(spec.in_channels));
    if (cfg.crop > 0 && (s[2] < cfg.crop || s[3] < cfg.crop))
      throw ConfigError(p.name + " is smaller than the " + std::to_string(cfg.crop) + " crop");
    if (cfg.crop == 0) {
      if (s != first) throw ConfigError("whole-image training needs images of one size");
      if (s[2] % div != 0 || s[3] % div != 0)
        throw ConfigError(p.name + " size is not a multiple of " + std::to_string(div));
    }
  }
}

std::string save_rng(const std::mt19937_64& rng) {
  std::ostringstream o;
  o << rng;
  return o.str();
}

}  // namespace

TrainResult train(const NetworkSpec& spec, ParamStore& params, const std::vector<ImagePair>& data,
                  const TrainConfig& cfg) {
  spec.validate();
  cfg.validate();
  check_data(spec, data, cfg);
  if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);

  TrainResult result;
  result.adam = cfg.initial_adam.value_or(AdamState{});
  std::mt19937_64 rng(stream_seed(cfg.seed, "train.sampler"));
  if (!cfg.rng_state.empty()) {
    std::istringstream in(cfg.rng_state);
    in >> rng;
    if (!in) throw ConfigError("corrupt sampler state");
  }
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);

  auto checkpoint = [&](std::int64_t step, const fs::path& path) {
    Checkpoint c;
    c.spec = spec;
    c.params = params;
    c.adam = result.adam;
    c.step = step;
    c.rng_state = save_rng(rng);
    save_checkpoint(c, path);
  };

  result.history.reserve(static_cast<std::size_t>(cfg.steps));
  for (std::int64_t i = 0; i < cfg.steps; ++i) {
    const std::int64_t step = cfg.start_step + i;
    std::vector<Tensor> inputs, targets;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const ImagePair& pair = data[pick(rng)];
      Tensor deg = pair.degraded, clean = pair.clean;
      if (cfg.crop > 0) {
        std::uniform_int_distribution<std::int64_t> dy(0, clean.dim(2) - cfg.crop);
        std::uniform_int_distribution<std::int64_t> dx(0, clean.dim(3) - cfg.crop);
        const std::int64_t y = dy(rng), x = dx(rng);
        deg = crop(deg, y, x, cfg.crop, cfg.crop);
        clean = crop(clean, y, x, cfg.crop, cfg.crop);
      }
      if (cfg.noise_sigma) deg = add_gaussian_noise(clean, *cfg.noise_sigma, rng(), cfg.clamp_noise);
      inputs.push_back(deg.to(params.entries().front().tensor.dtype()));
      targets.push_back(clean.to(params.entries().front().tensor.dtype()));
    }
    const Tensor x = stack_batch(inputs), y = stack_batch(targets);
    const Tensor out = forward(spec, params, x, {NormMode::train, nullptr});
    const Tensor loss = restoration_loss(out, y, phase_at(cfg, step));
    const Gradients grads = backward(loss);
    adam_step(params, grads, result.adam, cfg.adam);
    result.history.push_back({step + 1, loss.item(), psnr(out.detach(), y)});
    if (!cfg.out_dir.empty() && cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0)
      checkpoint(step + 1, cfg.out_dir / ("checkpoint_" + std::to_string(step + 1) + ".durn"));
  }
  result.step = cfg.start_step + cfg.steps;
  result.rng_state = save_rng(rng);
  if (!cfg.out_dir.empty()) {
    checkpoint(result.step, cfg.out_dir / "checkpoint.durn");
    write_history_csv(result.history, cfg.out_dir / "history.csv");
  }
  return result;
}

}  // namespace durn
