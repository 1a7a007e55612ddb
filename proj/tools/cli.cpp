#include "durn/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "durn/autograd.hpp"
#include "durn/data_io.hpp"
#include "durn/error.hpp"
#include "durn/gradcheck_suite.hpp"
#include "durn/metrics.hpp"
#include "durn/nets.hpp"
#include "durn/ops.hpp"
#include "durn/optim.hpp"
#include "durn/unravel.hpp"

namespace durn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Short decimal form that always keeps a fractional part ("1.0", "20.0004", "inf").
std::string num(double v, int digits = 6) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  std::string s = buf;
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

json json_num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct NetFlags {
  std::string arch;
  int channels = 0;
  int base_channels = 0;
  int blocks = 0;
  bool no_norm = false;
  std::string style = "d";
  std::string carrier = "stem";
  int se_reduction = 16;
  std::string spec_file;
};

void add_net_flags(CLI::App* cmd, NetFlags& f) {
  auto* spec = cmd->add_option("--spec", f.spec_file, "Network spec file (key = value lines)");
  std::vector<CLI::Option*> opts = {
      cmd->add_option("--arch", f.arch, "durn_p, durn_u, durn_us, durn_s or durn_s_p"),
      cmd->add_option("--channels", f.channels, "Image channels (1 or 3; default per arch)"),
      cmd->add_option("--base-channels", f.base_channels, "Feature channels (default per arch)"),
      cmd->add_option("--blocks", f.blocks, "Keep only the first N blocks"),
      cmd->add_flag("--no-norm", f.no_norm, "Drop every normalisation layer"),
      cmd->add_option("--style", f.style, "Connection style: b, c or d"),
      cmd->add_option("--carrier-init", f.carrier, "stem or zeros"),
      cmd->add_option("--se-reduction", f.se_reduction, "SE bottleneck reduction"),
  };
  for (auto* o : opts) spec->excludes(o);
}

bool net_flags_given(const NetFlags& f) { return !f.arch.empty() || !f.spec_file.empty(); }

NetworkSpec spec_from_flags(const NetFlags& f, Arch default_arch) {
  if (!f.spec_file.empty()) return spec_from_config(read_text(f.spec_file));
  NetworkOptions o;
  o.arch = f.arch.empty() ? default_arch : parse_arch(f.arch);
  o.in_channels = f.channels;
  o.base_channels = f.base_channels;
  o.num_blocks = f.blocks;
  o.norms = !f.no_norm;
  o.connection_style = parse_style(f.style);
  o.carrier_init = parse_carrier(f.carrier);
  o.se_reduction = f.se_reduction;
  return make_spec(o);
}

NormMode parse_mode(const std::string& s) {
  if (s == "eval") return NormMode::eval;
  if (s == "train") return NormMode::train;
  throw ConfigError("unknown norm mode '" + s + "' (train or eval)");
}

std::vector<fs::path> list_images(const fs::path& p) {
  if (!fs::exists(p)) throw ConfigError("no such file or directory: " + p.string());
  if (!fs::is_directory(p)) return {p};
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(p))
    if (e.is_regular_file() && is_image_path(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no images in " + p.string());
  return files;
}

// Largest top-left region whose sides are multiples of `div`.
Tensor fit_to(const Tensor& img, int div) {
  const std::int64_t h = img.dim(2) / div * div, w = img.dim(3) / div * div;
  if (h == 0 || w == 0) throw ConfigError("image smaller than the network's size multiple");
  if (h == img.dim(2) && w == img.dim(3)) return img;
  return crop(img, 0, 0, h, w);
}

Tensor restore(const NetworkSpec& spec, const ParamStore& params, const Tensor& input, NormMode mode) {
  NoGradGuard no_grad;
  return forward(spec, params, input.to(params.entries().front().tensor.dtype()), {mode, nullptr});
}

struct Ctx {
  std::ostream& out;
  std::ostream& err;
  bool json_lines = false;
};

// ---------------------------------------------------------------- train

Task default_task(Arch arch) {
  for (Task t : {Task::noise, Task::blur, Task::haze, Task::raindrop, Task::rain})
    if (task_arch(t) == arch) return t;
  return Task::noise;
}

struct TrainFlags {
  NetFlags net;
  std::string task;
  std::string manifest;
  std::string out_dir;
  std::string resume;
  std::string loss;
  double sigma = 30.0;
  bool clamp_noise = false;
  bool fixed_noise = false;
  std::int64_t steps = 200;
  int batch = 4;
  std::int64_t crop = 64;
  std::uint64_t seed = 0;
  double lr = 1e-4;
  std::int64_t checkpoint_interval = 0;
};

int cmd_train(const TrainFlags& f, Ctx& ctx) {
  // Everything is resolved and validated before anything is written.
  std::optional<Checkpoint> resumed;
  NetworkSpec spec;
  if (!f.resume.empty()) {
    if (net_flags_given(f.net)) throw ConfigError("--resume takes the network from the checkpoint");
    resumed = load_checkpoint(f.resume);
    spec = resumed->spec;
  }
  Task task = Task::noise;
  if (!f.task.empty()) task = parse_task(f.task);
  else if (resumed) task = default_task(resumed->spec.arch);
  else if (!f.net.arch.empty()) task = default_task(parse_arch(f.net.arch));
  if (!resumed) spec = spec_from_flags(f.net, task_arch(task));
  if (spec.arch != task_arch(task))
    throw ConfigError("arch " + to_string(spec.arch) + " does not match task " + to_string(task) +
                      " (expected " + to_string(task_arch(task)) + ")");
  if (f.manifest.empty()) throw ConfigError("--manifest is required");
  if (f.out_dir.empty()) throw ConfigError("--out-dir is required");

  const bool noise_task = task == Task::noise;
  const DatasetManifest manifest = load_manifest(f.manifest);
  const auto data = load_dataset(manifest, noise_task ? std::optional<double>(f.sigma) : std::nullopt,
                                 f.seed);

  TrainConfig cfg;
  cfg.adam.lr = f.lr;
  cfg.batch_size = f.batch;
  cfg.steps = f.steps;
  cfg.crop = f.crop;
  cfg.seed = f.seed;
  cfg.out_dir = f.out_dir;
  cfg.checkpoint_interval = f.checkpoint_interval;
  cfg.clamp_noise = f.clamp_noise;
  if (noise_task && !f.fixed_noise) cfg.noise_sigma = f.sigma;
  if (!f.loss.empty()) {
    cfg.loss = parse_loss_phase(f.loss);
  } else {
    const std::int64_t total = (resumed ? resumed->step : 0) + f.steps;
    cfg.schedule = default_schedule(task, total);
  }

  ParamStore params = resumed ? resumed->params : init_params(spec, f.seed);
  if (resumed) {
    cfg.start_step = resumed->step;
    cfg.initial_adam = resumed->adam;
    cfg.rng_state = resumed->rng_state;
  }
  const TrainResult result = train(spec, params, data, cfg);

  double psnr_sum = 0.0;
  for (const auto& pair : data) {
    const int div = spec.spatial_divisor();
    const Tensor input = fit_to(pair.degraded, div), clean = fit_to(pair.clean, div);
    psnr_sum += psnr(restore(spec, params, input, NormMode::eval), clean);
  }
  const double mean_psnr = psnr_sum / static_cast<double>(data.size());
  const double final_loss = result.history.empty() ? std::nan("") : result.history.back().loss;
  if (ctx.json_lines) {
    ctx.out << json{{"command", "train"}, {"arch", to_string(spec.arch)}, {"task", to_string(task)},
                    {"steps", result.step}, {"final_loss", json_num(final_loss)},
                    {"psnr", json_num(mean_psnr)},
                    {"checkpoint", (fs::path(f.out_dir) / "checkpoint.durn").string()}}
                   .dump()
            << '\n';
  } else {
    ctx.out << "arch=" << to_string(spec.arch) << " task=" << to_string(task) << " steps=" << result.step
            << "\nfinal_loss=" << num(final_loss) << "\npsnr=" << num(mean_psnr) << " dB\n"
            << "checkpoint=" << (fs::path(f.out_dir) / "checkpoint.durn").string() << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- infer

struct InferFlags {
  std::string checkpoint;
  std::string input;
  std::string output;
  std::string gt;
  std::string mode = "eval";
};

int cmd_infer(const InferFlags& f, Ctx& ctx) {
  const NormMode mode = parse_mode(f.mode);
  const Checkpoint ckpt = load_checkpoint(f.checkpoint);
  const auto inputs = list_images(f.input);
  const bool dir_input = fs::is_directory(f.input);

  struct Job {
    fs::path source;
    Tensor image;
    std::optional<Tensor> gt;
  };
  std::vector<Job> jobs;
  for (const auto& p : inputs) {
    Job j{p, image_to_tensor(load_image(p)), std::nullopt};
    if (j.image.dim(1) != ckpt.spec.in_channels)
      throw ConfigError(p.string() + " has " + std::to_string(j.image.dim(1)) +
                        " channels, the network expects " + std::to_string(ckpt.spec.in_channels));
    const int div = ckpt.spec.spatial_divisor();
    if (j.image.dim(2) % div != 0 || j.image.dim(3) % div != 0)
      throw DimensionError(p.string() + ": size must be a multiple of " + std::to_string(div));
    if (!f.gt.empty()) {
      const fs::path g = dir_input ? fs::path(f.gt) / p.filename() : fs::path(f.gt);
      if (!fs::exists(g)) throw ConfigError("missing ground truth " + g.string());
      j.gt = image_to_tensor(load_image(g));
      if (j.gt->shape() != j.image.shape())
        throw DimensionError("ground truth " + g.string() + " differs in shape from its input");
    }
    jobs.push_back(std::move(j));
  }

  fs::create_directories(f.output);
  for (const auto& j : jobs) {
    const Tensor restored = restore(ckpt.spec, ckpt.params, j.image, mode);
    const fs::path dest = fs::path(f.output) / j.source.filename();
    save_image(tensor_to_image(restored), dest);
    if (!j.gt) {
      if (ctx.json_lines) ctx.out << json{{"image", j.source.filename().string()}, {"output", dest.string()}}.dump() << '\n';
      else ctx.out << j.source.filename().string() << " -> " << dest.string() << '\n';
      continue;
    }
    Tensor clamped = durn::clamp(restored.detach(), 0.0, 1.0);
    const double p_in = psnr(j.image, *j.gt), p_out = psnr(restored, *j.gt);
    const double s_out = ssim_value(clamped.to(DType::f64), j.gt->to(DType::f64));
    if (ctx.json_lines) {
      ctx.out << json{{"image", j.source.filename().string()}, {"output", dest.string()},
                      {"psnr_input", json_num(p_in)}, {"psnr", json_num(p_out)}, {"ssim", s_out}}
                     .dump()
              << '\n';
    } else {
      ctx.out << j.source.filename().string() << " PSNR=" << num(p_out) << " SSIM=" << num(s_out)
              << " (input PSNR=" << num(p_in) << ")\n";
    }
  }
  return 0;
}

// ---------------------------------------------------------------- analyze-paths

struct PathFlags {
  std::string style = "d";
  int blocks = 3;
  bool check = false;
  bool list = false;
  std::string emit;
};

std::string pairs_text(const std::set<std::pair<int, int>>& pairs) {
  std::string s;
  for (const auto& [i, j] : pairs) s += (s.empty() ? "" : " ") + ("(" + std::to_string(i) + "," + std::to_string(j) + ")");
  return s.empty() ? "-" : s;
}

json report_json(ConnectionStyle style, int n, const PairingVerdict& v) {
  json pairs = json::array();
  for (const auto& [i, j] : v.report.pair_set) pairs.push_back({i, j});
  json j{{"style", to_string(style)}, {"blocks", n}, {"n_terms", v.report.n_terms},
         {"pair_set", pairs}, {"unpaired_f", v.report.unpaired_f}, {"unpaired_g", v.report.unpaired_g}};
  if (!v.law.empty()) {
    j["law"] = v.law;
    j["passed"] = v.passed;
  }
  return j;
}

int cmd_analyze_paths(const PathFlags& f, Ctx& ctx) {
  const ConnectionStyle style = parse_style(f.style);
  if (f.blocks < 1 || f.blocks > kMaxUnravelBlocks)
    throw ConfigError("--blocks must lie in 1.." + std::to_string(kMaxUnravelBlocks));
  const PairingVerdict v = verify_pairing(style, f.blocks);
  std::vector<int> blocks(static_cast<std::size_t>(f.blocks));
  for (int i = 0; i < f.blocks; ++i) blocks[static_cast<std::size_t>(i)] = i + 1;

  if (!f.emit.empty()) {
    std::ofstream emit(f.emit);
    if (!emit) throw Error("cannot write " + f.emit);
    for_each_term(style, blocks, [&](const TermExpr& t) {
      json pairs = json::array();
      for (const auto& [i, j] : t.direct_pairs) pairs.push_back({i, j});
      emit << json{{"term", t.to_string()}, {"direct_pairs", pairs}}.dump() << '\n';
    });
    emit << report_json(style, f.blocks, v).dump() << '\n';
  }

  if (ctx.json_lines) {
    ctx.out << report_json(style, f.blocks, v).dump() << '\n';
  } else {
    ctx.out << "style " << to_string(style) << ", " << f.blocks << " block(s)\n"
            << "  terms       " << v.report.n_terms << '\n'
            << "  pairs       " << pairs_text(v.report.pair_set) << '\n'
            << "  unpaired f  " << v.report.unpaired_f << '\n'
            << "  unpaired g  " << v.report.unpaired_g << '\n'
            << "  law         " << (v.law.empty() ? "none" : v.law + (v.passed ? ": pass" : ": FAIL")) << '\n';
    if (f.list || v.report.n_terms <= 64) {
      ctx.out << "paths:\n";
      for_each_term(style, blocks, [&](const TermExpr& t) { ctx.out << "  " << t.to_string() << '\n'; });
    }
  }
  return f.check && !v.passed ? 1 : 0;
}

// ---------------------------------------------------------------- small commands

int cmd_param_count(const NetFlags& f, Ctx& ctx) {
  const NetworkSpec spec = spec_from_flags(f, Arch::durn_p);
  const std::int64_t n = count_parameters(init_params(spec, 0));
  if (ctx.json_lines)
    ctx.out << json{{"arch", to_string(spec.arch)}, {"in_channels", spec.in_channels},
                    {"blocks", spec.blocks.size()}, {"parameters", n}}.dump() << '\n';
  else
    ctx.out << to_string(spec.arch) << " in_channels=" << spec.in_channels << " blocks="
            << spec.blocks.size() << " parameters=" << n << '\n';
  return 0;
}

int cmd_gradcheck(const std::string& filter, Ctx& ctx) {
  const auto results = run_gradient_suite(filter);
  if (results.empty()) throw ConfigError("no gradient check matches '" + filter + "'");
  int failed = 0;
  for (const auto& r : results) {
    failed += r.passed ? 0 : 1;
    if (ctx.json_lines) {
      ctx.out << json{{"check", r.name}, {"rel_error", r.error}, {"elementwise", r.worst_elementwise},
                      {"threshold", r.threshold},
                      {"passed", r.passed}, {"seconds", r.seconds}}.dump() << '\n';
    } else {
      char line[160];
      std::snprintf(line, sizeof line, "%-24s %.3e < %.0e  %-4s (elementwise %.1e)", r.name.c_str(),
                    r.error, r.threshold, r.passed ? "ok" : "FAIL", r.worst_elementwise);
      ctx.out << line << '\n';
    }
  }
  if (!ctx.json_lines) ctx.out << results.size() - failed << "/" << results.size() << " passed\n";
  return failed ? 1 : 0;
}

int cmd_metrics(const std::string& a_path, const std::string& b_path, Ctx& ctx) {
  const Tensor a = image_to_tensor(load_image(a_path), DType::f64);
  const Tensor b = image_to_tensor(load_image(b_path), DType::f64);
  if (a.shape() != b.shape())
    throw DimensionError("image shapes differ: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  const double p = psnr(a, b), s = ssim_value(a, b);
  if (ctx.json_lines) ctx.out << json{{"psnr", json_num(p)}, {"ssim", s}}.dump() << '\n';
  else ctx.out << "PSNR=" << num(p) << " SSIM=" << num(s) << '\n';
  return 0;
}

struct NoiseFlags {
  std::string input, output;
  double sigma = 30.0;
  std::uint64_t seed = 0;
  bool clamp = false;
};

int cmd_synth_noise(const NoiseFlags& f, Ctx& ctx) {
  if (!(f.sigma >= 0.0)) throw ConfigError("--sigma must be non-negative");
  if (!is_image_path(f.output)) throw ConfigError("unsupported output extension: " + f.output);
  const Tensor clean = image_to_tensor(load_image(f.input), DType::f64);
  const Tensor noisy = add_gaussian_noise(clean, f.sigma, f.seed, f.clamp);
  // 8-bit files cannot hold out-of-range values; the written image is clamped.
  save_image(tensor_to_image(noisy), f.output);
  std::vector<double> diff(static_cast<std::size_t>(clean.numel()));
  for (std::int64_t i = 0; i < clean.numel(); ++i) diff[static_cast<std::size_t>(i)] = noisy.at(i) - clean.at(i);
  double m = 0.0, sq = 0.0;
  for (double d : diff) m += d;
  m /= static_cast<double>(diff.size());
  for (double d : diff) sq += (d - m) * (d - m);
  const double std8 = std::sqrt(sq / static_cast<double>(diff.size())) * 255.0;
  if (ctx.json_lines) ctx.out << json{{"output", f.output}, {"sigma", f.sigma}, {"empirical_std", std8}}.dump() << '\n';
  else ctx.out << "wrote " << f.output << " sigma=" << num(f.sigma) << " empirical_std=" << num(std8) << '\n';
  return 0;
}

struct DumpFlags {
  NetFlags net;
  std::string checkpoint, input, out_dir, mode = "train";
  std::vector<int> taps;
  std::uint64_t seed = 0;
};

int cmd_dump_activations(const DumpFlags& f, Ctx& ctx) {
  NetworkSpec spec;
  ParamStore params;
  if (!f.checkpoint.empty()) {
    if (net_flags_given(f.net)) throw ConfigError("--checkpoint already defines the network");
    Checkpoint c = load_checkpoint(f.checkpoint);
    spec = c.spec;
    params = c.params;
  } else {
    spec = spec_from_flags(f.net, Arch::durn_p);
    params = init_params(spec, f.seed);
  }
  const NormMode mode = parse_mode(f.mode);
  std::vector<int> taps = f.taps;
  if (taps.empty())
    for (int t = 0; t <= static_cast<int>(spec.blocks.size()); ++t) taps.push_back(t);
  const Tensor input = image_to_tensor(load_image(f.input));
  const auto maps = dump_activation_maps(spec, params, input, taps, mode);

  fs::create_directories(f.out_dir);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const fs::path dest = fs::path(f.out_dir) / ("tap_" + std::to_string(taps[i]) + ".png");
    save_image(tensor_to_image(maps[i]), dest);
    if (ctx.json_lines) ctx.out << json{{"tap", taps[i]}, {"output", dest.string()}}.dump() << '\n';
    else ctx.out << "tap " << taps[i] << " -> " << dest.string() << '\n';
  }
  return 0;
}

struct FixtureFlags {
  std::string out_dir;
  int count = 5;
  int size = 64;
  int channels = 1;
  double sigma = 30.0;
  std::uint64_t seed = 0;
  bool clean_only = false;
};

int cmd_make_fixture(const FixtureFlags& f, Ctx& ctx) {
  if (f.count <= 0) throw ConfigError("--count must be positive");
  if (f.size <= 0) throw ConfigError("--size must be positive");
  if (f.channels != 1 && f.channels != 3) throw ConfigError("--channels must be 1 or 3");
  if (!(f.sigma >= 0.0)) throw ConfigError("--sigma must be non-negative");
  const fs::path dir = f.out_dir;
  fs::create_directories(dir);
  DatasetManifest m;
  m.task = "noise";
  for (int i = 0; i < f.count; ++i) {
    const ImageBuffer clean = synthetic_image(f.size, f.size, f.channels, f.seed + static_cast<std::uint64_t>(i));
    ManifestRecord r;
    r.clean = dir / ("clean_" + std::to_string(i) + ".png");
    save_image(clean, r.clean);
    if (!f.clean_only) {
      const Tensor noisy = add_gaussian_noise(image_to_tensor(clean), f.sigma,
                                              stream_seed(f.seed, "fixture." + std::to_string(i)));
      r.degraded = dir / ("noisy_" + std::to_string(i) + ".png");
      save_image(tensor_to_image(noisy), r.degraded);
    }
    m.records.push_back(r);
  }
  save_manifest(m, dir / "manifest.tsv");
  if (ctx.json_lines) ctx.out << json{{"manifest", (dir / "manifest.tsv").string()}, {"pairs", f.count}}.dump() << '\n';
  else ctx.out << "wrote " << f.count << " pair(s) and " << (dir / "manifest.tsv").string() << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual residual networks for image restoration", "durn"};
  app.set_config("--config", "", "TOML/INI file with option defaults (flags take precedence)");
  app.require_subcommand(1);
  app.fallthrough();
  Ctx ctx{out, err};
  app.add_flag("--json-lines", ctx.json_lines, "Machine-readable output, one JSON object per line");

  TrainFlags train_f;
  auto* train_cmd = app.add_subcommand("train", "Train a network on a manifest");
  add_net_flags(train_cmd, train_f.net);
  train_cmd->add_option("--task", train_f.task, "noise, real_noise, blur, haze, raindrop or rain");
  train_cmd->add_option("--manifest", train_f.manifest, "Dataset manifest (TSV)");
  train_cmd->add_option("--out-dir", train_f.out_dir, "Directory for checkpoints and history.csv");
  train_cmd->add_option("--resume", train_f.resume, "Continue from a checkpoint");
  train_cmd->add_option("--loss", train_f.loss, "Override the task loss: main, l1 or l2");
  train_cmd->add_option("--sigma", train_f.sigma, "Noise level (8-bit units) for the noise task");
  train_cmd->add_flag("--clamp-noise", train_f.clamp_noise, "Clamp noisy inputs to [0, 1]");
  train_cmd->add_flag("--fixed-noise", train_f.fixed_noise, "Use stored noisy images instead of fresh noise");
  train_cmd->add_option("--steps", train_f.steps, "Adam steps");
  train_cmd->add_option("--batch", train_f.batch, "Batch size");
  train_cmd->add_option("--crop", train_f.crop, "Square crop size (0: whole images)");
  train_cmd->add_option("--seed", train_f.seed, "Seed for init, sampling and noise");
  train_cmd->add_option("--lr", train_f.lr, "Adam learning rate");
  train_cmd->add_option("--checkpoint-interval", train_f.checkpoint_interval, "Steps between checkpoints");

  InferFlags infer_f;
  auto* infer_cmd = app.add_subcommand("infer", "Restore images with a trained checkpoint");
  infer_cmd->add_option("--checkpoint", infer_f.checkpoint, "Checkpoint file")->required();
  infer_cmd->add_option("--input", infer_f.input, "Image file or directory")->required();
  infer_cmd->add_option("--output", infer_f.output, "Output directory")->required();
  infer_cmd->add_option("--gt", infer_f.gt, "Ground truth file or directory (same names)");
  infer_cmd->add_option("--mode", infer_f.mode, "Normalisation mode: eval or train");

  PathFlags path_f;
  auto* paths_cmd = app.add_subcommand("analyze-paths", "Unravel a residual stack into its paths");
  paths_cmd->add_option("--style", path_f.style, "Connection style a, b, c or d");
  paths_cmd->add_option("--blocks", path_f.blocks, "Number of blocks (1..12)");
  paths_cmd->add_flag("--check", path_f.check, "Exit 1 when the style's pairing law fails");
  paths_cmd->add_flag("--list", path_f.list, "Print every path");
  paths_cmd->add_option("--emit", path_f.emit, "Write per-path JSON lines to this file");

  NetFlags count_f;
  auto* count_cmd = app.add_subcommand("param-count", "Count trainable parameters");
  add_net_flags(count_cmd, count_f);

  std::string grad_filter;
  bool grad_all = false;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad_cmd->add_flag("--all", grad_all, "Run every check (the default)");
  grad_cmd->add_option("--filter", grad_filter, "Only checks whose name contains this text");

  std::string metric_a, metric_b;
  auto* metrics_cmd = app.add_subcommand("metrics", "PSNR and SSIM between two images");
  metrics_cmd->add_option("a", metric_a, "First image")->required();
  metrics_cmd->add_option("b", metric_b, "Second image")->required();

  NoiseFlags noise_f;
  auto* noise_cmd = app.add_subcommand("synth-noise", "Add Gaussian noise to an image");
  noise_cmd->add_option("--input", noise_f.input, "Clean image")->required();
  noise_cmd->add_option("--output", noise_f.output, "Noisy image (8-bit, so clamped)")->required();
  noise_cmd->add_option("--sigma", noise_f.sigma, "Noise level in 8-bit units");
  noise_cmd->add_option("--seed", noise_f.seed, "Noise seed");
  noise_cmd->add_flag("--clamp", noise_f.clamp, "Clamp to [0, 1] before reporting statistics");

  DumpFlags dump_f;
  auto* dump_cmd = app.add_subcommand("dump-activations", "Write normalised block activation maps");
  add_net_flags(dump_cmd, dump_f.net);
  dump_cmd->add_option("--checkpoint", dump_f.checkpoint, "Checkpoint (otherwise random init)");
  dump_cmd->add_option("--input", dump_f.input, "Input image")->required();
  dump_cmd->add_option("--out-dir", dump_f.out_dir, "Output directory")->required();
  dump_cmd->add_option("--taps", dump_f.taps, "Block indices (0 = first block input)")->delimiter(',');
  dump_cmd->add_option("--mode", dump_f.mode, "Normalisation mode: train or eval");
  dump_cmd->add_option("--seed", dump_f.seed, "Init seed without a checkpoint");

  FixtureFlags fix_f;
  auto* fix_cmd = app.add_subcommand("make-fixture", "Write synthetic clean/noisy pairs and a manifest");
  fix_cmd->add_option("--out-dir", fix_f.out_dir, "Output directory")->required();
  fix_cmd->add_option("--count", fix_f.count, "Number of pairs");
  fix_cmd->add_option("--size", fix_f.size, "Image side length");
  fix_cmd->add_option("--channels", fix_f.channels, "1 or 3");
  fix_cmd->add_option("--sigma", fix_f.sigma, "Noise level in 8-bit units");
  fix_cmd->add_option("--seed", fix_f.seed, "Seed");
  fix_cmd->add_flag("--clean-only", fix_f.clean_only, "List '-' as the degraded image");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(train_f, ctx);
    if (*infer_cmd) return cmd_infer(infer_f, ctx);
    if (*paths_cmd) return cmd_analyze_paths(path_f, ctx);
    if (*count_cmd) return cmd_param_count(count_f, ctx);
    if (*grad_cmd) return cmd_gradcheck(grad_filter, ctx);
    if (*metrics_cmd) return cmd_metrics(metric_a, metric_b, ctx);
    if (*noise_cmd) return cmd_synth_noise(noise_f, ctx);
    if (*dump_cmd) return cmd_dump_activations(dump_f, ctx);
    if (*fix_cmd) return cmd_make_fixture(fix_f, ctx);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace durn
