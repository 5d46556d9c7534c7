// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: synth, train, denoise, eval, gradcheck, export,
// params.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cfnet/data.hpp"
#include "cfnet/errors.hpp"
#include "cfnet/gradcheck.hpp"
#include "cfnet/image_io.hpp"
#include "cfnet/inference.hpp"
#include "cfnet/introspect.hpp"
#include "cfnet/network.hpp"
#include "cfnet/noise_synth.hpp"
#include "cfnet/text_config.hpp"
#include "cfnet/trainer.hpp"

namespace {

using namespace cfnet;

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

/// Settings from an optional `key = value` file, overridden by flags that
/// were given explicitly on the command line.
struct Settings {
  std::string config_path;
  std::map<std::string, std::string> flags;
  std::vector<std::string> sets;  // raw key=value overrides

  void bind(CLI::App* app, const std::string& flag, const std::string& key,
            const std::string& help) {
    app->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { flags[key] = v; }, help);
  }

  TextConfig resolve() const {
    TextConfig kv = config_path.empty() ? TextConfig{} : TextConfig::load(config_path);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      kv.set(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [k, v] : flags) kv.set(k, v);
    return kv;
  }
};

void add_common(CLI::App* app, Settings& s) {
  app->add_option("--config", s.config_path, "key = value settings file");
  app->add_option("--set", s.sets, "Override a setting (key=value), repeatable");
}

void add_arch_flags(CLI::App* app, Settings& s) {
  s.bind(app, "--variant", "variant", "FULL, NO_ATB, NO_CFB, NO_DNE or BASELINE");
  s.bind(app, "--width-plan", "width_plan", "Six comma-separated stage widths");
  s.bind(app, "--channels", "input_channels", "Image channels (1 or 3)");
}

ArchConfig arch_from(const TextConfig& kv) {
  std::ostringstream text;
  for (const auto& [k, v] : kv.values()) text << k << " = " << v << "\n";
  ArchConfig a = ArchConfig::parse(text.str());
  if (kv.contains("variant")) {
    a.components = components_of(parse_variant(kv.get("variant", "FULL")));
    a.validate();
  }
  return a;
}

void add_noise_flags(CLI::App* app, Settings& s) {
  s.bind(app, "--noise", "noise", "awgn or hetero");
  s.bind(app, "--sigma", "sigma", "AWGN sigma on the 0-255 scale");
  s.bind(app, "--sigma-d", "sigma_d", "Signal-dependent std (hetero)");
  s.bind(app, "--sigma-s", "sigma_s", "Signal-independent std (hetero)");
  s.bind(app, "--gamma", "gamma", "ISP gamma (hetero)");
  s.bind(app, "--quantize", "quantize", "ISP quantisation bits: 0, 8 or 16 (hetero)");
}

/// Fixed-level noise for synth/eval: awgn uses sigma, hetero a single
/// (sigma_d, sigma_s) pair.
NoiseSpec noise_from(const TextConfig& kv) {
  NoiseSpec n;
  const std::string kind = kv.get("noise", "awgn");
  if (kind == "awgn") {
    n.mode = TrainMode::kNonBlind;
    n.sigma = kv.get_double("sigma", 25.0);
  } else if (kind == "hetero") {
    n.mode = TrainMode::kHetero;
    n.sigma_d_lo = n.sigma_d_hi = kv.get_double("sigma_d", 0.08);
    n.sigma_s_lo = n.sigma_s_hi = kv.get_double("sigma_s", 0.02);
    n.isp.gamma = kv.get_double("gamma", 2.2);
    n.isp.quantize_bits = static_cast<int>(kv.get_size("quantize", 0));
  } else {
    throw ConfigError("unknown noise kind '" + kind + "' (expected awgn or hetero)");
  }
  n.validate();
  return n;
}

Dataset load_dir(const std::string& dir) {
  Dataset ds = load_dataset(dir, warn);
  if (ds.empty()) throw DataError("no readable images in " + dir);
  return ds;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  Settings s;
  std::string input, output, sigma_out, fixtures;
  std::size_t count = 20, size = 64, channels = 1;
  std::uint64_t seed = 1;
  int bits = 16;
};

int run_synth(const SynthArgs& a) {
  if (!a.fixtures.empty()) {
    std::filesystem::create_directories(a.fixtures);
    for (const auto& im : fixture_images(a.count, a.size, a.seed, a.channels)) {
      write_pnm(a.fixtures + "/" + im.id + (a.channels == 3 ? ".ppm" : ".pgm"), im.image, a.bits);
    }
    std::cout << "wrote " << a.count << " fixture images to " << a.fixtures << "\n";
    return kOk;
  }
  if (a.input.empty() || a.output.empty()) {
    throw ConfigError("synth needs --input and --output (or --fixtures DIR)");
  }
  const NoiseSpec noise = noise_from(a.s.resolve());
  const NoisyPair pair = synthesize(read_pnm(a.input), noise, a.seed);
  write_pnm(a.output, pair.noisy, a.bits);
  if (!a.sigma_out.empty()) write_pnm(a.sigma_out, pair.sigma, 16);
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  Settings s;
  std::string data, val, real_clean, real_noisy, out = "cfnet.ckpt", log, resume;
  std::size_t fixtures = 0;
};

int run_train(const TrainArgs& a) {
  const TextConfig kv = a.s.resolve();
  const ArchConfig arch = arch_from(kv);
  const TrainConfig cfg = TrainConfig::from_text(kv, TrainConfig{});

  Dataset train;
  if (!a.data.empty()) {
    train = load_dir(a.data);
  } else if (a.fixtures > 0) {
    train = fixture_images(a.fixtures, 64, cfg.seed);
  } else {
    throw ConfigError("train needs --data DIR or --fixtures N");
  }
  Dataset val = a.val.empty() ? Dataset{} : load_dir(a.val);

  Trainer trainer(arch, cfg, std::move(train), std::move(val), warn);
  if (!a.real_clean.empty() || !a.real_noisy.empty()) {
    trainer.set_real_data(load_dir(a.real_clean), load_dir(a.real_noisy));
  }
  if (!a.resume.empty()) trainer.load(a.resume);

  std::ofstream log_file;
  if (!a.log.empty()) {
    log_file.open(a.log, a.resume.empty() ? std::ios::trunc : std::ios::app);
    if (!log_file) throw DataError("cannot open log " + a.log);
  }
  std::cout << "params " << trainer.network().params().scalar_count() << "  baseline_psnr "
            << trainer.validation_baseline() << "\n";
  try {
    trainer.run(cfg.max_iters, [&](const TrainRecord& r) {
      const std::string line = r.to_line();
      if (log_file) log_file << line << "\n" << std::flush;
      if (r.val_psnr || r.iter % 10 == 0) std::cout << line << "\n";
    }, a.out);
  } catch (const NumericalError&) {
    std::cerr << "training aborted; last good checkpoint (if any) kept at " << a.out << "\n";
    throw;
  }
  std::cout << "checkpoint " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct DenoiseArgs {
  Settings s;
  std::string checkpoint, input, output, sigma_out;
  std::size_t tile = 0, overlap = 16;
  int bits = 16;
};

int run_denoise(const DenoiseArgs& a) {
  const TextConfig kv = a.s.resolve();
  std::optional<ArchConfig> expected;
  if (!a.s.config_path.empty() || !a.s.flags.empty()) expected = arch_from(kv);
  const CFNet net = load_model(a.checkpoint, expected);
  std::optional<TileSpec> tiling;
  if (a.tile > 0) tiling = TileSpec{a.tile, a.overlap};
  const Denoised d = denoise_image(net, read_pnm(a.input), tiling);
  write_pnm(a.output, d.image, a.bits);
  if (!a.sigma_out.empty()) write_pnm(a.sigma_out, d.sigma, 16);
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  Settings s;
  std::string checkpoint, data, out_dir, report;
  std::uint64_t seed = 1;
  bool identity = false;
  int bits = 16;
};

int run_eval(const EvalArgs& a) {
  const TextConfig kv = a.s.resolve();
  const NoiseSpec noise = noise_from(kv);
  // Every unreadable image is listed before failing, so one run reports them all.
  std::vector<std::string> unreadable;
  const Dataset ds = load_dataset(a.data, [&](const std::string& w) { unreadable.push_back(w); });
  if (!unreadable.empty()) {
    for (const auto& w : unreadable) std::cerr << "missing: " << w << "\n";
    throw DataError(std::to_string(unreadable.size()) + " evaluation image(s) could not be read");
  }
  if (ds.empty()) throw DataError("no readable images in " + a.data);
  MetricReport report;
  if (a.identity) {
    report = evaluate_noisy_input(ds, noise, a.seed);
  } else {
    if (a.checkpoint.empty()) throw ConfigError("eval needs --checkpoint (or --identity)");
    const CFNet net = load_model(a.checkpoint);
    std::vector<Denoised> outputs;
    report = evaluate(net, ds, noise, a.seed, a.out_dir.empty() ? nullptr : &outputs);
    if (!a.out_dir.empty()) {
      std::filesystem::create_directories(a.out_dir);
      for (std::size_t i = 0; i < ds.size(); ++i) {
        write_pnm(a.out_dir + "/" + ds[i].id + (ds[i].image.c() == 3 ? ".ppm" : ".pgm"),
                  outputs[i].image, a.bits);
      }
    }
  }
  const std::string text = report.to_text();
  std::cout << text;
  if (!a.report.empty()) std::ofstream(a.report) << text;
  return kOk;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  Settings s;
  std::string scope = "primitive";
  std::size_t samples = 50;
  std::uint64_t seed = 7;
};

int run_gradcheck_cmd(const GradcheckArgs& a) {
  const TextConfig kv = a.s.resolve();
  const ArchConfig arch = kv.values().empty() ? ArchConfig::desk() : arch_from(kv);
  bool all_passed = true;
  for (const auto& r : run_gradcheck(parse_grad_scope(a.scope), arch, a.samples, a.seed)) {
    std::cout << r.to_text() << "\n";
    all_passed = all_passed && r.passed;
  }
  std::cout << (all_passed ? "gradcheck PASS" : "gradcheck FAIL") << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct ExportArgs {
  Settings s;
  std::string checkpoint, input, what = "noisemaps", out_dir = "export";
  std::size_t stage = 1, block = 1, group = 0;
  std::vector<std::string> positions;
};

KernelSite parse_site(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw ParameterError("position must be y,x: '" + s + "'");
  try {
    return {std::stoul(s.substr(0, comma)), std::stoul(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw ParameterError("position must be y,x: '" + s + "'");
  }
}

int run_export(const ExportArgs& a) {
  const CFNet net = load_model(a.checkpoint);
  const Tensor4 image = read_pnm(a.input);
  if (a.what == "noisemaps") {
    for (const auto& p : export_noisemaps(net, image, a.out_dir)) std::cout << p << "\n";
    return kOk;
  }
  if (a.what != "kernels") throw ParameterError("--what must be kernels or noisemaps");
  if (a.stage < 1 || a.stage > kStages || a.block < 1) {
    throw ParameterError("--stage is 1..6 and --block starts at 1");
  }
  std::vector<KernelSite> sites;
  for (const auto& p : a.positions) sites.push_back(parse_site(p));
  if (sites.empty()) {
    const std::size_t level = CFNet::kLevel[a.stage - 1];
    sites.push_back({(image.h() >> level) / 2, (image.w() >> level) / 2});
  }
  const auto grids =
      export_kernels(net, image, a.stage - 1, a.block - 1, a.group, sites, a.out_dir);
  for (const auto& g : grids) {
    std::printf("kernel (%zu, %zu): centre %+.4e  neighbour mean %+.4e  %s\n", g.site.y, g.site.x,
                g.center, g.neighbor_mean,
                g.high_pass_like() ? "centre/neighbour signs differ" : "same-sign");
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct ParamsArgs {
  Settings s;
};

int run_params(const ParamsArgs& a) {
  const ArchConfig base = arch_from(a.s.resolve());
  for (Variant v : {Variant::kFull, Variant::kNoAtb, Variant::kNoCfb, Variant::kNoDne,
                    Variant::kBaseline}) {
    const CFNet net = build_ablation_variant(v, base);
    std::printf("%-9s %zu\n", variant_name(v).c_str(), net.params().scalar_count());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CFNet image denoiser"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* cs = app.add_subcommand("synth", "Add synthetic noise to an image or write fixtures");
  add_common(cs, synth.s);
  add_noise_flags(cs, synth.s);
  cs->add_option("--input", synth.input, "Clean PGM/PPM");
  cs->add_option("--output", synth.output, "Noisy output");
  cs->add_option("--sigma-out", synth.sigma_out, "Ground-truth sigma map output");
  cs->add_option("--fixtures", synth.fixtures, "Write procedural fixture images into DIR");
  cs->add_option("--count", synth.count, "Fixture count");
  cs->add_option("--size", synth.size, "Fixture side length");
  cs->add_option("--image-channels", synth.channels, "Fixture channels (1 or 3)");
  cs->add_option("--seed", synth.seed, "Noise / fixture seed");
  cs->add_option("--bits", synth.bits, "Output bit depth (8 or 16)");

  TrainArgs train;
  auto* ct = app.add_subcommand("train", "Train a network");
  add_common(ct, train.s);
  add_arch_flags(ct, train.s);
  train.s.bind(ct, "--iters", "iters", "Iterations");
  train.s.bind(ct, "--batch", "batch", "Batch size");
  train.s.bind(ct, "--patch", "patch", "Patch size (multiple of 4)");
  train.s.bind(ct, "--lr", "lr", "Initial learning rate");
  train.s.bind(ct, "--lambda", "lambda", "Initial noise-loss weight");
  train.s.bind(ct, "--halving-period", "halving_period", "Iterations per halving");
  train.s.bind(ct, "--mode", "mode", "nonblind, blind or hetero");
  train.s.bind(ct, "--sigma", "sigma", "Non-blind sigma (0-255)");
  train.s.bind(ct, "--seed", "seed", "Seed for init and sampling");
  train.s.bind(ct, "--checkpoint-every", "checkpoint_every", "Checkpoint period");
  train.s.bind(ct, "--real-mix", "real_mix", "Fraction of real-noise batches");
  ct->add_option("--data", train.data, "Directory of clean training images");
  ct->add_option("--fixtures", train.fixtures, "Train on N procedural 64x64 images instead");
  ct->add_option("--val", train.val, "Validation directory (default: training set)");
  ct->add_option("--real-clean", train.real_clean, "Real-noise pairs: clean directory");
  ct->add_option("--real-noisy", train.real_noisy, "Real-noise pairs: noisy directory");
  ct->add_option("--out", train.out, "Checkpoint path");
  ct->add_option("--log", train.log, "Training log path");
  ct->add_option("--resume", train.resume, "Resume from a training checkpoint");

  DenoiseArgs den;
  auto* cd = app.add_subcommand("denoise", "Denoise one image");
  add_common(cd, den.s);
  add_arch_flags(cd, den.s);
  cd->add_option("--checkpoint", den.checkpoint, "Model checkpoint")->required();
  cd->add_option("--input", den.input, "Noisy PGM/PPM")->required();
  cd->add_option("--output", den.output, "Denoised output")->required();
  cd->add_option("--sigma-out", den.sigma_out, "Predicted sigma map output");
  cd->add_option("--tile", den.tile, "Tile size (0: whole image)");
  cd->add_option("--overlap", den.overlap, "Tile overlap");
  cd->add_option("--bits", den.bits, "Output bit depth (8 or 16)");

  EvalArgs ev;
  auto* ce = app.add_subcommand("eval", "Evaluate on a clean image set");
  add_common(ce, ev.s);
  add_noise_flags(ce, ev.s);
  ce->add_option("--checkpoint", ev.checkpoint, "Model checkpoint");
  ce->add_option("--data", ev.data, "Directory of clean images")->required();
  ce->add_option("--seed", ev.seed, "Noise seed (combined with each image id)");
  ce->add_option("--out-dir", ev.out_dir, "Write denoised images here");
  ce->add_option("--report", ev.report, "Write the metric report here");
  ce->add_option("--bits", ev.bits, "Output bit depth (8 or 16)");
  ce->add_flag("--identity", ev.identity, "Score the noisy inputs themselves");

  GradcheckArgs gc;
  auto* cg = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  add_common(cg, gc.s);
  add_arch_flags(cg, gc.s);
  cg->add_option("--scope", gc.scope, "primitive, cfb, nem or full");
  cg->add_option("--samples", gc.samples, "Sampled parameters per check");
  cg->add_option("--seed", gc.seed, "Sampling seed");

  ExportArgs ex;
  auto* cx = app.add_subcommand("export", "Export conditional kernels or noise maps");
  cx->add_option("--checkpoint", ex.checkpoint, "Model checkpoint")->required();
  cx->add_option("--input", ex.input, "Input PGM/PPM")->required();
  cx->add_option("--what", ex.what, "kernels or noisemaps");
  cx->add_option("--out-dir", ex.out_dir, "Output directory");
  cx->add_option("--stage", ex.stage, "Stage 1..6 (kernels)");
  cx->add_option("--block", ex.block, "Filter block within the stage, from 1 (kernels)");
  cx->add_option("--group", ex.group, "Kernel group (kernels)");
  cx->add_option("--pos", ex.positions, "Position y,x in stage coordinates, repeatable");

  ParamsArgs pa;
  auto* cp = app.add_subcommand("params", "Parameter counts of every variant");
  add_common(cp, pa.s);
  add_arch_flags(cp, pa.s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (cs->parsed()) return run_synth(synth);
    if (ct->parsed()) return run_train(train);
    if (cd->parsed()) return run_denoise(den);
    if (ce->parsed()) return run_eval(ev);
    if (cg->parsed()) return run_gradcheck_cmd(gc);
    if (cx->parsed()) return run_export(ex);
    if (cp->parsed()) return run_params(pa);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
