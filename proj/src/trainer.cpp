// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfnet/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "cfnet/errors.hpp"
#include "cfnet/inference.hpp"
#include "cfnet/random.hpp"

namespace cfnet {

namespace {

constexpr const char* kArchEntry = "meta.arch";
constexpr const char* kTrainEntry = "meta.train";

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

Tensor4 encode_text(const std::string& s) {
  Tensor4 t(1, 1, 1, s.size());
  for (std::size_t i = 0; i < s.size(); ++i) t[i] = static_cast<unsigned char>(s[i]);
  return t;
}

std::string decode_text(const Tensor4& t) {
  std::string s(t.size(), '\0');
  for (std::size_t i = 0; i < t.size(); ++i) s[i] = static_cast<char>(static_cast<int>(t[i]));
  return s;
}

const Tensor4* find_entry(const std::vector<checkpoint::Entry>& entries, const std::string& name) {
  for (const auto& [n, t] : entries)
    if (n == name) return &t;
  return nullptr;
}

// Seeds and counters are split into 32-bit halves so they survive fp64.
void put_u64(Tensor4& t, std::size_t i, std::uint64_t v) {
  t[i] = static_cast<Real>(v & 0xFFFFFFFFull);
  t[i + 1] = static_cast<Real>(v >> 32);
}
std::uint64_t get_u64(const Tensor4& t, std::size_t i) {
  return static_cast<std::uint64_t>(t[i]) | (static_cast<std::uint64_t>(t[i + 1]) << 32);
}

}  // namespace

std::uint64_t TrainConfig::period() const {
  return halving_period > 0 ? halving_period : std::max<std::uint64_t>(1, max_iters / 4);
}

void TrainConfig::validate() const {
  if (!(lr_init > 0)) throw ConfigError("lr must be positive");
  if (!(lambda_init >= 0)) throw ConfigError("lambda must be >= 0");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (patch_size == 0 || patch_size % 4 != 0) {
    throw ConfigError("patch size must be a positive multiple of 4");
  }
  if (!(alpha > 0 && alpha < 0.5)) throw ConfigError("alpha must lie in (0, 0.5)");
  if (!(real_mix >= 0 && real_mix <= 1)) throw ConfigError("real_mix must lie in [0, 1]");
  if (val_every == 0) throw ConfigError("val_every must be positive");
  try {
    noise.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

TrainMode parse_train_mode(const std::string& s) {
  const std::string m = lower(s);
  if (m == "nonblind") return TrainMode::kNonBlind;
  if (m == "blind") return TrainMode::kBlind;
  if (m == "hetero") return TrainMode::kHetero;
  throw ConfigError("unknown training mode '" + s + "' (expected nonblind, blind or hetero)");
}

TrainConfig TrainConfig::from_text(const TextConfig& kv, const TrainConfig& base) {
  TrainConfig c = base;
  c.lr_init = kv.get_double("lr", c.lr_init);
  c.lambda_init = kv.get_double("lambda", c.lambda_init);
  c.halving_period = kv.get_u64("halving_period", c.halving_period);
  c.batch_size = kv.get_size("batch", c.batch_size);
  c.patch_size = kv.get_size("patch", c.patch_size);
  c.max_iters = kv.get_u64("iters", c.max_iters);
  c.seed = kv.get_u64("seed", c.seed);
  if (kv.contains("mode")) c.noise.mode = parse_train_mode(kv.get("mode", ""));
  c.noise.sigma = kv.get_double("sigma", c.noise.sigma);
  c.noise.sigma_lo = kv.get_double("sigma_lo", c.noise.sigma_lo);
  c.noise.sigma_hi = kv.get_double("sigma_hi", c.noise.sigma_hi);
  c.noise.sigma_d_lo = kv.get_double("sigma_d_lo", c.noise.sigma_d_lo);
  c.noise.sigma_d_hi = kv.get_double("sigma_d_hi", c.noise.sigma_d_hi);
  c.noise.sigma_s_lo = kv.get_double("sigma_s_lo", c.noise.sigma_s_lo);
  c.noise.sigma_s_hi = kv.get_double("sigma_s_hi", c.noise.sigma_s_hi);
  c.noise.isp.gamma = kv.get_double("gamma", c.noise.isp.gamma);
  c.noise.isp.quantize_bits = static_cast<int>(kv.get_size("quantize", c.noise.isp.quantize_bits));
  c.alpha = kv.get_double("alpha", c.alpha);
  if (kv.contains("rec")) {
    try {
      c.rec_norm = parse_rec_norm(kv.get("rec", ""));
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
  }
  c.val_every = kv.get_u64("val_every", c.val_every);
  c.val_images = kv.get_size("val_images", c.val_images);
  c.val_seed = kv.get_u64("val_seed", c.val_seed);
  c.checkpoint_every = kv.get_u64("checkpoint_every", c.checkpoint_every);
  c.real_mix = kv.get_double("real_mix", c.real_mix);
  return c;
}

std::string TrainRecord::to_line() const {
  char buf[256];
  int n = std::snprintf(buf, sizeof buf, "iter=%llu lr=%.9e lambda=%.9e rec=%.12e",
                        static_cast<unsigned long long>(iter), lr, lambda, rec);
  std::string s(buf, static_cast<std::size_t>(n));
  if (asymm) {
    n = std::snprintf(buf, sizeof buf, " asymm=%.12e", *asymm);
  } else {
    n = std::snprintf(buf, sizeof buf, " asymm=none");
  }
  s.append(buf, static_cast<std::size_t>(n));
  n = std::snprintf(buf, sizeof buf, " total=%.12e", total);
  s.append(buf, static_cast<std::size_t>(n));
  if (val_psnr) {
    n = std::snprintf(buf, sizeof buf, " val_psnr=%.6f", *val_psnr);
    s.append(buf, static_cast<std::size_t>(n));
  }
  return s;
}

Real moving_average_total(const std::vector<TrainRecord>& history, std::uint64_t end,
                          std::uint64_t window) {
  Real sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : history) {
    if (r.iter <= end && r.iter + window > end) {
      sum += r.total;
      ++n;
    }
  }
  if (n == 0) throw ParameterError("no records in the moving-average window");
  return sum / static_cast<Real>(n);
}

std::vector<checkpoint::Entry> model_entries(const CFNet& net) {
  std::vector<checkpoint::Entry> entries;
  entries.emplace_back(kArchEntry, encode_text(net.config().to_text()));
  for (auto& e : checkpoint::from_store(net.params())) entries.push_back(std::move(e));
  return entries;
}

ArchConfig arch_from_entries(const std::vector<checkpoint::Entry>& entries) {
  const Tensor4* t = find_entry(entries, kArchEntry);
  if (!t) throw CheckpointError("checkpoint has no architecture entry");
  try {
    return ArchConfig::parse(decode_text(*t));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint architecture: ") + e.what());
  }
}

void write_checkpoint_atomic(const std::string& path,
                             const std::vector<checkpoint::Entry>& entries) {
  const std::string tmp = path + ".tmp";
  checkpoint::write(tmp, entries);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError("cannot move checkpoint into place at " + path + ": " + ec.message());
}

void save_model(const std::string& path, const CFNet& net) {
  write_checkpoint_atomic(path, model_entries(net));
}

CFNet load_model(const std::string& path, const std::optional<ArchConfig>& expected) {
  const auto entries = checkpoint::read(path);
  CFNet net(expected ? *expected : arch_from_entries(entries));
  checkpoint::load_into(net.params(), entries);
  return net;
}

Trainer::Trainer(const ArchConfig& arch, const TrainConfig& cfg, Dataset train, Dataset validation,
                 const WarningSink& warn)
    : cfg_(cfg), net_(arch) {
  cfg_.validate();
  train_ = usable_images(train, cfg_.patch_size, warn);
  for (const auto& im : train_) {
    if (im.image.c() != arch.input_channels) {
      throw DataError("image " + im.id + " has " + std::to_string(im.image.c()) +
                      " channels, network expects " + std::to_string(arch.input_channels));
    }
  }
  if (validation.empty()) validation = train_;
  const std::size_t nv = std::min(cfg_.val_images, validation.size());
  val_clean_.assign(validation.begin(), validation.begin() + static_cast<std::ptrdiff_t>(nv));
  for (const auto& im : val_clean_) {
    val_noisy_.push_back(synthesize(im.image, cfg_.noise, image_noise_seed(cfg_.val_seed, im.id)).noisy);
  }
  adam_ = AdamState::for_store(net_.params());
}

void Trainer::set_real_data(Dataset clean, Dataset noisy) {
  if (clean.size() != noisy.size() || clean.empty()) {
    throw DataError("real-noise data needs equally many clean and noisy images");
  }
  real_clean_ = std::move(clean);
  real_noisy_ = std::move(noisy);
}

TrainRecord Trainer::step() {
  const ScheduleValue sched = lr_schedule(iter_, cfg_.lr_init, cfg_.lambda_init, cfg_.period());
  BatchSpec spec{cfg_.batch_size, cfg_.patch_size, cfg_.seed, cfg_.noise};

  bool real = false;
  if (cfg_.real_mix > 0 && !real_clean_.empty()) {
    CounterRng pick(derive_seed(cfg_.seed, 0x313Cull), iter_);
    real = pick.uniform() < cfg_.real_mix;
  }
  const PatchBatch batch = real ? sample_real_batch(real_clean_, real_noisy_, spec, iter_)
                                : sample_batch(train_, spec, iter_);

  CFNet::Cache cache;
  const CFNet::Output out = net_.forward(batch.noisy, &cache);
  LossValue rec = rec_loss(out.denoised, batch.clean, cfg_.rec_norm);

  TrainRecord r;
  r.iter = iter_;
  r.lr = sched.lr;
  r.lambda = sched.lambda;
  r.rec = rec.value;
  Tensor4 grad_sigma;
  if (batch.supervised()) {
    LossValue as = asymm_loss(out.sigma, batch.sigma, cfg_.alpha);
    r.asymm = as.value;
    grad_sigma = std::move(as.grad);
    grad_sigma *= sched.lambda;
  }
  r.total = total_loss(r.rec, r.asymm, sched.lambda);
  if (!std::isfinite(r.total)) {
    throw NumericalError("non-finite loss at iteration " + std::to_string(iter_));
  }

  net_.params().zero_grad();
  net_.backward(rec.grad, grad_sigma, cache);
  try {
    adam_step(net_.params(), adam_, sched.lr);
  } catch (const NumericalError& e) {
    net_.params().zero_grad();
    throw NumericalError(std::string(e.what()) + " at iteration " + std::to_string(iter_));
  }
  ++iter_;
  if (iter_ % cfg_.val_every == 0) r.val_psnr = validate();
  history_.push_back(r);
  return r;
}

void Trainer::run(std::uint64_t until, const std::function<void(const TrainRecord&)>& on_record,
                  const std::string& checkpoint_path) {
  until = std::min(until, cfg_.max_iters);
  while (iter_ < until) {
    TrainRecord r;
    try {
      r = step();
    } catch (const NumericalError&) {
      // The failed step modified nothing, so the current state is the last
      // good one.
      if (!checkpoint_path.empty()) save(checkpoint_path);
      throw;
    }
    if (on_record) on_record(r);
    if (!checkpoint_path.empty() && cfg_.checkpoint_every > 0 &&
        iter_ % cfg_.checkpoint_every == 0) {
      save(checkpoint_path);
    }
  }
  if (!checkpoint_path.empty()) save(checkpoint_path);
}

Real Trainer::validate() const {
  Real sum = 0.0;
  for (std::size_t i = 0; i < val_clean_.size(); ++i) {
    sum += psnr(denoise_image(net_, val_noisy_[i]).image, val_clean_[i].image);
  }
  return sum / static_cast<Real>(val_clean_.size());
}

Real Trainer::validation_baseline() const {
  Real sum = 0.0;
  for (std::size_t i = 0; i < val_clean_.size(); ++i) sum += psnr(val_noisy_[i], val_clean_[i].image);
  return sum / static_cast<Real>(val_clean_.size());
}

std::vector<checkpoint::Entry> Trainer::state_entries() const {
  std::vector<checkpoint::Entry> entries = model_entries(net_);
  Tensor4 meta(1, 1, 1, 4);
  put_u64(meta, 0, iter_);
  put_u64(meta, 2, adam_.step);
  entries.emplace_back(kTrainEntry, std::move(meta));
  const auto params = net_.params().unique();
  for (std::size_t i = 0; i < params.size(); ++i) {
    entries.emplace_back("adam.m/" + params[i].first, adam_.m[i]);
    entries.emplace_back("adam.v/" + params[i].first, adam_.v[i]);
  }
  return entries;
}

void Trainer::save(const std::string& path) const { write_checkpoint_atomic(path, state_entries()); }

void Trainer::load(const std::string& path) {
  const auto entries = checkpoint::read(path);
  const ArchConfig stored = arch_from_entries(entries);
  if (!(stored == net_.config())) {
    throw CheckpointError("checkpoint architecture differs from the configured one:\n  stored:\n" +
                          stored.to_text() + "  configured:\n" + net_.config().to_text());
  }
  const Tensor4* meta = find_entry(entries, kTrainEntry);
  if (!meta || meta->size() != 4) throw CheckpointError("checkpoint has no training state");
  checkpoint::load_into(net_.params(), entries);
  AdamState adam = AdamState::for_store(net_.params());
  const auto params = net_.params().unique();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor4* m = find_entry(entries, "adam.m/" + params[i].first);
    const Tensor4* v = find_entry(entries, "adam.v/" + params[i].first);
    if (!m || !v) throw CheckpointError("checkpoint lacks optimizer state for " + params[i].first);
    if (m->shape() != adam.m[i].shape() || v->shape() != adam.v[i].shape()) {
      throw CheckpointError("optimizer state for " + params[i].first + " has dims " +
                            to_string(m->shape()) + ", expected " + to_string(adam.m[i].shape()));
    }
    adam.m[i] = *m;
    adam.v[i] = *v;
  }
  adam.step = get_u64(*meta, 2);
  adam_ = std::move(adam);
  iter_ = get_u64(*meta, 0);
  net_.params().zero_grad();
}

}  // namespace cfnet
