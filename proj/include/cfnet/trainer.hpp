// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cfnet/data.hpp"
#include "cfnet/network.hpp"
#include "cfnet/objectives.hpp"
#include "cfnet/optim.hpp"
#include "cfnet/text_config.hpp"

namespace cfnet {

struct TrainConfig {
  Real lr_init = 5e-5;
  Real lambda_init = 0.5;
  std::uint64_t halving_period = 0;  // 0: max_iters / 4
  std::size_t batch_size = 8;
  std::size_t patch_size = 32;
  std::uint64_t max_iters = 1000;
  std::uint64_t seed = 1;
  NoiseSpec noise;
  Real alpha = 0.35;
  RecNorm rec_norm = RecNorm::kL2;
  std::uint64_t val_every = 100;
  std::size_t val_images = 8;
  std::uint64_t val_seed = 20260;
  std::uint64_t checkpoint_every = 0;  // 0: only at exit
  Real real_mix = 0.0;                 // probability of a real-noise batch

  std::uint64_t period() const;
  /// Throws ConfigError.
  void validate() const;

  /// Keys: lr, lambda, halving_period, batch, patch, iters, seed, mode
  /// (nonblind|blind|hetero), sigma, sigma_lo, sigma_hi, sigma_d_lo,
  /// sigma_d_hi, sigma_s_lo, sigma_s_hi, gamma, quantize, alpha, rec
  /// (l1|l2), val_every, val_images, val_seed, checkpoint_every, real_mix.
  /// Missing keys keep the values of `base`.
  static TrainConfig from_text(const TextConfig& text, const TrainConfig& base);
};

TrainMode parse_train_mode(const std::string& s);

struct TrainRecord {
  std::uint64_t iter = 0;  // 0-based step index
  Real lr = 0.0;
  Real lambda = 0.0;
  Real rec = 0.0;
  std::optional<Real> asymm;  // absent for real-noise batches
  Real total = 0.0;
  std::optional<Real> val_psnr;

  std::string to_line() const;
};

/// Mean of `total` over records with iter in (end - window, end].
Real moving_average_total(const std::vector<TrainRecord>& history, std::uint64_t end,
                          std::uint64_t window);

/// Checkpoint helpers. A model checkpoint carries the architecture in a
/// "meta.arch" entry, so it can be loaded without a separate config.
std::vector<checkpoint::Entry> model_entries(const CFNet& net);
ArchConfig arch_from_entries(const std::vector<checkpoint::Entry>& entries);
void save_model(const std::string& path, const CFNet& net);
/// Builds the stored architecture, or `expected` when given (then every
/// parameter must match its dims, otherwise CheckpointError).
CFNet load_model(const std::string& path, const std::optional<ArchConfig>& expected = {});

/// Writes `entries` to `path` via a temporary file and rename, so an
/// interrupted write never replaces a good checkpoint.
void write_checkpoint_atomic(const std::string& path, const std::vector<checkpoint::Entry>& entries);

class Trainer {
 public:
  /// `validation` empty: the first val_images images of `train`.
  Trainer(const ArchConfig& arch, const TrainConfig& cfg, Dataset train, Dataset validation = {},
          const WarningSink& warn = {});

  /// Enables mixed batches drawn from index-aligned real clean/noisy pairs.
  void set_real_data(Dataset clean, Dataset noisy);

  /// One optimisation step. Throws NumericalError on a non-finite loss or
  /// gradient, leaving parameters untouched.
  TrainRecord step();

  /// Steps until iteration() == until (capped at max_iters). Each record is
  /// passed to `on_record`; when `checkpoint_path` is non-empty, a checkpoint
  /// is written every checkpoint_every steps and at the end. A step that fails
  /// with NumericalError leaves the state untouched; that state is saved
  /// before the error propagates.
  void run(std::uint64_t until, const std::function<void(const TrainRecord&)>& on_record = {},
           const std::string& checkpoint_path = {});

  /// Mean PSNR of the network over the validation subset under the fixed
  /// validation noise.
  Real validate() const;
  /// Mean PSNR of the noisy validation inputs themselves.
  Real validation_baseline() const;

  /// Full training state: parameters, Adam moments and iteration.
  std::vector<checkpoint::Entry> state_entries() const;
  void save(const std::string& path) const;
  /// Restores parameters, Adam moments and iteration from save().
  void load(const std::string& path);

  std::uint64_t iteration() const { return iter_; }
  const CFNet& network() const { return net_; }
  CFNet& network() { return net_; }
  const TrainConfig& config() const { return cfg_; }
  const std::vector<TrainRecord>& history() const { return history_; }
  const AdamState& adam() const { return adam_; }

 private:
  TrainConfig cfg_;
  CFNet net_;
  AdamState adam_;
  Dataset train_;
  Dataset val_clean_;
  std::vector<Tensor4> val_noisy_;
  Dataset real_clean_, real_noisy_;
  std::uint64_t iter_ = 0;
  std::vector<TrainRecord> history_;
};

}  // namespace cfnet
