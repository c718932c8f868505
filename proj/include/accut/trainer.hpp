#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "accut/dataset.hpp"
#include "accut/networks.hpp"
#include "accut/objectives.hpp"

namespace accut {

struct TrainConfig {
  OperatingMode mode = OperatingMode::kCut;
  int epochs = 250;
  int batch_size = 1;
  double learning_rate = 2e-4;
  std::pair<double, double> betas{0.5, 0.999};
  std::uint64_t seed = 1;
  int checkpoint_interval = 50;  // epochs
  int image_height = 64;
  int image_width = 128;
  int base_width = 8;
  int disc_width = 8;
  int disc_layers = 3;
  int num_patches = 256;
  int embed_dim = 256;
  double nce_tau = 0.07;
  // When set, the style and segmentation objectives share one backward pass
  // and one optimizer step on the shared encoder instead of phases (2)/(3).
  bool joint_encoder_update = false;
  std::optional<LossWeights> weights_override;

  LossWeights weights() const {
    return weights_override ? *weights_override : mode_weights(mode);
  }
  void validate() const;
};

struct Batch {
  torch::Tensor images;  // [B,1,H,W]
  torch::Tensor masks;   // [B,H,W] int64; may be undefined
};

Batch stack_batch(const std::vector<Sample>& samples, bool with_masks);

// One JSON line per training step: LossBreakdown + epoch + step (+ the
// discriminator loss of phase 1).
class MetricsLogger {
 public:
  MetricsLogger() = default;
  MetricsLogger(const std::filesystem::path& file, const std::string& config_hash,
                OperatingMode mode, std::uint64_t seed);
  void log(int epoch, int step, const LossBreakdown& losses, double loss_d);

 private:
  std::ofstream out_;
};

struct FitResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_log;
  LossBreakdown last_losses;
  double last_loss_d = 0.0;
};

// Owns the networks and the per-phase optimizers. The three phases are
// public so the update partition can be audited step by step.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& config);

  // Phase 1: discriminator update; the fake is gradient-detached.
  double step_discriminator(const torch::Tensor& x_source, const torch::Tensor& x_target);

  struct StyleLosses {
    double gan = 0.0;
    double nce_source = 0.0;
    double nce_target = 0.0;
  };
  // Phase 2: generator + projection-head update with the mask gradient
  // severed; touches f_phi, f_S, f_H only.
  StyleLosses step_generator(const torch::Tensor& x_source, const torch::Tensor& x_target);

  struct SegLosses {
    double seg_source = 0.0;
    double seg_target = 0.0;
  };
  // Phase 3: segmentation update on f_phi + f_M; skipped when both lambdas
  // are zero.
  SegLosses step_segmentation(const torch::Tensor& x_source, const torch::Tensor& y_source,
                              const torch::Tensor& x_target, const torch::Tensor& y_target);

  LossBreakdown train_step(const Batch& source, const Batch& target);
  double last_loss_d() const { return last_loss_d_; }

  void save_checkpoint(const std::filesystem::path& path) const;
  static Trainer from_checkpoint(const std::filesystem::path& path);

  AccutGenerator generator() { return generator_; }
  PatchDiscriminator discriminator() { return discriminator_; }
  PatchProjector projector() { return projector_; }
  const TrainConfig& config() const { return config_; }
  void set_config_hash(std::string hash) { config_hash_ = std::move(hash); }
  int epoch = 0;
  int step = 0;

 private:
  void build_optimizers();

  TrainConfig config_;
  LossWeights weights_;
  AccutGenerator generator_{nullptr};
  PatchDiscriminator discriminator_{nullptr};
  PatchProjector projector_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_d_, opt_g_, opt_seg_;
  std::string config_hash_;
  double last_loss_d_ = 0.0;
};

// Metadata stored next to the parameter arrays in a checkpoint.
struct CheckpointMeta {
  std::string mode;
  int epoch = 0;
  int step = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string config_json;
};

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

// Returns a human-readable warning when the stored mode differs from the
// expected one, empty otherwise.
std::string check_checkpoint_mode(const CheckpointMeta& meta, OperatingMode expected);

// Trains per the config on the manifest's train split (falling back to all
// entries of a domain when the split is absent) and writes checkpoints plus a
// step-level metrics log under out_dir.
FitResult fit(const TrainConfig& config, const DatasetManifest& manifest,
              const std::filesystem::path& out_dir, const std::string& config_hash = "");

}  // namespace accut
