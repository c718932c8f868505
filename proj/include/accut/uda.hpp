#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "accut/dataset.hpp"
#include "accut/metrics.hpp"

namespace accut {

struct AugmentConfig {
  bool flip = true;
  double flip_prob = 0.5;
  bool resolution_jitter = true;
  std::pair<double, double> scale_range{0.8, 1.25};
  bool gamma = true;
  std::pair<double, double> gamma_range{0.7, 1.5};
  bool hist_shift = true;
  std::pair<double, double> shift_range{-0.1, 0.1};
  std::pair<int, int> crop_size{256, 480};  // (H, W)
};

// Geometric transforms (flip / resize / crop) hit image and mask alike;
// photometric transforms (gamma / histogram shift) hit the image only.
// Inputs smaller than the crop are replicate-padded.
std::pair<torch::Tensor, torch::Tensor> augment(const torch::Tensor& image,
                                                const torch::Tensor& mask,
                                                const AugmentConfig& config,
                                                std::mt19937_64& rng);

struct UdaConfig {
  int folds = 5;
  int epochs = 15;
  std::pair<int, int> crop_size{256, 480};
  std::string backbone = "unet_small";  // or efficientnet_b2
  int backbone_width = 16;
  bool augment_enabled = true;
  AugmentConfig augment_config;
  double learning_rate = 1e-3;
  int batch_size = 8;
  std::uint64_t seed = 1;

  void validate() const;
};

// Compact U-Net used at desk scale; EfficientNet-B2 encoder behind the
// backbone flag for the paper-scale configuration. Inputs whose spatial size
// is not a multiple of the backbone stride are replicate-padded and the
// logits cropped back.
class SegmenterImpl : public torch::nn::Module {
 public:
  SegmenterImpl(const std::string& backbone, int width, int num_classes = kNumClasses);
  torch::Tensor forward(const torch::Tensor& images);
  int spatial_multiple() const { return spatial_multiple_; }

 private:
  std::function<torch::Tensor(const torch::Tensor&)> forward_;
  std::string backbone_;
  int spatial_multiple_ = 8;
};
TORCH_MODULE(Segmenter);

struct FoldResult {
  int fold_id = 0;
  DiceReport target_dice;
  int selected_epoch = 0;             // argmin of source validation loss
  std::vector<double> val_loss_curve;
};

struct UdaSummary {
  std::vector<FoldResult> folds;
  std::vector<double> per_class_mean;  // over folds
  double mean_mdice = 0.0;
  double std_mdice = 0.0;
  std::filesystem::path csv_file;
  std::filesystem::path folds_file;
};

// Translates every source image of the manifest with the checkpointed
// generator; masks are copied byte-identical. Returns the manifest of the
// translated corpus (rooted at out_dir).
DatasetManifest translate_corpus(const std::filesystem::path& checkpoint,
                                 const DatasetManifest& manifest,
                                 const std::filesystem::path& out_dir);

// 5-fold (configurable) cross-validation: train on k-1 source folds,
// select the best epoch on the held-out source fold, evaluate Dice on the
// full target test set. Fold partitions are subject-disjoint. Target masks
// are only ever read in the evaluation phase; the harness asserts this on
// the audit log before evaluating.
UdaSummary kfold_train(const UdaConfig& config, const DatasetManifest& train_manifest,
                       const DatasetManifest& target_test_manifest,
                       const std::filesystem::path& out_dir,
                       FileAuditLog* audit = nullptr);

}  // namespace accut
