#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "accut/common.hpp"

namespace accut {

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class OperatingMode : int { kCut = 0, kAccutS = 1, kAccutT = 2, kAccutST = 3 };

OperatingMode mode_from_string(const std::string& name);
const char* mode_name(OperatingMode mode);

struct LossWeights {
  double lambda_Xs = 1.0;
  double lambda_Xt = 1.0;
  double lambda_s = 0.0;
  double lambda_t = 0.0;
};

// The four operating modes and their weight assignments.
LossWeights mode_weights(OperatingMode mode);

struct LossComponents {
  double gan = 0.0;
  double nce_source = 0.0;
  double nce_target = 0.0;
  double seg_source = 0.0;
  double seg_target = 0.0;
};

struct LossBreakdown {
  double gan = 0.0;
  double nce_source = 0.0;
  double nce_target = 0.0;
  double seg_source = 0.0;
  double seg_target = 0.0;
  double total = 0.0;
};

LossBreakdown total_loss(const LossComponents& components, const LossWeights& weights);

// Categorical cross entropy over per-pixel class distributions, mean-reduced
// over batch and pixels. logits: [B,C,H,W]; target: [B,H,W] int64 (< C).
torch::Tensor segmentation_ce(const torch::Tensor& mask_logits,
                              const torch::Tensor& target_mask,
                              int class_count = kNumClasses);

struct GanLosses {
  torch::Tensor loss_d;
  torch::Tensor loss_g;
};

// Least-squares GAN objectives on patch logit maps.
GanLosses gan_losses(const torch::Tensor& disc_real, const torch::Tensor& disc_fake);
torch::Tensor gan_generator_loss(const torch::Tensor& disc_fake);

// PatchNCE: per layer an N-way softmax over query/key similarities with the
// positive at the matching position index, averaged over positions, batch and
// layers. Embeddings: [B,N,D] (or [N,D]), unit-norm, matched by index.
torch::Tensor patch_nce(const std::vector<torch::Tensor>& query_embeddings,
                        const std::vector<torch::Tensor>& key_embeddings,
                        double temperature = 0.07);

// Eq.-shaped weighted sum on live tensors (used by the gradient checks and
// the joint-update training variant).
torch::Tensor weighted_total(const torch::Tensor& gan, const torch::Tensor& nce_source,
                             const torch::Tensor& nce_target, const torch::Tensor& seg_source,
                             const torch::Tensor& seg_target, const LossWeights& weights);

}  // namespace accut
