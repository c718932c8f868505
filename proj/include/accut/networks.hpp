#pragma once

#include <torch/torch.h>

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "accut/common.hpp"

namespace accut {

// Ordered list of tapped feature maps, highest resolution first.
struct TapEntry {
  std::string layer;
  torch::Tensor features;
};
using FeaturePyramid = std::vector<TapEntry>;

struct GeneratorConfig {
  int in_channels = 1;
  int base_width = 64;   // encoder widths: W, 2W, 4W
  int num_classes = kNumClasses;
  int encoder_blocks = 4;
  int decoder_blocks = 2;
};

// Residual block with reflection padding and instance norm.
class ResnetBlockImpl : public torch::nn::Module {
 public:
  explicit ResnetBlockImpl(int channels);
  torch::Tensor forward(torch::Tensor x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResnetBlock);

// Shared encoder f_phi: 7x7 stem, two stride-2 convs, residual blocks.
// Taps for PatchNCE: stem, both downsampling convs, residual blocks 2 and 4.
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const GeneratorConfig& config);
  std::pair<torch::Tensor, FeaturePyramid> forward(const torch::Tensor& image);

  std::vector<int> tap_channels() const { return tap_channels_; }
  std::vector<std::string> tap_layers() const { return tap_layers_; }

 private:
  torch::nn::Sequential stem_{nullptr}, down1_{nullptr}, down2_{nullptr};
  std::vector<ResnetBlock> blocks_;
  std::vector<int> tap_channels_;
  std::vector<std::string> tap_layers_;
  int mid_block_ = 0;
};
TORCH_MODULE(Encoder);

// Segmentation decoder f_M. Returns per-pixel class logits at input
// resolution plus the per-stage activations handed to the style decoder
// (one per stage resolution: 1/4, 1/2, 1/1).
class MaskDecoderImpl : public torch::nn::Module {
 public:
  explicit MaskDecoderImpl(const GeneratorConfig& config);
  std::pair<torch::Tensor, FeaturePyramid> forward(const torch::Tensor& bottleneck);

 private:
  std::vector<ResnetBlock> blocks_;
  torch::nn::Sequential up1_{nullptr}, up2_{nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(MaskDecoder);

// Style decoder f_S. Every stage convolution consumes the concatenation of
// the running style features and the same-resolution f_M stage activation.
// With sever_mask_gradient set the mask features enter as values only; no
// gradient reaches f_M through this path.
class StyleDecoderImpl : public torch::nn::Module {
 public:
  explicit StyleDecoderImpl(const GeneratorConfig& config);
  torch::Tensor forward(const torch::Tensor& bottleneck, const FeaturePyramid& mask_taps,
                        bool sever_mask_gradient);

 private:
  std::vector<ResnetBlock> blocks_;
  torch::nn::Sequential up1_{nullptr}, up2_{nullptr}, out_{nullptr};
};
TORCH_MODULE(StyleDecoder);

// Full ACCUT generator: shared encoder, mask decoder, style decoder.
class AccutGeneratorImpl : public torch::nn::Module {
 public:
  explicit AccutGeneratorImpl(const GeneratorConfig& config = {});

  std::pair<torch::Tensor, FeaturePyramid> encode(const torch::Tensor& image);
  std::pair<torch::Tensor, FeaturePyramid> decode_mask(const torch::Tensor& bottleneck);
  torch::Tensor decode_style(const torch::Tensor& bottleneck, const FeaturePyramid& mask_taps,
                             bool sever_mask_gradient);

  // encode -> decode_mask -> decode_style with the mask gradient severed.
  std::pair<torch::Tensor, torch::Tensor> translate(const torch::Tensor& image);

  // Style path consumes image_style, mask path consumes image_mask.
  torch::Tensor translate_ablation(const torch::Tensor& image_style,
                                   const torch::Tensor& image_mask);

  Encoder encoder{nullptr};
  MaskDecoder mask_decoder{nullptr};
  StyleDecoder style_decoder{nullptr};

  const GeneratorConfig& config() const { return config_; }

 private:
  GeneratorConfig config_;
};
TORCH_MODULE(AccutGenerator);

struct DiscriminatorConfig {
  int in_channels = 1;
  int base_width = 64;
  int n_layers = 3;  // stride-2 stages
};

// PatchGAN discriminator: maps an image to a patch logit map.
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(const DiscriminatorConfig& config = {});
  torch::Tensor forward(const torch::Tensor& image);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

// Projection head f_H: one two-layer MLP per tapped encoder layer, mapping
// sampled feature vectors to unit-norm embeddings.
class PatchProjectorImpl : public torch::nn::Module {
 public:
  PatchProjectorImpl(const std::vector<int>& tap_channels, int embed_dim = 256);

  struct Projection {
    std::vector<torch::Tensor> embeddings;  // per layer [B,N,D], unit-norm
    std::vector<torch::Tensor> patch_ids;   // per layer [N] int64
  };

  // When patch_ids is supplied, exactly those spatial locations are used;
  // otherwise locations are sampled (shared across the batch).
  Projection project(const FeaturePyramid& taps, int num_patches,
                     const std::optional<std::vector<torch::Tensor>>& patch_ids = std::nullopt);

  int embed_dim() const { return embed_dim_; }

 private:
  std::vector<torch::nn::Sequential> mlps_;
  std::vector<int> tap_channels_;
  int embed_dim_;
};
TORCH_MODULE(PatchProjector);

// DCGAN-style init used across generator, discriminator and projector.
void init_gan_weights(torch::nn::Module& module);

}  // namespace accut
