#include "accut/networks.hpp"

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace accut {

namespace {

nn::Conv2d conv7(int in, int out) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 7).padding(3).padding_mode(torch::kReflect));
}

nn::Conv2d conv3_down(int in, int out) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(2).padding(1));
}

nn::ConvTranspose2d tconv_up(int in, int out) {
  return nn::ConvTranspose2d(
      nn::ConvTranspose2dOptions(in, out, 3).stride(2).padding(1).output_padding(1));
}

nn::InstanceNorm2d inorm(int ch) {
  return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(ch));
}

void check_divisible_by_4(const torch::Tensor& image) {
  if (image.dim() != 4) throw ShapeError("expected [B,C,H,W] image batch");
  if (image.size(2) % 4 != 0 || image.size(3) % 4 != 0) {
    throw ShapeError("image spatial dims must be divisible by 4, got " +
                     std::to_string(image.size(2)) + "x" + std::to_string(image.size(3)));
  }
}

FeaturePyramid maybe_detach(const FeaturePyramid& taps, bool detach) {
  if (!detach) return taps;
  FeaturePyramid out;
  out.reserve(taps.size());
  for (const auto& t : taps) out.push_back({t.layer, t.features.detach()});
  return out;
}

}  // namespace

ResnetBlockImpl::ResnetBlockImpl(int channels) {
  body_ = nn::Sequential(
      nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1).padding_mode(torch::kReflect)),
      inorm(channels), nn::ReLU(),
      nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1).padding_mode(torch::kReflect)),
      inorm(channels));
  register_module("body", body_);
}

torch::Tensor ResnetBlockImpl::forward(torch::Tensor x) { return x + body_->forward(x); }

EncoderImpl::EncoderImpl(const GeneratorConfig& config) {
  if (config.encoder_blocks < 1) throw ConfigError("encoder_blocks must be >= 1");
  const int w = config.base_width;
  stem_ = nn::Sequential(conv7(config.in_channels, w), inorm(w), nn::ReLU());
  down1_ = nn::Sequential(conv3_down(w, 2 * w), inorm(2 * w), nn::ReLU());
  down2_ = nn::Sequential(conv3_down(2 * w, 4 * w), inorm(4 * w), nn::ReLU());
  register_module("stem", stem_);
  register_module("down1", down1_);
  register_module("down2", down2_);
  for (int i = 0; i < config.encoder_blocks; ++i) {
    blocks_.push_back(ResnetBlock(4 * w));
    register_module("block" + std::to_string(i + 1), blocks_.back());
  }
  tap_layers_ = {"stem", "down1", "down2"};
  tap_channels_ = {w, 2 * w, 4 * w};
  mid_block_ = config.encoder_blocks / 2;  // 4 blocks -> tap after block 2
  if (mid_block_ >= 1 && mid_block_ < config.encoder_blocks) {
    tap_layers_.push_back("block" + std::to_string(mid_block_));
    tap_channels_.push_back(4 * w);
  }
  tap_layers_.push_back("block" + std::to_string(config.encoder_blocks));
  tap_channels_.push_back(4 * w);
}

std::pair<torch::Tensor, FeaturePyramid> EncoderImpl::forward(const torch::Tensor& image) {
  check_divisible_by_4(image);
  FeaturePyramid taps;
  torch::Tensor x = stem_->forward(image);
  taps.push_back({"stem", x});
  x = down1_->forward(x);
  taps.push_back({"down1", x});
  x = down2_->forward(x);
  taps.push_back({"down2", x});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    x = blocks_[i]->forward(x);
    if (int(i + 1) == mid_block_ && i + 1 < blocks_.size()) {
      taps.push_back({"block" + std::to_string(i + 1), x});
    }
  }
  taps.push_back({"block" + std::to_string(blocks_.size()), x});
  return {x, taps};
}

MaskDecoderImpl::MaskDecoderImpl(const GeneratorConfig& config) {
  const int w = config.base_width;
  for (int i = 0; i < config.decoder_blocks; ++i) {
    blocks_.push_back(ResnetBlock(4 * w));
    register_module("block" + std::to_string(i + 1), blocks_.back());
  }
  up1_ = nn::Sequential(tconv_up(4 * w, 2 * w), inorm(2 * w), nn::ReLU());
  up2_ = nn::Sequential(tconv_up(2 * w, w), inorm(w), nn::ReLU());
  head_ = nn::Conv2d(nn::Conv2dOptions(w, config.num_classes, 1));
  register_module("up1", up1_);
  register_module("up2", up2_);
  register_module("head", head_);
}

std::pair<torch::Tensor, FeaturePyramid> MaskDecoderImpl::forward(
    const torch::Tensor& bottleneck) {
  torch::Tensor x = bottleneck;
  for (auto& b : blocks_) x = b->forward(x);
  FeaturePyramid taps;
  taps.push_back({"mask_res", x});
  x = up1_->forward(x);
  taps.push_back({"mask_up1", x});
  x = up2_->forward(x);
  taps.push_back({"mask_up2", x});
  return {head_->forward(x), taps};
}

StyleDecoderImpl::StyleDecoderImpl(const GeneratorConfig& config) {
  const int w = config.base_width;
  // Stage input widths: own features + same-resolution f_M stage features.
  for (int i = 0; i < config.decoder_blocks; ++i) {
    blocks_.push_back(ResnetBlock(8 * w));
    register_module("block" + std::to_string(i + 1), blocks_.back());
  }
  up1_ = nn::Sequential(tconv_up(8 * w + 4 * w, 2 * w), inorm(2 * w), nn::ReLU());
  up2_ = nn::Sequential(tconv_up(2 * w + 2 * w, w), inorm(w), nn::ReLU());
  out_ = nn::Sequential(conv7(w + w, config.in_channels), nn::Tanh());
  register_module("up1", up1_);
  register_module("up2", up2_);
  register_module("out", out_);
}

torch::Tensor StyleDecoderImpl::forward(const torch::Tensor& bottleneck,
                                        const FeaturePyramid& mask_taps,
                                        bool sever_mask_gradient) {
  if (mask_taps.size() != 3) {
    throw ShapeError("style decoder expects 3 mask-stage feature maps");
  }
  FeaturePyramid m = maybe_detach(mask_taps, sever_mask_gradient);
  auto same_res = [&](const torch::Tensor& x, const torch::Tensor& tap) {
    if (x.size(2) != tap.size(2) || x.size(3) != tap.size(3)) {
      throw ShapeError("mask tap resolution does not match style stage input");
    }
  };

  same_res(bottleneck, m[0].features);
  torch::Tensor x = torch::cat({bottleneck, m[0].features}, 1);
  for (auto& b : blocks_) x = b->forward(x);

  same_res(x, m[0].features);
  x = up1_->forward(torch::cat({x, m[0].features}, 1));

  same_res(x, m[1].features);
  x = up2_->forward(torch::cat({x, m[1].features}, 1));

  same_res(x, m[2].features);
  return out_->forward(torch::cat({x, m[2].features}, 1));
}

AccutGeneratorImpl::AccutGeneratorImpl(const GeneratorConfig& config) : config_(config) {
  encoder = Encoder(config);
  mask_decoder = MaskDecoder(config);
  style_decoder = StyleDecoder(config);
  register_module("encoder", encoder);
  register_module("mask_decoder", mask_decoder);
  register_module("style_decoder", style_decoder);
  init_gan_weights(*this);
}

std::pair<torch::Tensor, FeaturePyramid> AccutGeneratorImpl::encode(
    const torch::Tensor& image) {
  return encoder->forward(image);
}

std::pair<torch::Tensor, FeaturePyramid> AccutGeneratorImpl::decode_mask(
    const torch::Tensor& bottleneck) {
  return mask_decoder->forward(bottleneck);
}

torch::Tensor AccutGeneratorImpl::decode_style(const torch::Tensor& bottleneck,
                                               const FeaturePyramid& mask_taps,
                                               bool sever_mask_gradient) {
  return style_decoder->forward(bottleneck, mask_taps, sever_mask_gradient);
}

std::pair<torch::Tensor, torch::Tensor> AccutGeneratorImpl::translate(
    const torch::Tensor& image) {
  auto [bottleneck, taps] = encode(image);
  auto [mask_logits, mask_taps] = decode_mask(bottleneck);
  torch::Tensor fake = decode_style(bottleneck, mask_taps, /*sever_mask_gradient=*/true);
  return {fake, mask_logits};
}

torch::Tensor AccutGeneratorImpl::translate_ablation(const torch::Tensor& image_style,
                                                     const torch::Tensor& image_mask) {
  if (image_style.sizes() != image_mask.sizes()) {
    throw ShapeError("translate_ablation: style and mask images differ in shape");
  }
  auto [style_bottleneck, style_taps] = encode(image_style);
  auto [mask_bottleneck, mask_enc_taps] = encode(image_mask);
  auto [mask_logits, mask_taps] = decode_mask(mask_bottleneck);
  return decode_style(style_bottleneck, mask_taps, /*sever_mask_gradient=*/true);
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const DiscriminatorConfig& config) {
  const int w = config.base_width;
  body_ = nn::Sequential();
  body_->push_back(nn::Conv2d(nn::Conv2dOptions(config.in_channels, w, 4).stride(2).padding(1)));
  body_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  int ch = w;
  for (int i = 1; i < config.n_layers; ++i) {
    int next = std::min(ch * 2, 8 * w);
    body_->push_back(nn::Conv2d(nn::Conv2dOptions(ch, next, 4).stride(2).padding(1)));
    body_->push_back(inorm(next));
    body_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    ch = next;
  }
  int next = std::min(ch * 2, 8 * w);
  body_->push_back(nn::Conv2d(nn::Conv2dOptions(ch, next, 4).stride(1).padding(1)));
  body_->push_back(inorm(next));
  body_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  body_->push_back(nn::Conv2d(nn::Conv2dOptions(next, 1, 4).stride(1).padding(1)));
  register_module("body", body_);
  init_gan_weights(*this);
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& image) {
  return body_->forward(image);
}

PatchProjectorImpl::PatchProjectorImpl(const std::vector<int>& tap_channels, int embed_dim)
    : tap_channels_(tap_channels), embed_dim_(embed_dim) {
  for (std::size_t l = 0; l < tap_channels_.size(); ++l) {
    auto mlp = nn::Sequential(nn::Linear(tap_channels_[l], embed_dim_), nn::ReLU(),
                              nn::Linear(embed_dim_, embed_dim_));
    mlps_.push_back(mlp);
    register_module("mlp" + std::to_string(l), mlp);
  }
  init_gan_weights(*this);
}

PatchProjectorImpl::Projection PatchProjectorImpl::project(
    const FeaturePyramid& taps, int num_patches,
    const std::optional<std::vector<torch::Tensor>>& patch_ids) {
  if (taps.size() != mlps_.size()) {
    throw ShapeError("projector: tap count does not match configured layers");
  }
  if (patch_ids && patch_ids->size() != taps.size()) {
    throw ShapeError("projector: patch_ids layer count mismatch");
  }
  Projection out;
  for (std::size_t l = 0; l < taps.size(); ++l) {
    const torch::Tensor& feat = taps[l].features;
    const auto batch = feat.size(0);
    const auto channels = feat.size(1);
    const auto positions = feat.size(2) * feat.size(3);
    if (channels != tap_channels_[l]) {
      throw ShapeError("projector: tap channel width mismatch at layer " + taps[l].layer);
    }
    torch::Tensor ids;
    if (patch_ids) {
      ids = (*patch_ids)[l].to(torch::kInt64);
      if (ids.numel() == 0 ||
          ids.min().item<std::int64_t>() < 0 ||
          ids.max().item<std::int64_t>() >= positions) {
        throw std::out_of_range("projector: patch id out of range at layer " +
                                taps[l].layer);
      }
    } else {
      if (num_patches < 1 || num_patches > positions) {
        throw ConfigError("projector: num_patches must lie in [1, H*W] at layer " +
                          taps[l].layer);
      }
      ids = torch::randperm(positions, torch::kInt64).slice(0, 0, num_patches);
    }
    torch::Tensor flat = feat.flatten(2).permute({0, 2, 1});  // [B, HW, C]
    torch::Tensor picked = flat.index_select(1, ids);         // [B, N, C]
    torch::Tensor emb = mlps_[l]->forward(picked);
    emb = F::normalize(emb, F::NormalizeFuncOptions().dim(-1));
    out.embeddings.push_back(emb);
    out.patch_ids.push_back(ids);
  }
  return out;
}

void init_gan_weights(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& m : module.modules(/*include_self=*/false)) {
    if (auto* conv = m->as<nn::Conv2d>()) {
      nn::init::normal_(conv->weight, 0.0, 0.02);
      if (conv->bias.defined()) nn::init::zeros_(conv->bias);
    } else if (auto* tconv = m->as<nn::ConvTranspose2d>()) {
      nn::init::normal_(tconv->weight, 0.0, 0.02);
      if (tconv->bias.defined()) nn::init::zeros_(tconv->bias);
    } else if (auto* linear = m->as<nn::Linear>()) {
      nn::init::normal_(linear->weight, 0.0, 0.02);
      if (linear->bias.defined()) nn::init::zeros_(linear->bias);
    }
  }
}

}  // namespace accut
