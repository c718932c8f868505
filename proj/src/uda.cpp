#include "accut/uda.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "accut/objectives.hpp"
#include "accut/rng.hpp"
#include "accut/trainer.hpp"

namespace fs = std::filesystem;
namespace nn = torch::nn;
namespace F = torch::nn::functional;
using nlohmann::json;

namespace accut {

void UdaConfig::validate() const {
  if (folds < 2) throw ConfigError("uda: folds must be >= 2");
  if (epochs < 1) throw ConfigError("uda: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("uda: batch_size must be >= 1");
  if (backbone != "unet_small" && backbone != "efficientnet_b2") {
    throw ConfigError("uda: unknown backbone '" + backbone + "'");
  }
}

// ---------------------------------------------------------------------------
// augmentation

namespace {

torch::Tensor resize_image(const torch::Tensor& img4, int h, int w) {
  return F::interpolate(img4, F::InterpolateFuncOptions()
                                  .size(std::vector<std::int64_t>{h, w})
                                  .mode(torch::kBilinear)
                                  .align_corners(false));
}

torch::Tensor resize_mask(const torch::Tensor& mask4, int h, int w) {
  return F::interpolate(mask4, F::InterpolateFuncOptions()
                                   .size(std::vector<std::int64_t>{h, w})
                                   .mode(torch::kNearest));
}

torch::Tensor replicate_pad(const torch::Tensor& x4, int need_h, int need_w) {
  int pl = need_w / 2, pr = need_w - pl;
  int pt = need_h / 2, pb = need_h - pt;
  return F::pad(x4, F::PadFuncOptions({pl, pr, pt, pb}).mode(torch::kReplicate));
}

}  // namespace

std::pair<torch::Tensor, torch::Tensor> augment(const torch::Tensor& image,
                                                const torch::Tensor& mask,
                                                const AugmentConfig& cfg,
                                                std::mt19937_64& rng) {
  if (image.dim() != 3 || mask.dim() != 2) {
    throw ShapeError("augment expects image [1,H,W] and mask [H,W]");
  }
  torch::Tensor img = image.unsqueeze(0);
  torch::Tensor msk = mask.to(torch::kFloat32).unsqueeze(0).unsqueeze(0);

  if (cfg.flip && rng_bernoulli(rng, cfg.flip_prob)) {
    img = img.flip(3);
    msk = msk.flip(3);
  }

  if (cfg.resolution_jitter) {
    double s = rng_uniform(rng, cfg.scale_range.first, cfg.scale_range.second);
    int h = std::max(8, int(std::lround(double(img.size(2)) * s)));
    int w = std::max(8, int(std::lround(double(img.size(3)) * s)));
    img = resize_image(img, h, w);
    msk = resize_mask(msk, h, w);
  }

  const int crop_h = cfg.crop_size.first;
  const int crop_w = cfg.crop_size.second;
  if (img.size(2) < crop_h || img.size(3) < crop_w) {
    int need_h = std::max<std::int64_t>(0, crop_h - img.size(2));
    int need_w = std::max<std::int64_t>(0, crop_w - img.size(3));
    img = replicate_pad(img, need_h, need_w);
    msk = replicate_pad(msk, need_h, need_w);
  }
  int oy = rng_uniform_int(rng, 0, int(img.size(2)) - crop_h);
  int ox = rng_uniform_int(rng, 0, int(img.size(3)) - crop_w);
  img = img.slice(2, oy, oy + crop_h).slice(3, ox, ox + crop_w);
  msk = msk.slice(2, oy, oy + crop_h).slice(3, ox, ox + crop_w);

  if (cfg.gamma) {
    double g = rng_uniform(rng, cfg.gamma_range.first, cfg.gamma_range.second);
    img = ((img + 1.0) * 0.5).clamp(0.0, 1.0).pow(g) * 2.0 - 1.0;
  }
  if (cfg.hist_shift) {
    double off = rng_uniform(rng, cfg.shift_range.first, cfg.shift_range.second);
    img = (img + off).clamp(-1.0, 1.0);
  }

  return {img.squeeze(0).contiguous(), msk.squeeze(0).squeeze(0).to(torch::kInt64).contiguous()};
}

// ---------------------------------------------------------------------------
// segmenter backbones

namespace {

nn::Sequential cbr(int in, int out, int stride = 1) {
  return nn::Sequential(
      nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1)),
      nn::InstanceNorm2d(nn::InstanceNorm2dOptions(out)), nn::ReLU());
}

class UnetBackboneImpl : public torch::nn::Module {
 public:
  UnetBackboneImpl(int width, int num_classes) {
    enc0_ = register_module("enc0", cbr(1, width));
    enc1_ = register_module("enc1", cbr(width, 2 * width, 2));
    enc2_ = register_module("enc2", cbr(2 * width, 4 * width, 2));
    enc3_ = register_module("enc3", cbr(4 * width, 8 * width, 2));
    up2_ = register_module(
        "up2", nn::ConvTranspose2d(
                   nn::ConvTranspose2dOptions(8 * width, 4 * width, 2).stride(2)));
    dec2_ = register_module("dec2", cbr(8 * width, 4 * width));
    up1_ = register_module(
        "up1", nn::ConvTranspose2d(
                   nn::ConvTranspose2dOptions(4 * width, 2 * width, 2).stride(2)));
    dec1_ = register_module("dec1", cbr(4 * width, 2 * width));
    up0_ = register_module(
        "up0",
        nn::ConvTranspose2d(nn::ConvTranspose2dOptions(2 * width, width, 2).stride(2)));
    dec0_ = register_module("dec0", cbr(2 * width, width));
    head_ = register_module("head",
                            nn::Conv2d(nn::Conv2dOptions(width, num_classes, 1)));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    torch::Tensor e0 = enc0_->forward(x);
    torch::Tensor e1 = enc1_->forward(e0);
    torch::Tensor e2 = enc2_->forward(e1);
    torch::Tensor e3 = enc3_->forward(e2);
    torch::Tensor d2 = dec2_->forward(torch::cat({up2_->forward(e3), e2}, 1));
    torch::Tensor d1 = dec1_->forward(torch::cat({up1_->forward(d2), e1}, 1));
    torch::Tensor d0 = dec0_->forward(torch::cat({up0_->forward(d1), e0}, 1));
    return head_->forward(d0);
  }

 private:
  nn::Sequential enc0_{nullptr}, enc1_{nullptr}, enc2_{nullptr}, enc3_{nullptr};
  nn::Sequential dec2_{nullptr}, dec1_{nullptr}, dec0_{nullptr};
  nn::ConvTranspose2d up2_{nullptr}, up1_{nullptr}, up0_{nullptr};
  nn::Conv2d head_{nullptr};
};
TORCH_MODULE_IMPL(UnetBackbone, UnetBackboneImpl);

class SqueezeExciteImpl : public torch::nn::Module {
 public:
  SqueezeExciteImpl(int channels, int squeezed) {
    reduce_ = register_module("reduce",
                              nn::Conv2d(nn::Conv2dOptions(channels, squeezed, 1)));
    expand_ = register_module("expand",
                              nn::Conv2d(nn::Conv2dOptions(squeezed, channels, 1)));
  }
  torch::Tensor forward(const torch::Tensor& x) {
    torch::Tensor s = F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(1));
    s = torch::silu(reduce_->forward(s));
    s = torch::sigmoid(expand_->forward(s));
    return x * s;
  }

 private:
  nn::Conv2d reduce_{nullptr}, expand_{nullptr};
};
TORCH_MODULE_IMPL(SqueezeExcite, SqueezeExciteImpl);

class MBConvImpl : public torch::nn::Module {
 public:
  MBConvImpl(int in, int out, int expand, int kernel, int stride)
      : skip_(stride == 1 && in == out) {
    int mid = in * expand;
    if (expand != 1) {
      expand_ = register_module(
          "expand", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, mid, 1).bias(false)),
                                   nn::BatchNorm2d(mid), nn::SiLU()));
    }
    depthwise_ = register_module(
        "depthwise",
        nn::Sequential(nn::Conv2d(nn::Conv2dOptions(mid, mid, kernel)
                                      .stride(stride)
                                      .padding(kernel / 2)
                                      .groups(mid)
                                      .bias(false)),
                       nn::BatchNorm2d(mid), nn::SiLU()));
    se_ = register_module("se", SqueezeExcite(mid, std::max(1, in / 4)));
    project_ = register_module(
        "project", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(mid, out, 1).bias(false)),
                                  nn::BatchNorm2d(out)));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    torch::Tensor y = expand_ ? expand_->forward(x) : x;
    y = depthwise_->forward(y);
    y = se_->forward(y);
    y = project_->forward(y);
    return skip_ ? x + y : y;
  }

 private:
  bool skip_;
  nn::Sequential expand_{nullptr}, depthwise_{nullptr}, project_{nullptr};
  SqueezeExcite se_{nullptr};
};
TORCH_MODULE_IMPL(MBConv, MBConvImpl);

// EfficientNet-B2 stage table: expand, channels, repeats, stride, kernel.
struct EffnetStage {
  int expand, channels, repeats, stride, kernel;
};
constexpr EffnetStage kEffnetB2Stages[] = {
    {1, 16, 2, 1, 3},  {6, 24, 3, 2, 3},  {6, 48, 3, 2, 5}, {6, 88, 4, 2, 3},
    {6, 120, 4, 1, 5}, {6, 208, 5, 2, 5}, {6, 352, 2, 1, 3},
};

class EffnetB2BackboneImpl : public torch::nn::Module {
 public:
  explicit EffnetB2BackboneImpl(int num_classes) {
    stem_ = register_module(
        "stem", nn::Sequential(
                    nn::Conv2d(nn::Conv2dOptions(1, 32, 3).stride(2).padding(1).bias(false)),
                    nn::BatchNorm2d(32), nn::SiLU()));
    blocks_ = register_module("blocks", nn::ModuleList());
    int ch = 32;
    for (const auto& st : kEffnetB2Stages) {
      for (int r = 0; r < st.repeats; ++r) {
        int stride = r == 0 ? st.stride : 1;
        blocks_->push_back(MBConv(ch, st.channels, st.expand, st.kernel, stride));
        ch = st.channels;
      }
      stage_ends_.push_back(int(blocks_->size()) - 1);
    }
    // skips: stem (32 @ /2), stage2 (24 @ /4), stage3 (48 @ /8),
    // stage5 (120 @ /16), bottleneck stage7 (352 @ /32)
    up4_ = register_module("up4", up(352, 120));
    dec4_ = register_module("dec4", cbr(240, 120));
    up3_ = register_module("up3", up(120, 48));
    dec3_ = register_module("dec3", cbr(96, 48));
    up2_ = register_module("up2", up(48, 24));
    dec2_ = register_module("dec2", cbr(48, 24));
    up1_ = register_module("up1", up(24, 32));
    dec1_ = register_module("dec1", cbr(64, 32));
    up0_ = register_module("up0", up(32, 16));
    dec0_ = register_module("dec0", cbr(16, 16));
    head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(16, num_classes, 1)));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    torch::Tensor y = stem_->forward(x);
    torch::Tensor skip_stem = y;
    std::vector<torch::Tensor> stage_out;
    int stage = 0;
    for (std::size_t i = 0; i < blocks_->size(); ++i) {
      y = blocks_[i]->as<MBConvImpl>()->forward(y);
      if (stage < int(stage_ends_.size()) && int(i) == stage_ends_[stage]) {
        stage_out.push_back(y);
        ++stage;
      }
    }
    torch::Tensor d = dec4_->forward(torch::cat({up4_->forward(stage_out[6]), stage_out[4]}, 1));
    d = dec3_->forward(torch::cat({up3_->forward(d), stage_out[2]}, 1));
    d = dec2_->forward(torch::cat({up2_->forward(d), stage_out[1]}, 1));
    d = dec1_->forward(torch::cat({up1_->forward(d), skip_stem}, 1));
    d = dec0_->forward(up0_->forward(d));
    return head_->forward(d);
  }

 private:
  static nn::ConvTranspose2d up(int in, int out) {
    return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 2).stride(2));
  }
  nn::Sequential stem_{nullptr};
  nn::ModuleList blocks_{nullptr};
  std::vector<int> stage_ends_;
  nn::ConvTranspose2d up4_{nullptr}, up3_{nullptr}, up2_{nullptr}, up1_{nullptr}, up0_{nullptr};
  nn::Sequential dec4_{nullptr}, dec3_{nullptr}, dec2_{nullptr}, dec1_{nullptr}, dec0_{nullptr};
  nn::Conv2d head_{nullptr};
};
TORCH_MODULE_IMPL(EffnetB2Backbone, EffnetB2BackboneImpl);

}  // namespace

SegmenterImpl::SegmenterImpl(const std::string& backbone, int width, int num_classes)
    : backbone_(backbone) {
  if (backbone == "unet_small") {
    auto net = UnetBackbone(width, num_classes);
    forward_ = [net](const torch::Tensor& x) mutable { return net->forward(x); };
    register_module("net", net.ptr());
    spatial_multiple_ = 8;
  } else if (backbone == "efficientnet_b2") {
    auto net = EffnetB2Backbone(num_classes);
    forward_ = [net](const torch::Tensor& x) mutable { return net->forward(x); };
    register_module("net", net.ptr());
    spatial_multiple_ = 32;
  } else {
    throw ConfigError("unknown segmenter backbone '" + backbone + "'");
  }
}

torch::Tensor SegmenterImpl::forward(const torch::Tensor& images) {
  if (images.dim() != 4) throw ShapeError("segmenter expects [B,1,H,W]");
  const int m = spatial_multiple_;
  const int h = int(images.size(2));
  const int w = int(images.size(3));
  const int need_h = (m - h % m) % m;
  const int need_w = (m - w % m) % m;
  torch::Tensor x = images;
  if (need_h > 0 || need_w > 0) x = replicate_pad(x, need_h, need_w);
  torch::Tensor logits = forward_(x);
  if (need_h > 0 || need_w > 0) {
    int pt = need_h / 2, pl = need_w / 2;
    logits = logits.slice(2, pt, pt + h).slice(3, pl, pl + w);
  }
  return logits;
}

// ---------------------------------------------------------------------------
// corpus translation

DatasetManifest translate_corpus(const fs::path& checkpoint, const DatasetManifest& manifest,
                                 const fs::path& out_dir) {
  auto entries = manifest.select(Domain::kSource);
  if (entries.empty()) throw DataError("translate_corpus: manifest has no source images");

  std::string missing;
  for (const auto& e : entries) {
    if (!fs::exists(manifest.image_path(e))) missing += "\n  " + manifest.image_path(e).string();
    if (!fs::exists(manifest.mask_path(e))) missing += "\n  " + manifest.mask_path(e).string();
  }
  if (!missing.empty()) throw DataError("translate_corpus: missing files:" + missing);

  Trainer trainer = Trainer::from_checkpoint(checkpoint);
  AccutGenerator generator = trainer.generator();
  generator->eval();
  torch::NoGradGuard no_grad;

  DatasetManifest out;
  out.seed = manifest.seed;
  out.config_hash = manifest.config_hash;
  out.root = out_dir;
  for (const auto& e : entries) {
    torch::Tensor image = load_image(manifest.image_path(e)).unsqueeze(0);
    torch::Tensor fake = generator->translate(image).first.squeeze(0);
    fs::create_directories((out_dir / e.path).parent_path());
    fs::create_directories((out_dir / e.mask_path).parent_path());
    save_image(out_dir / e.path, fake);
    fs::copy_file(manifest.mask_path(e), out_dir / e.mask_path,
                  fs::copy_options::overwrite_existing);
    out.entries.push_back(e);
  }
  write_manifest(out, out_dir / "manifest.json");
  return out;
}

// ---------------------------------------------------------------------------
// k-fold cross-validation

namespace {

struct ParamSnapshot {
  std::vector<torch::Tensor> params;
  std::vector<torch::Tensor> buffers;

  static ParamSnapshot take(torch::nn::Module& m) {
    ParamSnapshot s;
    for (const auto& p : m.parameters()) s.params.push_back(p.detach().clone());
    for (const auto& b : m.buffers()) s.buffers.push_back(b.detach().clone());
    return s;
  }
  void restore(torch::nn::Module& m) const {
    torch::NoGradGuard no_grad;
    auto ps = m.parameters();
    auto bs = m.buffers();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i].copy_(params[i]);
    for (std::size_t i = 0; i < bs.size(); ++i) bs[i].copy_(buffers[i]);
  }
};

double sample_std(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / double(xs.size() - 1));
}

}  // namespace

UdaSummary kfold_train(const UdaConfig& config, const DatasetManifest& train_manifest,
                       const DatasetManifest& target_test_manifest,
                       const fs::path& out_dir, FileAuditLog* audit) {
  config.validate();
  FileAuditLog local_audit;
  if (!audit) audit = &local_audit;

  auto train_entries = train_manifest.select(Domain::kSource);
  if (train_entries.empty()) train_entries = train_manifest.entries;
  if (train_entries.empty()) throw DataError("uda: training manifest is empty");
  auto test_entries = target_test_manifest.select(Domain::kTarget, "test");
  if (test_entries.empty()) test_entries = target_test_manifest.select(Domain::kTarget);
  if (test_entries.empty()) throw DataError("uda: target test manifest has no target images");

  // Subject-disjoint folds.
  std::set<int> subject_set;
  for (const auto& e : train_entries) subject_set.insert(e.subject_id);
  std::vector<int> subjects(subject_set.begin(), subject_set.end());
  if (int(subjects.size()) < config.folds) {
    throw ConfigError("uda: fewer subjects (" + std::to_string(subjects.size()) +
                      ") than folds (" + std::to_string(config.folds) + ")");
  }
  std::mt19937_64 fold_eng(mix_seed(config.seed, 0xF01D));
  std::shuffle(subjects.begin(), subjects.end(), fold_eng);
  std::vector<std::vector<int>> fold_subjects(config.folds);
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    fold_subjects[i % config.folds].push_back(subjects[i]);
  }

  // Target-test mask paths, for the protocol assertion below.
  std::unordered_set<std::string> test_mask_paths;
  for (const auto& e : test_entries) {
    test_mask_paths.insert(target_test_manifest.mask_path(e).string());
  }

  fs::create_directories(out_dir);
  AugmentConfig aug = config.augment_config;
  aug.crop_size = config.crop_size;

  UdaSummary summary;

  for (int fold = 0; fold < config.folds; ++fold) {
    std::unordered_set<int> held_out(fold_subjects[fold].begin(), fold_subjects[fold].end());

    audit->set_phase("uda_train");
    std::vector<Sample> train_samples, val_samples;
    for (const auto& e : train_entries) {
      if (held_out.count(e.subject_id)) continue;
      train_samples.push_back(load_sample(train_manifest, e, audit));
    }
    audit->set_phase("uda_select");
    for (const auto& e : train_entries) {
      if (!held_out.count(e.subject_id)) continue;
      val_samples.push_back(load_sample(train_manifest, e, audit));
    }
    if (train_samples.empty() || val_samples.empty()) {
      throw DataError("uda: a fold ended up without train or val samples");
    }

    torch::manual_seed(mix_seed(config.seed, 0xBACF + std::uint64_t(fold)));
    Segmenter model(config.backbone, config.backbone_width);
    torch::optim::Adam optim(model->parameters(),
                             torch::optim::AdamOptions(config.learning_rate));

    Batch val_batch = stack_batch(val_samples, true);

    FoldResult result;
    result.fold_id = fold;
    double best_val = std::numeric_limits<double>::infinity();
    ParamSnapshot best_state = ParamSnapshot::take(*model);

    std::mt19937_64 aug_eng(mix_seed(config.seed, 0xA06 + std::uint64_t(fold)));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      model->train();
      std::vector<int> order(train_samples.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
      std::mt19937_64 shuffle_eng(
          mix_seed(config.seed, 0x5FF + std::uint64_t(fold * 1000 + epoch)));
      std::shuffle(order.begin(), order.end(), shuffle_eng);

      for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
        std::vector<torch::Tensor> images, masks;
        for (std::size_t i = begin; i < std::min(order.size(), begin + config.batch_size);
             ++i) {
          const Sample& s = train_samples[order[i]];
          if (config.augment_enabled) {
            auto [ai, am] = augment(s.image, s.mask, aug, aug_eng);
            images.push_back(ai);
            masks.push_back(am);
          } else {
            images.push_back(s.image);
            masks.push_back(s.mask);
          }
        }
        torch::Tensor x = torch::stack(images);
        torch::Tensor y = torch::stack(masks);
        torch::Tensor loss = segmentation_ce(model->forward(x), y);
        optim.zero_grad();
        loss.backward();
        optim.step();
      }

      // Model selection on the held-out source fold.
      model->eval();
      double val_loss;
      {
        torch::NoGradGuard no_grad;
        val_loss =
            segmentation_ce(model->forward(val_batch.images), val_batch.masks).item<double>();
      }
      result.val_loss_curve.push_back(val_loss);
      if (val_loss < best_val) {
        best_val = val_loss;
        result.selected_epoch = epoch;
        best_state = ParamSnapshot::take(*model);
      }
    }
    best_state.restore(*model);

    // Protocol gate: nothing loaded so far may be a target-domain mask.
    for (const auto& entry : audit->entries()) {
      if (entry.phase != "uda_eval" && test_mask_paths.count(entry.path)) {
        throw std::logic_error("UDA protocol violation: target mask " + entry.path +
                               " was read during phase " + entry.phase);
      }
    }

    audit->set_phase("uda_eval");
    model->eval();
    std::vector<torch::Tensor> preds, gts;
    std::vector<int> ids;
    {
      torch::NoGradGuard no_grad;
      for (const auto& e : test_entries) {
        Sample s = load_sample(target_test_manifest, e, audit);
        torch::Tensor logits = model->forward(s.image.unsqueeze(0));
        preds.push_back(logits.argmax(1).squeeze(0));
        gts.push_back(s.mask);
        ids.push_back(s.subject_id);
      }
    }
    result.target_dice = dice_report(preds, gts, ids);
    summary.folds.push_back(std::move(result));
  }

  // Aggregate over folds.
  std::vector<double> mdices;
  summary.per_class_mean.assign(kNumClasses, 0.0);
  for (const auto& f : summary.folds) {
    mdices.push_back(f.target_dice.mean);
    for (int c = 0; c < kNumClasses; ++c) summary.per_class_mean[c] += f.target_dice.per_class[c];
  }
  for (int c = 0; c < kNumClasses; ++c) summary.per_class_mean[c] /= double(config.folds);
  summary.mean_mdice = 0.0;
  for (double v : mdices) summary.mean_mdice += v;
  summary.mean_mdice /= double(mdices.size());
  summary.std_mdice = sample_std(mdices, summary.mean_mdice);

  // Table-1 shaped CSV (percent) and per-fold JSON.
  summary.csv_file = out_dir / "summary.csv";
  {
    std::ofstream csv(summary.csv_file);
    csv << "vitreous,choroid,retina,srf,ped,mdice,mdice_std\n";
    char line[256];
    std::snprintf(line, sizeof(line), "%.2f,%.2f,%.2f,%.2f,%.2f,%.2f,%.2f\n",
                  100.0 * summary.per_class_mean[int(SegClass::kVitreous)],
                  100.0 * summary.per_class_mean[int(SegClass::kChoroid)],
                  100.0 * summary.per_class_mean[int(SegClass::kRetina)],
                  100.0 * summary.per_class_mean[int(SegClass::kSrf)],
                  100.0 * summary.per_class_mean[int(SegClass::kPed)],
                  100.0 * summary.mean_mdice, 100.0 * summary.std_mdice);
    csv << line;
  }
  summary.folds_file = out_dir / "folds.json";
  {
    json folds = json::array();
    for (const auto& f : summary.folds) {
      json subjects_json = json::array();
      for (const auto& s : f.target_dice.per_subject) {
        subjects_json.push_back({{"subject_id", s.subject_id},
                                 {"per_class", s.scores.per_class},
                                 {"mean", s.scores.mean}});
      }
      folds.push_back({{"fold_id", f.fold_id},
                       {"selected_epoch", f.selected_epoch},
                       {"val_loss_curve", f.val_loss_curve},
                       {"per_class", f.target_dice.per_class},
                       {"mdice", f.target_dice.mean},
                       {"per_subject", subjects_json}});
    }
    std::ofstream out(summary.folds_file);
    out << json{{"folds", folds},
                {"mean_mdice", summary.mean_mdice},
                {"std_mdice", summary.std_mdice},
                {"per_class_mean", summary.per_class_mean}}
               .dump(2)
        << "\n";
  }
  return summary;
}

}  // namespace accut
