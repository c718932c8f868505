#include "accut/trainer.hpp"

#include <ATen/Context.h>

#include <algorithm>
#include <random>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace accut {

namespace {

void set_requires_grad(torch::nn::Module& module, bool flag) {
  for (auto& p : module.parameters()) p.set_requires_grad(flag);
}

json config_to_json(const TrainConfig& c) {
  json j{{"mode", mode_name(c.mode)},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"beta1", c.betas.first},
         {"beta2", c.betas.second},
         {"seed", c.seed},
         {"checkpoint_interval", c.checkpoint_interval},
         {"image_height", c.image_height},
         {"image_width", c.image_width},
         {"base_width", c.base_width},
         {"disc_width", c.disc_width},
         {"disc_layers", c.disc_layers},
         {"num_patches", c.num_patches},
         {"embed_dim", c.embed_dim},
         {"nce_tau", c.nce_tau},
         {"joint_encoder_update", c.joint_encoder_update}};
  if (c.weights_override) {
    j["weights_override"] = {{"lambda_Xs", c.weights_override->lambda_Xs},
                             {"lambda_Xt", c.weights_override->lambda_Xt},
                             {"lambda_s", c.weights_override->lambda_s},
                             {"lambda_t", c.weights_override->lambda_t}};
  }
  return j;
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.mode = mode_from_string(j.at("mode").get<std::string>());
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.betas = {j.at("beta1").get<double>(), j.at("beta2").get<double>()};
  c.seed = j.at("seed").get<std::uint64_t>();
  c.checkpoint_interval = j.at("checkpoint_interval").get<int>();
  c.image_height = j.at("image_height").get<int>();
  c.image_width = j.at("image_width").get<int>();
  c.base_width = j.at("base_width").get<int>();
  c.disc_width = j.at("disc_width").get<int>();
  c.disc_layers = j.at("disc_layers").get<int>();
  c.num_patches = j.at("num_patches").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.nce_tau = j.at("nce_tau").get<double>();
  c.joint_encoder_update = j.at("joint_encoder_update").get<bool>();
  if (j.contains("weights_override")) {
    const auto& w = j.at("weights_override");
    c.weights_override = LossWeights{w.at("lambda_Xs").get<double>(),
                                     w.at("lambda_Xt").get<double>(),
                                     w.at("lambda_s").get<double>(),
                                     w.at("lambda_t").get<double>()};
  }
  return c;
}

torch::Tensor rng_state() { return at::detail::getDefaultCPUGenerator().get_state(); }

void set_rng_state(const torch::Tensor& state) {
  at::detail::getDefaultCPUGenerator().set_state(state);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (num_patches < 1) throw ConfigError("num_patches must be >= 1");
  if (image_height % 4 != 0 || image_width % 4 != 0) {
    throw ConfigError("image dimensions must be divisible by 4");
  }
}

Batch stack_batch(const std::vector<Sample>& samples, bool with_masks) {
  if (samples.empty()) throw DataError("cannot stack an empty batch");
  std::vector<torch::Tensor> images, masks;
  for (const auto& s : samples) {
    images.push_back(s.image);
    if (with_masks) {
      if (!s.mask.defined()) throw ConfigError("sample is missing a mask");
      masks.push_back(s.mask);
    }
  }
  Batch b;
  b.images = torch::stack(images);
  if (with_masks) b.masks = torch::stack(masks);
  return b;
}

MetricsLogger::MetricsLogger(const fs::path& file, const std::string& config_hash,
                             OperatingMode mode, std::uint64_t seed) {
  out_.open(file);
  if (!out_) throw DataError("cannot open metrics log " + file.string());
  out_ << json{{"config_hash", config_hash}, {"mode", mode_name(mode)}, {"seed", seed}}
              .dump()
       << "\n";
}

void MetricsLogger::log(int epoch, int step, const LossBreakdown& l, double loss_d) {
  if (!out_.is_open()) return;
  out_ << json{{"epoch", epoch},
               {"step", step},
               {"gan", l.gan},
               {"nce_source", l.nce_source},
               {"nce_target", l.nce_target},
               {"seg_source", l.seg_source},
               {"seg_target", l.seg_target},
               {"total", l.total},
               {"loss_d", loss_d}}
              .dump()
       << "\n";
  out_.flush();
}

Trainer::Trainer(const TrainConfig& config) : config_(config), weights_(config.weights()) {
  config_.validate();
  GeneratorConfig gc;
  gc.base_width = config_.base_width;
  DiscriminatorConfig dc;
  dc.base_width = config_.disc_width;
  dc.n_layers = config_.disc_layers;
  generator_ = AccutGenerator(gc);
  discriminator_ = PatchDiscriminator(dc);
  projector_ = PatchProjector(generator_->encoder->tap_channels(), config_.embed_dim);
  build_optimizers();
}

void Trainer::build_optimizers() {
  auto adam = [&](std::vector<torch::Tensor> params) {
    return std::make_unique<torch::optim::Adam>(
        std::move(params), torch::optim::AdamOptions(config_.learning_rate)
                               .betas({config_.betas.first, config_.betas.second}));
  };
  auto collect = [](std::initializer_list<torch::nn::Module*> modules) {
    std::vector<torch::Tensor> params;
    for (auto* m : modules) {
      for (auto& p : m->parameters()) params.push_back(p);
    }
    return params;
  };
  opt_d_ = adam(discriminator_->parameters());
  if (config_.joint_encoder_update) {
    opt_g_ = adam(collect({generator_->encoder.get(), generator_->style_decoder.get(),
                           projector_.get(), generator_->mask_decoder.get()}));
    opt_seg_.reset();
  } else {
    opt_g_ = adam(collect(
        {generator_->encoder.get(), generator_->style_decoder.get(), projector_.get()}));
    opt_seg_ = adam(collect({generator_->encoder.get(), generator_->mask_decoder.get()}));
  }
}

double Trainer::step_discriminator(const torch::Tensor& x_source,
                                   const torch::Tensor& x_target) {
  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    fake = generator_->translate(x_source).first;
  }
  torch::Tensor d_real = discriminator_->forward(x_target);
  torch::Tensor d_fake = discriminator_->forward(fake);
  GanLosses losses = gan_losses(d_real, d_fake);
  opt_d_->zero_grad();
  losses.loss_d.backward();
  opt_d_->step();
  last_loss_d_ = losses.loss_d.item<double>();
  return last_loss_d_;
}

Trainer::StyleLosses Trainer::step_generator(const torch::Tensor& x_source,
                                             const torch::Tensor& x_target) {
  set_requires_grad(*discriminator_, false);

  // Queries come from re-encoding the translated image, keys from the input,
  // sampled at the same spatial positions.
  auto nce_term = [&](const torch::Tensor& input, const torch::Tensor& translated) {
    FeaturePyramid taps_query = generator_->encode(translated).second;
    FeaturePyramid taps_key = generator_->encode(input).second;
    auto query = projector_->project(taps_query, config_.num_patches);
    auto key = projector_->project(taps_key, config_.num_patches, query.patch_ids);
    return patch_nce(query.embeddings, key.embeddings, config_.nce_tau);
  };

  torch::Tensor fake = generator_->translate(x_source).first;
  torch::Tensor gan_g = gan_generator_loss(discriminator_->forward(fake));

  torch::Tensor zero = torch::zeros({}, fake.options());
  torch::Tensor nce_s = zero, nce_t = zero;
  if (weights_.lambda_Xs > 0.0) {
    nce_s = nce_term(x_source, fake);
  }
  if (weights_.lambda_Xt > 0.0) {
    torch::Tensor idt = generator_->translate(x_target).first;
    nce_t = nce_term(x_target, idt);
  }

  torch::Tensor loss = gan_g + weights_.lambda_Xs * nce_s + weights_.lambda_Xt * nce_t;
  opt_g_->zero_grad();
  loss.backward();
  opt_g_->step();
  set_requires_grad(*discriminator_, true);

  return {gan_g.item<double>(), nce_s.item<double>(), nce_t.item<double>()};
}

Trainer::SegLosses Trainer::step_segmentation(const torch::Tensor& x_source,
                                              const torch::Tensor& y_source,
                                              const torch::Tensor& x_target,
                                              const torch::Tensor& y_target) {
  if (weights_.lambda_s == 0.0 && weights_.lambda_t == 0.0) return {};
  if (config_.joint_encoder_update) {
    throw ConfigError("joint_encoder_update folds segmentation into the style step");
  }
  auto seg_term = [&](const torch::Tensor& x, const torch::Tensor& y, const char* which) {
    if (!y.defined()) {
      throw ConfigError(std::string("mode ") + mode_name(config_.mode) + " requires " +
                        which + " masks");
    }
    torch::Tensor bottleneck = generator_->encode(x).first;
    torch::Tensor logits = generator_->decode_mask(bottleneck).first;
    return segmentation_ce(logits, y, generator_->config().num_classes);
  };

  torch::Tensor zero = torch::zeros({}, torch::kFloat32);
  torch::Tensor seg_s = zero, seg_t = zero;
  if (weights_.lambda_s > 0.0) seg_s = seg_term(x_source, y_source, "source");
  if (weights_.lambda_t > 0.0) seg_t = seg_term(x_target, y_target, "target");

  torch::Tensor loss = weights_.lambda_s * seg_s + weights_.lambda_t * seg_t;
  opt_seg_->zero_grad();
  loss.backward();
  opt_seg_->step();
  return {seg_s.item<double>(), seg_t.item<double>()};
}

LossBreakdown Trainer::train_step(const Batch& source, const Batch& target) {
  if (!source.images.defined() || !target.images.defined()) {
    throw DataError("train_step requires images for both domains");
  }
  if (source.images.sizes() != target.images.sizes()) {
    throw ShapeError("source and target batches must have identical shapes");
  }

  LossComponents components;
  step_discriminator(source.images, target.images);

  if (config_.joint_encoder_update) {
    // One backward over Eq.-style weighted sum; one optimizer step on the
    // shared encoder. The mask gradient of the style path stays severed.
    set_requires_grad(*discriminator_, false);
    torch::Tensor fake = generator_->translate(source.images).first;
    torch::Tensor gan_g = gan_generator_loss(discriminator_->forward(fake));
    torch::Tensor zero = torch::zeros({}, fake.options());
    torch::Tensor nce_s = zero, nce_t = zero, seg_s = zero, seg_t = zero;
    if (weights_.lambda_Xs > 0.0) {
      FeaturePyramid tq = generator_->encode(fake).second;
      FeaturePyramid tk = generator_->encode(source.images).second;
      auto q = projector_->project(tq, config_.num_patches);
      auto k = projector_->project(tk, config_.num_patches, q.patch_ids);
      nce_s = patch_nce(q.embeddings, k.embeddings, config_.nce_tau);
    }
    if (weights_.lambda_Xt > 0.0) {
      torch::Tensor idt = generator_->translate(target.images).first;
      FeaturePyramid tq = generator_->encode(idt).second;
      FeaturePyramid tk = generator_->encode(target.images).second;
      auto q = projector_->project(tq, config_.num_patches);
      auto k = projector_->project(tk, config_.num_patches, q.patch_ids);
      nce_t = patch_nce(q.embeddings, k.embeddings, config_.nce_tau);
    }
    auto seg_term = [&](const torch::Tensor& x, const torch::Tensor& y, const char* which) {
      if (!y.defined()) {
        throw ConfigError(std::string("mode ") + mode_name(config_.mode) + " requires " +
                          which + " masks");
      }
      torch::Tensor logits = generator_->decode_mask(generator_->encode(x).first).first;
      return segmentation_ce(logits, y, generator_->config().num_classes);
    };
    if (weights_.lambda_s > 0.0) seg_s = seg_term(source.images, source.masks, "source");
    if (weights_.lambda_t > 0.0) seg_t = seg_term(target.images, target.masks, "target");

    torch::Tensor loss = weighted_total(gan_g, nce_s, nce_t, seg_s, seg_t, weights_);
    opt_g_->zero_grad();
    loss.backward();
    opt_g_->step();
    set_requires_grad(*discriminator_, true);

    components = {gan_g.item<double>(), nce_s.item<double>(), nce_t.item<double>(),
                  seg_s.item<double>(), seg_t.item<double>()};
  } else {
    StyleLosses style = step_generator(source.images, target.images);
    SegLosses seg = step_segmentation(source.images, source.masks, target.images,
                                      target.masks);
    components = {style.gan, style.nce_source, style.nce_target, seg.seg_source,
                  seg.seg_target};
  }

  ++step;
  return total_loss(components, weights_);
}

void Trainer::save_checkpoint(const fs::path& path) const {
  torch::serialize::OutputArchive root;

  auto write_module = [&](const std::string& key, const torch::nn::Module& m) {
    torch::serialize::OutputArchive sub;
    m.save(sub);
    root.write(key, sub);
  };
  write_module("generator", *generator_);
  write_module("discriminator", *discriminator_);
  write_module("projector", *projector_);

  auto write_optim = [&](const std::string& key, const torch::optim::Adam& opt) {
    torch::serialize::OutputArchive sub;
    opt.save(sub);
    root.write(key, sub);
  };
  write_optim("opt_d", *opt_d_);
  write_optim("opt_g", *opt_g_);
  if (opt_seg_) write_optim("opt_seg", *opt_seg_);

  root.write("rng_state", rng_state());
  root.write("meta/mode", c10::IValue(std::string(mode_name(config_.mode))));
  root.write("meta/epoch", c10::IValue(std::int64_t(epoch)));
  root.write("meta/step", c10::IValue(std::int64_t(step)));
  root.write("meta/seed", c10::IValue(std::int64_t(config_.seed)));
  root.write("meta/config_hash", c10::IValue(config_hash_));
  root.write("meta/config_json", c10::IValue(config_to_json(config_).dump()));
  root.write("meta/format", c10::IValue(std::int64_t(1)));

  fs::path tmp = path;
  tmp += ".tmp";
  root.save_to(tmp.string());
  fs::rename(tmp, path);
}

namespace {

torch::serialize::InputArchive open_checkpoint(const fs::path& path) {
  torch::serialize::InputArchive root;
  try {
    root.load_from(path.string());
  } catch (const c10::Error& e) {
    throw DataError("checkpoint unreadable or corrupt: " + path.string());
  }
  return root;
}

std::string read_string(torch::serialize::InputArchive& a, const std::string& key) {
  c10::IValue v;
  if (!a.try_read(key, v)) throw DataError("checkpoint is missing key " + key);
  return v.toStringRef();
}

std::int64_t read_int(torch::serialize::InputArchive& a, const std::string& key) {
  c10::IValue v;
  if (!a.try_read(key, v)) throw DataError("checkpoint is missing key " + key);
  return v.toInt();
}

}  // namespace

CheckpointMeta read_checkpoint_meta(const fs::path& path) {
  auto root = open_checkpoint(path);
  CheckpointMeta meta;
  meta.mode = read_string(root, "meta/mode");
  meta.epoch = int(read_int(root, "meta/epoch"));
  meta.step = int(read_int(root, "meta/step"));
  meta.seed = std::uint64_t(read_int(root, "meta/seed"));
  meta.config_hash = read_string(root, "meta/config_hash");
  meta.config_json = read_string(root, "meta/config_json");
  return meta;
}

std::string check_checkpoint_mode(const CheckpointMeta& meta, OperatingMode expected) {
  if (meta.mode == mode_name(expected)) return {};
  return std::string("checkpoint was trained in mode '") + meta.mode +
         "' but mode '" + mode_name(expected) + "' was requested";
}

Trainer Trainer::from_checkpoint(const fs::path& path) {
  auto root = open_checkpoint(path);
  TrainConfig config;
  try {
    config = config_from_json(json::parse(read_string(root, "meta/config_json")));
  } catch (const json::exception& e) {
    throw DataError("checkpoint has invalid config metadata: " + std::string(e.what()));
  }

  Trainer trainer(config);
  trainer.epoch = int(read_int(root, "meta/epoch"));
  trainer.step = int(read_int(root, "meta/step"));
  trainer.config_hash_ = read_string(root, "meta/config_hash");

  auto read_module = [&](const std::string& key, torch::nn::Module& m) {
    torch::serialize::InputArchive sub;
    if (!root.try_read(key, sub)) throw DataError("checkpoint is missing " + key);
    m.load(sub);
  };
  read_module("generator", *trainer.generator_);
  read_module("discriminator", *trainer.discriminator_);
  read_module("projector", *trainer.projector_);

  auto read_optim = [&](const std::string& key, torch::optim::Adam& opt) {
    torch::serialize::InputArchive sub;
    if (!root.try_read(key, sub)) throw DataError("checkpoint is missing " + key);
    opt.load(sub);
  };
  read_optim("opt_d", *trainer.opt_d_);
  read_optim("opt_g", *trainer.opt_g_);
  if (trainer.opt_seg_) read_optim("opt_seg", *trainer.opt_seg_);

  torch::Tensor state;
  root.read("rng_state", state);
  set_rng_state(state);
  return trainer;
}

FitResult fit(const TrainConfig& config, const DatasetManifest& manifest,
              const fs::path& out_dir, const std::string& config_hash) {
  config.validate();
  torch::manual_seed(config.seed);

  Trainer trainer(config);
  trainer.set_config_hash(config_hash);
  LossWeights weights = config.weights();

  auto domain_entries = [&](Domain d) {
    auto entries = manifest.select(d, "train");
    if (entries.empty()) entries = manifest.select(d);
    if (entries.empty()) {
      throw DataError(std::string("manifest has no ") + domain_name(d) + " images");
    }
    return entries;
  };
  auto load_all = [&](const std::vector<ManifestEntry>& entries, bool with_masks) {
    std::vector<Sample> samples;
    samples.reserve(entries.size());
    for (const auto& e : entries) {
      samples.push_back(load_sample(manifest, e, nullptr, with_masks));
    }
    return samples;
  };

  auto src = load_all(domain_entries(Domain::kSource), weights.lambda_s > 0.0);
  auto tgt = load_all(domain_entries(Domain::kTarget), weights.lambda_t > 0.0);

  fs::create_directories(out_dir);
  MetricsLogger logger(out_dir / "metrics.jsonl", config_hash, config.mode, config.seed);

  FitResult result;
  const int n_src = int(src.size());
  const int n_tgt = int(tgt.size());
  const int batch = std::min(config.batch_size, n_src);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<int> src_order(n_src), tgt_order(n_tgt);
    for (int i = 0; i < n_src; ++i) src_order[i] = i;
    for (int i = 0; i < n_tgt; ++i) tgt_order[i] = i;
    std::mt19937_64 eng(mix_seed(config.seed, 0xE000 + std::uint64_t(epoch)));
    std::shuffle(src_order.begin(), src_order.end(), eng);
    std::shuffle(tgt_order.begin(), tgt_order.end(), eng);

    int tgt_cursor = 0;
    int step_in_epoch = 0;
    for (int begin = 0; begin < n_src; begin += batch, ++step_in_epoch) {
      int count = std::min(batch, n_src - begin);
      std::vector<Sample> sb, tb;
      for (int i = 0; i < count; ++i) {
        sb.push_back(src[src_order[begin + i]]);
        tb.push_back(tgt[tgt_order[tgt_cursor]]);
        tgt_cursor = (tgt_cursor + 1) % n_tgt;
      }
      Batch source = stack_batch(sb, weights.lambda_s > 0.0);
      Batch target = stack_batch(tb, weights.lambda_t > 0.0);
      result.last_losses = trainer.train_step(source, target);
      result.last_loss_d = trainer.last_loss_d();
      logger.log(epoch, step_in_epoch, result.last_losses, result.last_loss_d);
    }
    trainer.epoch = epoch + 1;

    if (config.checkpoint_interval > 0 && (epoch + 1) % config.checkpoint_interval == 0 &&
        epoch + 1 < config.epochs) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_epoch_%04d.pt", epoch + 1);
      trainer.save_checkpoint(out_dir / name);
    }
  }

  result.final_checkpoint = out_dir / "checkpoint_final.pt";
  trainer.save_checkpoint(result.final_checkpoint);
  result.metrics_log = out_dir / "metrics.jsonl";
  return result;
}

}  // namespace accut
