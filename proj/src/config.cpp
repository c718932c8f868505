#include "accut/config.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <vector>

#include "accut/ablation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace accut {

PhantomParams DataConfig::source_params() const {
  PhantomParams p = PhantomParams::source_defaults(seed);
  p.image_height = height;
  p.image_width = width;
  p.ped_probability = ped_probability;
  p.srf_probability = srf_probability;
  p.retina_thickness_range = {retina_min, retina_max};
  p.boundary_smoothness = boundary_smoothness;
  return p;
}

PhantomParams DataConfig::target_params() const {
  PhantomParams p = source_params();
  p.domain_style = DomainStyle::kTargetNoisy;
  p.speckle_strength = speckle_strength;
  p.gamma = target_gamma;
  return p;
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.rehash();
  return c;
}

json ExperimentConfig::resolved() const {
  json j;
  j["data"] = {{"subjects", data.subjects},
               {"height", data.height},
               {"width", data.width},
               {"seed", data.seed},
               {"split", data.split},
               {"ped_probability", data.ped_probability},
               {"srf_probability", data.srf_probability},
               {"speckle_strength", data.speckle_strength},
               {"target_gamma", data.target_gamma},
               {"retina_min", data.retina_min},
               {"retina_max", data.retina_max},
               {"boundary_smoothness", data.boundary_smoothness}};
  j["model"] = {{"base_width", model.base_width},
                {"disc_width", model.disc_width},
                {"disc_layers", model.disc_layers},
                {"embed_dim", model.embed_dim},
                {"num_patches", model.num_patches}};
  j["loss"] = {{"mode", mode_name(loss.mode)}, {"nce_tau", loss.nce_tau}};
  if (loss.weights_override) {
    j["loss"]["weights_override"] = {{"lambda_Xs", loss.weights_override->lambda_Xs},
                                     {"lambda_Xt", loss.weights_override->lambda_Xt},
                                     {"lambda_s", loss.weights_override->lambda_s},
                                     {"lambda_t", loss.weights_override->lambda_t}};
  }
  j["train"] = {{"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"learning_rate", train.learning_rate},
                {"beta1", train.betas.first},
                {"beta2", train.betas.second},
                {"seed", train.seed},
                {"checkpoint_interval", train.checkpoint_interval},
                {"joint_encoder_update", train.joint_encoder_update}};
  j["eval"] = {
      {"fid",
       {{"extractor",
         eval.fid_extractor.type == ExtractorSpec::Type::kRandomConv ? "random_conv"
                                                                     : "torchscript"},
        {"dim", eval.fid_extractor.dim},
        {"seed", eval.fid_extractor.seed},
        {"path", eval.fid_extractor.path},
        {"resize", eval.fid_extractor.resize},
        {"channels", eval.fid_extractor.channels}}},
      {"uda",
       {{"folds", eval.uda.folds},
        {"epochs", eval.uda.epochs},
        {"crop_height", eval.uda.crop_size.first},
        {"crop_width", eval.uda.crop_size.second},
        {"backbone", eval.uda.backbone},
        {"backbone_width", eval.uda.backbone_width},
        {"augment", eval.uda.augment_enabled},
        {"learning_rate", eval.uda.learning_rate},
        {"batch_size", eval.uda.batch_size},
        {"seed", eval.uda.seed}}}};
  return j;
}

void ExperimentConfig::rehash() { hash = hex64(fnv1a64(resolved().dump())); }

json parse_strict_json(const std::string& text) {
  std::vector<std::set<std::string>> object_keys;
  json::parser_callback_t cb = [&](int /*depth*/, json::parse_event_t event,
                                   json& parsed) {
    if (event == json::parse_event_t::object_start) {
      object_keys.emplace_back();
    } else if (event == json::parse_event_t::object_end) {
      object_keys.pop_back();
    } else if (event == json::parse_event_t::key) {
      const std::string key = parsed.get<std::string>();
      if (!object_keys.back().insert(key).second) {
        throw ConfigError("duplicate config key: " + key);
      }
    }
    return true;
  };
  try {
    return json::parse(text, cb);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

namespace {

// Tracks which keys were consumed so leftovers can be reported with their
// full path.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  T get(const char* key, T fallback) {
    consumed_.insert(key);
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  json child(const char* key) {
    consumed_.insert(key);
    return j_.contains(key) ? j_.at(key) : json::object();
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!consumed_.count(item.key())) {
        throw ConfigError("unknown config key: " + path_ + "." + item.key());
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> consumed_;
};

}  // namespace

ExperimentConfig parse_config_json(const json& root) {
  ExperimentConfig c;
  Section top(root, "config");

  {
    json dj = top.child("data");
    Section s(dj, "data");
    c.data.subjects = s.get("subjects", c.data.subjects);
    c.data.height = s.get("height", c.data.height);
    c.data.width = s.get("width", c.data.width);
    c.data.seed = s.get("seed", c.data.seed);
    c.data.split = s.get("split", c.data.split);
    c.data.ped_probability = s.get("ped_probability", c.data.ped_probability);
    c.data.srf_probability = s.get("srf_probability", c.data.srf_probability);
    c.data.speckle_strength = s.get("speckle_strength", c.data.speckle_strength);
    c.data.target_gamma = s.get("target_gamma", c.data.target_gamma);
    c.data.retina_min = s.get("retina_min", c.data.retina_min);
    c.data.retina_max = s.get("retina_max", c.data.retina_max);
    c.data.boundary_smoothness = s.get("boundary_smoothness", c.data.boundary_smoothness);
    s.finish();
  }
  {
    json mj = top.child("model");
    Section s(mj, "model");
    c.model.base_width = s.get("base_width", c.model.base_width);
    c.model.disc_width = s.get("disc_width", c.model.disc_width);
    c.model.disc_layers = s.get("disc_layers", c.model.disc_layers);
    c.model.embed_dim = s.get("embed_dim", c.model.embed_dim);
    c.model.num_patches = s.get("num_patches", c.model.num_patches);
    s.finish();
  }
  {
    json lj = top.child("loss");
    Section s(lj, "loss");
    c.loss.mode = mode_from_string(s.get<std::string>("mode", "cut"));
    c.loss.nce_tau = s.get("nce_tau", c.loss.nce_tau);
    if (s.has("weights_override")) {
      json wj = s.child("weights_override");
      Section w(wj, "loss.weights_override");
      LossWeights lw;
      lw.lambda_Xs = w.get("lambda_Xs", 1.0);
      lw.lambda_Xt = w.get("lambda_Xt", 1.0);
      lw.lambda_s = w.get("lambda_s", 0.0);
      lw.lambda_t = w.get("lambda_t", 0.0);
      if (lw.lambda_Xs < 0 || lw.lambda_Xt < 0 || lw.lambda_s < 0 || lw.lambda_t < 0) {
        throw ConfigError("loss.weights_override: weights must be >= 0");
      }
      w.finish();
      c.loss.weights_override = lw;
    } else {
      s.child("weights_override");
    }
    s.finish();
  }
  {
    json tj = top.child("train");
    Section s(tj, "train");
    c.train.epochs = s.get("epochs", c.train.epochs);
    c.train.batch_size = s.get("batch_size", c.train.batch_size);
    c.train.learning_rate = s.get("learning_rate", c.train.learning_rate);
    c.train.betas.first = s.get("beta1", c.train.betas.first);
    c.train.betas.second = s.get("beta2", c.train.betas.second);
    c.train.seed = s.get("seed", c.train.seed);
    c.train.checkpoint_interval = s.get("checkpoint_interval", c.train.checkpoint_interval);
    c.train.joint_encoder_update = s.get("joint_encoder_update", c.train.joint_encoder_update);
    s.finish();
  }
  {
    json ej = top.child("eval");
    Section s(ej, "eval");
    {
      json fj = s.child("fid");
      Section f(fj, "eval.fid");
      std::string kind = f.get<std::string>("extractor", "random_conv");
      if (kind == "random_conv") {
        c.eval.fid_extractor.type = ExtractorSpec::Type::kRandomConv;
      } else if (kind == "torchscript") {
        c.eval.fid_extractor.type = ExtractorSpec::Type::kTorchScript;
      } else {
        throw ConfigError("eval.fid.extractor: unknown extractor '" + kind + "'");
      }
      c.eval.fid_extractor.dim = f.get("dim", c.eval.fid_extractor.dim);
      c.eval.fid_extractor.seed = f.get("seed", c.eval.fid_extractor.seed);
      c.eval.fid_extractor.path = f.get<std::string>("path", "");
      c.eval.fid_extractor.resize = f.get("resize", 0);
      c.eval.fid_extractor.channels = f.get("channels", 1);
      f.finish();
    }
    {
      json uj = s.child("uda");
      Section u(uj, "eval.uda");
      c.eval.uda.folds = u.get("folds", c.eval.uda.folds);
      c.eval.uda.epochs = u.get("epochs", c.eval.uda.epochs);
      c.eval.uda.crop_size.first = u.get("crop_height", c.eval.uda.crop_size.first);
      c.eval.uda.crop_size.second = u.get("crop_width", c.eval.uda.crop_size.second);
      c.eval.uda.backbone = u.get<std::string>("backbone", c.eval.uda.backbone);
      c.eval.uda.backbone_width = u.get("backbone_width", c.eval.uda.backbone_width);
      c.eval.uda.augment_enabled = u.get("augment", c.eval.uda.augment_enabled);
      c.eval.uda.learning_rate = u.get("learning_rate", c.eval.uda.learning_rate);
      c.eval.uda.batch_size = u.get("batch_size", c.eval.uda.batch_size);
      c.eval.uda.seed = u.get("seed", c.eval.uda.seed);
      u.finish();
    }
    s.finish();
  }
  top.finish();

  // Cross-section consistency.
  double ratio_sum = c.data.split[0] + c.data.split[1] + c.data.split[2];
  if (std::abs(ratio_sum - 1.0) > 1e-9) {
    throw ConfigError("data.split: ratios must sum to 1");
  }
  c.eval.uda.augment_config.crop_size = c.eval.uda.crop_size;
  c.rehash();
  return c;
}

ExperimentConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_json(parse_strict_json(text));
}

TrainConfig make_train_config(const ExperimentConfig& c) {
  TrainConfig t = c.train;
  t.mode = c.loss.mode;
  t.nce_tau = c.loss.nce_tau;
  t.weights_override = c.loss.weights_override;
  t.image_height = c.data.height;
  t.image_width = c.data.width;
  t.base_width = c.model.base_width;
  t.disc_width = c.model.disc_width;
  t.disc_layers = c.model.disc_layers;
  t.num_patches = c.model.num_patches;
  t.embed_dim = c.model.embed_dim;
  return t;
}

fs::path resolve_out_dir(const fs::path& out) {
  const char* root = std::getenv("ACCUT_OUT_ROOT");
  if (root && *root && out.is_relative()) return fs::path(root) / out;
  return out;
}

void write_resolved_config(const ExperimentConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  json j = config.resolved();
  j["config_hash"] = config.hash;
  std::ofstream out(dir / "resolved_config.json");
  if (!out) throw DataError("cannot write resolved config into " + dir.string());
  out << j.dump(2) << "\n";
}

namespace {

fs::path find_manifest(const fs::path& data) {
  if (fs::is_directory(data)) return data / "manifest.json";
  return data;
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no png files in " + dir.string());
  return files;
}

torch::Tensor load_image_stack(const std::vector<fs::path>& files) {
  std::vector<torch::Tensor> images;
  for (const auto& f : files) images.push_back(load_image(f));
  return torch::stack(images);
}

void cmd_gen_data(const ExperimentConfig& config, const PipelineArgs& args) {
  if (args.out_dir.empty()) throw ConfigError("gen-data requires --out");
  fs::path out = resolve_out_dir(args.out_dir);
  make_manifest(config.data.subjects, config.data.source_params(),
                config.data.target_params(), config.data.split, out, args.overwrite,
                config.hash);
  write_resolved_config(config, out);
  std::cout << "wrote " << config.data.subjects << " subjects per domain to " << out
            << "\n";
}

void cmd_train(const ExperimentConfig& config, const PipelineArgs& args) {
  if (args.data.empty() || args.out_dir.empty()) {
    throw ConfigError("train requires --data and --out");
  }
  DatasetManifest manifest = load_manifest(find_manifest(args.data));
  fs::path out = resolve_out_dir(args.out_dir);
  fs::create_directories(out);
  write_resolved_config(config, out);
  FitResult result = fit(make_train_config(config), manifest, out, config.hash);
  std::cout << "final checkpoint: " << result.final_checkpoint << "\n"
            << "total loss: " << result.last_losses.total << "\n";
}

void cmd_translate(const ExperimentConfig& config, const PipelineArgs& args) {
  if (args.checkpoint.empty() || args.data.empty() || args.out_dir.empty()) {
    throw ConfigError("translate requires --ckpt, --data and --out");
  }
  DatasetManifest manifest = load_manifest(find_manifest(args.data));
  fs::path out = resolve_out_dir(args.out_dir);
  CheckpointMeta meta = read_checkpoint_meta(args.checkpoint);
  std::string warning = check_checkpoint_mode(meta, config.loss.mode);
  if (!warning.empty()) std::cerr << "[warn] " << warning << "\n";
  translate_corpus(args.checkpoint, manifest, out);
  write_resolved_config(config, out);
  std::cout << "translated " << manifest.select(Domain::kSource).size() << " images to "
            << out << "\n";
}

void cmd_eval_fid(const ExperimentConfig& config, const PipelineArgs& args) {
  if (args.real_dir.empty() || args.fake_dir.empty()) {
    throw ConfigError("eval-fid requires --real and --fake");
  }
  FeatureExtractor extractor(config.eval.fid_extractor);
  torch::Tensor real = extractor.extract(load_image_stack(list_pngs(args.real_dir)));
  torch::Tensor fake = extractor.extract(load_image_stack(list_pngs(args.fake_dir)));
  FidInputs inputs{real, fake};
  double value = fid(inputs);
  json report{{"fid", value},
              {"n_real", real.size(0)},
              {"n_fake", fake.size(0)},
              {"feature_dim", real.size(1)},
              {"extractor", extractor.descriptor()},
              {"config_hash", config.hash}};
  std::cout << report.dump(2) << "\n";
  if (!args.out_dir.empty()) {
    fs::path out = resolve_out_dir(args.out_dir);
    fs::create_directories(out);
    std::ofstream f(out / "fid.json");
    f << report.dump(2) << "\n";
    write_resolved_config(config, out);
  }
}

void cmd_eval_dice(const ExperimentConfig& config, const PipelineArgs& args) {
  if (args.pred_dir.empty() || args.gt_dir.empty()) {
    throw ConfigError("eval-dice requires --pred and --gt");
  }
  auto pred_files = list_pngs(args.pred_dir);
  std::vector<torch::Tensor> preds, gts;
  std::vector<int> ids;
  for (const auto& pf : pred_files) {
    fs::path gf = args.gt_dir / pf.filename();
    if (!fs::exists(gf)) throw DataError("missing ground-truth mask " + gf.string());
    preds.push_back(load_mask(pf));
    gts.push_back(load_mask(gf));
    ids.push_back(int(ids.size()));
  }
  DiceReport report = dice_report(preds, gts, ids);
  json jr{{"per_class", report.per_class},
          {"mean", report.mean},
          {"n_pairs", preds.size()},
          {"config_hash", config.hash}};
  std::cout << jr.dump(2) << "\n";
  std::printf("%-10s", "class:");
  for (int c = 0; c < kNumClasses; ++c) std::printf(" %9s", seg_class_name(c));
  std::printf("\n%-10s", "dice:");
  for (int c = 0; c < kNumClasses; ++c) std::printf(" %9.4f", report.per_class[c]);
  std::printf("\nmean dice: %.4f\n", report.mean);
  if (!args.out_dir.empty()) {
    fs::path out = resolve_out_dir(args.out_dir);
    fs::create_directories(out);
    std::ofstream f(out / "dice.json");
    f << jr.dump(2) << "\n";
    write_resolved_config(config, out);
  }
}

void cmd_eval_uda(const ExperimentConfig& config, const PipelineArgs& args) {
  if (args.train_manifest.empty() || args.target_test.empty() || args.out_dir.empty()) {
    throw ConfigError("eval-uda requires --train-manifest, --target-test and --out");
  }
  DatasetManifest train = load_manifest(find_manifest(args.train_manifest));
  DatasetManifest test = load_manifest(find_manifest(args.target_test));
  fs::path out = resolve_out_dir(args.out_dir);
  UdaSummary summary = kfold_train(config.eval.uda, train, test, out);
  write_resolved_config(config, out);
  std::printf("mDice over %d folds: %.4f +/- %.4f\n", int(summary.folds.size()),
              summary.mean_mdice, summary.std_mdice);
  std::cout << "summary: " << summary.csv_file << "\n";
}

void cmd_ablate(const ExperimentConfig& config, const PipelineArgs& args) {
  if (args.checkpoint.empty() || args.pairs_file.empty() || args.out_dir.empty()) {
    throw ConfigError("ablate requires --ckpt, --pairs and --out");
  }
  std::ifstream in(args.pairs_file);
  if (!in) throw DataError("cannot open pairs manifest " + args.pairs_file.string());
  json pj;
  try {
    pj = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("invalid pairs manifest: " + std::string(e.what()));
  }
  std::vector<AblationPair> pairs;
  fs::path base = args.pairs_file.parent_path();
  for (const auto& p : pj.at("pairs")) {
    AblationPair pair;
    pair.style_image = base / p.at("style").get<std::string>();
    pair.mask_image = base / p.at("mask").get<std::string>();
    pairs.push_back(std::move(pair));
  }
  fs::path out = resolve_out_dir(args.out_dir);
  AblationOutputs outputs = run_ablation(args.checkpoint, pairs, out);
  write_resolved_config(config, out);
  std::cout << "ablation grid: " << outputs.grid_file << "\n";
}

}  // namespace

void run_pipeline(const std::string& subcommand, const ExperimentConfig& config,
                  const PipelineArgs& args) {
  if (subcommand == "gen-data") {
    cmd_gen_data(config, args);
  } else if (subcommand == "train") {
    cmd_train(config, args);
  } else if (subcommand == "translate") {
    cmd_translate(config, args);
  } else if (subcommand == "eval-fid") {
    cmd_eval_fid(config, args);
  } else if (subcommand == "eval-dice") {
    cmd_eval_dice(config, args);
  } else if (subcommand == "eval-uda") {
    cmd_eval_uda(config, args);
  } else if (subcommand == "ablate") {
    cmd_ablate(config, args);
  } else {
    throw ConfigError("unknown subcommand '" + subcommand +
                      "' (expected gen-data|train|translate|eval-fid|eval-dice|eval-uda|ablate)");
  }
}

int run_guarded(const std::string& subcommand, const ExperimentConfig& config,
                const PipelineArgs& args) {
  try {
    run_pipeline(subcommand, config, args);
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
}

}  // namespace accut
