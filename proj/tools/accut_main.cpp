#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "accut/config.hpp"

using accut::ExperimentConfig;
using accut::PipelineArgs;

int main(int argc, char** argv) {
  CLI::App app{"accut: anatomically conditioned contrastive unpaired image translation"};
  app.require_subcommand(1);

  std::string config_file;
  app.add_option("--config", config_file, "experiment config (JSON)")->configurable(false);

  PipelineArgs args;
  std::string mode_override;

  auto* gen = app.add_subcommand("gen-data", "generate the two-domain phantom dataset");
  int subjects = -1;
  std::uint64_t seed = 0;
  bool seed_set = false, subjects_set = false;
  gen->add_option("--subjects", subjects, "subjects per domain")
      ->each([&](const std::string&) { subjects_set = true; });
  gen->add_option("--seed", seed, "dataset seed")
      ->each([&](const std::string&) { seed_set = true; });
  gen->add_option("--out", args.out_dir, "output directory")->required();
  gen->add_flag("--overwrite", args.overwrite, "replace an existing dataset");

  auto* train = app.add_subcommand("train", "train a translation model");
  train->add_option("--mode", mode_override, "cut|accut_s|accut_t|accut_st");
  train->add_option("--data", args.data, "dataset directory or manifest")->required();
  train->add_option("--out", args.out_dir, "output directory")->required();

  auto* translate = app.add_subcommand("translate", "translate the source corpus");
  translate->add_option("--ckpt", args.checkpoint, "trained checkpoint")->required();
  translate->add_option("--data", args.data, "dataset directory or manifest")->required();
  translate->add_option("--out", args.out_dir, "output directory")->required();

  auto* fid = app.add_subcommand("eval-fid", "Frechet distance between two image sets");
  fid->add_option("--real", args.real_dir, "directory of real images")->required();
  fid->add_option("--fake", args.fake_dir, "directory of generated images")->required();
  fid->add_option("--out", args.out_dir, "report directory");

  auto* dicecmd = app.add_subcommand("eval-dice", "per-class Dice between mask sets");
  dicecmd->add_option("--pred", args.pred_dir, "directory of predicted masks")->required();
  dicecmd->add_option("--gt", args.gt_dir, "directory of ground-truth masks")->required();
  dicecmd->add_option("--out", args.out_dir, "report directory");

  auto* uda = app.add_subcommand("eval-uda", "downstream UDA segmentation experiment");
  uda->add_option("--train-manifest", args.train_manifest, "training corpus manifest")
      ->required();
  uda->add_option("--target-test", args.target_test, "target-domain test manifest")
      ->required();
  uda->add_option("--out", args.out_dir, "output directory")->required();

  auto* ablate = app.add_subcommand("ablate", "mask-swap ablation study");
  ablate->add_option("--ckpt", args.checkpoint, "trained checkpoint")->required();
  ablate->add_option("--pairs", args.pairs_file, "pairs manifest (JSON)")->required();
  ablate->add_option("--out", args.out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : accut::kExitConfigError;
  }

  ExperimentConfig config;
  try {
    config = config_file.empty() ? accut::default_config()
                                 : accut::parse_config(config_file);
    if (!mode_override.empty()) {
      config.loss.mode = accut::mode_from_string(mode_override);
      config.rehash();
    }
    if (subjects_set) config.data.subjects = subjects;
    if (seed_set) config.data.seed = seed;
    if (subjects_set || seed_set) config.rehash();
  } catch (const accut::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return accut::kExitConfigError;
  }

  return accut::run_guarded(app.get_subcommands().front()->get_name(), config, args);
}
