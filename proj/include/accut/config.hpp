#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "accut/metrics.hpp"
#include "accut/phantom.hpp"
#include "accut/trainer.hpp"
#include "accut/uda.hpp"

namespace accut {

struct DataConfig {
  int subjects = 38;
  int height = 64;
  int width = 128;
  std::uint64_t seed = 1;
  std::array<double, 3> split{0.6, 0.2, 0.2};
  double ped_probability = 0.5;
  double srf_probability = 0.5;
  double speckle_strength = 0.35;  // target domain
  double target_gamma = 0.75;
  int retina_min = 10;
  int retina_max = 18;
  double boundary_smoothness = 0.9;

  PhantomParams source_params() const;
  PhantomParams target_params() const;
};

struct ModelConfig {
  int base_width = 8;
  int disc_width = 8;
  int disc_layers = 3;
  int embed_dim = 256;
  int num_patches = 256;
};

struct LossConfig {
  OperatingMode mode = OperatingMode::kCut;
  double nce_tau = 0.07;
  std::optional<LossWeights> weights_override;
};

struct EvalConfig {
  ExtractorSpec fid_extractor;
  UdaConfig uda;
};

struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;  // epochs/lr/seed/... ; width/mode merged in via sections
  EvalConfig eval;
  std::string hash;  // of the resolved config

  nlohmann::json resolved() const;
  void rehash();
};

ExperimentConfig default_config();

// Strict parse: duplicate keys, unknown keys and type mismatches are
// rejected with the offending key path; missing keys take defaults.
ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig parse_config_json(const nlohmann::json& j);

// JSON text -> tree, rejecting duplicate object keys.
nlohmann::json parse_strict_json(const std::string& text);

TrainConfig make_train_config(const ExperimentConfig& config);

struct PipelineArgs {
  std::filesystem::path out_dir;
  std::filesystem::path data;  // manifest file or dataset directory
  std::filesystem::path checkpoint;
  std::filesystem::path real_dir, fake_dir;
  std::filesystem::path pred_dir, gt_dir;
  std::filesystem::path pairs_file;
  std::filesystem::path train_manifest, target_test;
  bool overwrite = false;
};

// Exit codes: 0 success, 2 config error, 3 data error, 4 runtime error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDataError = 3;
inline constexpr int kExitRuntimeError = 4;

// Dispatches one subcommand; throws on failure (the CLI maps exceptions to
// exit codes via run_guarded).
void run_pipeline(const std::string& subcommand, const ExperimentConfig& config,
                  const PipelineArgs& args);

int run_guarded(const std::string& subcommand, const ExperimentConfig& config,
                const PipelineArgs& args);

// $ACCUT_OUT_ROOT reroots relative output paths.
std::filesystem::path resolve_out_dir(const std::filesystem::path& out);

void write_resolved_config(const ExperimentConfig& config,
                           const std::filesystem::path& dir);

}  // namespace accut
