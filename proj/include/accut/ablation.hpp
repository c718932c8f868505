#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <vector>

#include "accut/networks.hpp"

namespace accut {

struct AblationPair {
  std::filesystem::path style_image;
  std::filesystem::path mask_image;
};

struct AblationOutputs {
  std::vector<torch::Tensor> swapped;   // translate_ablation(style, mask)
  std::vector<torch::Tensor> straight;  // translate(style)
  std::filesystem::path grid_file;
};

// Predicted segmentation of an image under the generator's own f_M.
torch::Tensor predicted_mask(AccutGenerator generator, const torch::Tensor& image);

// Mean row index of a class in a mask; NaN when the class is absent.
double mean_class_row(const torch::Tensor& mask, int class_id);

// For every pair, saves style input, mask input, the swapped translation and
// the straight translation, plus one grid image with those four columns per
// pair row.
AblationOutputs run_ablation(const std::filesystem::path& checkpoint,
                             const std::vector<AblationPair>& pairs,
                             const std::filesystem::path& out_dir);

}  // namespace accut
