#include "accut/ablation.hpp"

#include <cmath>

#include "accut/dataset.hpp"
#include "accut/trainer.hpp"

namespace fs = std::filesystem;

namespace accut {

torch::Tensor predicted_mask(AccutGenerator generator, const torch::Tensor& image) {
  torch::NoGradGuard no_grad;
  torch::Tensor batch = image.dim() == 3 ? image.unsqueeze(0) : image;
  torch::Tensor logits = generator->decode_mask(generator->encode(batch).first).first;
  return logits.argmax(1).squeeze(0);
}

double mean_class_row(const torch::Tensor& mask, int class_id) {
  torch::Tensor hit = (mask == class_id);
  auto count = hit.sum().item<std::int64_t>();
  if (count == 0) return std::numeric_limits<double>::quiet_NaN();
  torch::Tensor rows = torch::arange(mask.size(0), torch::kFloat64).unsqueeze(1);
  double row_sum = (hit.to(torch::kFloat64) * rows).sum().item<double>();
  return row_sum / double(count);
}

AblationOutputs run_ablation(const fs::path& checkpoint,
                             const std::vector<AblationPair>& pairs,
                             const fs::path& out_dir) {
  if (pairs.empty()) throw DataError("run_ablation: empty pair list");

  CheckpointMeta meta = read_checkpoint_meta(checkpoint);
  if (meta.step == 0) {
    throw DataError("run_ablation: checkpoint " + checkpoint.string() +
                    " has no training steps");
  }
  Trainer trainer = Trainer::from_checkpoint(checkpoint);
  AccutGenerator generator = trainer.generator();
  generator->eval();

  fs::create_directories(out_dir);
  torch::NoGradGuard no_grad;

  AblationOutputs out;
  std::vector<torch::Tensor> grid_rows;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    torch::Tensor style = load_image(pairs[i].style_image).unsqueeze(0);
    torch::Tensor mask_img = load_image(pairs[i].mask_image).unsqueeze(0);
    torch::Tensor swapped = generator->translate_ablation(style, mask_img).squeeze(0);
    torch::Tensor straight = generator->translate(style).first.squeeze(0);

    char stem[32];
    std::snprintf(stem, sizeof(stem), "pair_%03zu", i);
    save_image(out_dir / (std::string(stem) + "_style_input.png"), style.squeeze(0));
    save_image(out_dir / (std::string(stem) + "_mask_input.png"), mask_img.squeeze(0));
    save_image(out_dir / (std::string(stem) + "_swapped.png"), swapped);
    save_image(out_dir / (std::string(stem) + "_straight.png"), straight);

    grid_rows.push_back(
        torch::cat({style.squeeze(0), mask_img.squeeze(0), swapped, straight}, 2));
    out.swapped.push_back(swapped);
    out.straight.push_back(straight);
  }

  torch::Tensor grid = torch::cat(grid_rows, 1);  // pairs stacked vertically
  out.grid_file = out_dir / "ablation_grid.png";
  save_image(out.grid_file, grid);
  return out;
}

}  // namespace accut
