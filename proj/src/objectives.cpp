#include "accut/objectives.hpp"

#include <cmath>

namespace F = torch::nn::functional;

namespace accut {

OperatingMode mode_from_string(const std::string& name) {
  if (name == "cut") return OperatingMode::kCut;
  if (name == "accut_s") return OperatingMode::kAccutS;
  if (name == "accut_t") return OperatingMode::kAccutT;
  if (name == "accut_st") return OperatingMode::kAccutST;
  throw ConfigError("unknown operating mode '" + name +
                    "' (expected cut|accut_s|accut_t|accut_st)");
}

const char* mode_name(OperatingMode mode) {
  switch (mode) {
    case OperatingMode::kCut: return "cut";
    case OperatingMode::kAccutS: return "accut_s";
    case OperatingMode::kAccutT: return "accut_t";
    case OperatingMode::kAccutST: return "accut_st";
  }
  return "unknown";
}

LossWeights mode_weights(OperatingMode mode) {
  LossWeights w;  // lambda_Xs = lambda_Xt = 1.0 in all modes
  switch (mode) {
    case OperatingMode::kCut:
      w.lambda_s = 0.0;
      w.lambda_t = 0.0;
      break;
    case OperatingMode::kAccutS:
      w.lambda_s = 1.0;
      w.lambda_t = 0.0;
      break;
    case OperatingMode::kAccutT:
      w.lambda_s = 0.0;
      w.lambda_t = 1.0;
      break;
    case OperatingMode::kAccutST:
      w.lambda_s = 0.5;
      w.lambda_t = 0.5;
      break;
  }
  return w;
}

LossBreakdown total_loss(const LossComponents& c, const LossWeights& w) {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite loss component: ") + name);
    }
  };
  check(c.gan, "gan");
  check(c.nce_source, "nce_source");
  check(c.nce_target, "nce_target");
  check(c.seg_source, "seg_source");
  check(c.seg_target, "seg_target");

  LossBreakdown b;
  b.gan = c.gan;
  b.nce_source = c.nce_source;
  b.nce_target = c.nce_target;
  b.seg_source = c.seg_source;
  b.seg_target = c.seg_target;
  b.total = c.gan + w.lambda_Xs * c.nce_source + w.lambda_Xt * c.nce_target +
            w.lambda_s * c.seg_source + w.lambda_t * c.seg_target;
  return b;
}

torch::Tensor segmentation_ce(const torch::Tensor& mask_logits,
                              const torch::Tensor& target_mask, int class_count) {
  torch::Tensor logits = mask_logits;
  torch::Tensor target = target_mask;
  if (logits.dim() == 3) logits = logits.unsqueeze(0);
  if (target.dim() == 2) target = target.unsqueeze(0);
  if (logits.dim() != 4 || target.dim() != 3) {
    throw ShapeError("segmentation_ce expects [B,C,H,W] logits and [B,H,W] target");
  }
  if (logits.size(1) != class_count) {
    throw ShapeError("segmentation_ce: logits channel count != class_count");
  }
  if (logits.size(0) != target.size(0) || logits.size(2) != target.size(1) ||
      logits.size(3) != target.size(2)) {
    throw ShapeError("segmentation_ce: logits and target are not spatially aligned");
  }
  if ((target.max().item<std::int64_t>() >= class_count) ||
      (target.min().item<std::int64_t>() < 0)) {
    throw DataError("segmentation_ce: target contains class id outside [0, C)");
  }
  torch::Tensor probs = torch::softmax(logits, 1);
  torch::Tensor picked = probs.gather(1, target.unsqueeze(1)).squeeze(1);
  return -picked.clamp_min(1e-12).log().mean();
}

torch::Tensor gan_generator_loss(const torch::Tensor& disc_fake) {
  return (disc_fake - 1.0).pow(2).mean();
}

GanLosses gan_losses(const torch::Tensor& disc_real, const torch::Tensor& disc_fake) {
  if (disc_real.sizes() != disc_fake.sizes()) {
    throw ShapeError("gan_losses: real and fake logit maps differ in shape");
  }
  GanLosses out;
  out.loss_d = 0.5 * (disc_real - 1.0).pow(2).mean() + 0.5 * disc_fake.pow(2).mean();
  out.loss_g = gan_generator_loss(disc_fake);
  return out;
}

torch::Tensor patch_nce(const std::vector<torch::Tensor>& query_embeddings,
                        const std::vector<torch::Tensor>& key_embeddings,
                        double temperature) {
  if (query_embeddings.size() != key_embeddings.size() || query_embeddings.empty()) {
    throw ShapeError("patch_nce: query/key layer counts differ or are empty");
  }
  torch::Tensor acc;
  for (std::size_t l = 0; l < query_embeddings.size(); ++l) {
    torch::Tensor q = query_embeddings[l];
    torch::Tensor k = key_embeddings[l];
    if (q.dim() == 2) q = q.unsqueeze(0);
    if (k.dim() == 2) k = k.unsqueeze(0);
    if (q.sizes() != k.sizes() || q.dim() != 3 || q.size(1) < 1) {
      throw ShapeError("patch_nce: layer " + std::to_string(l) +
                       " query/key shapes mismatch");
    }
    const auto batch = q.size(0);
    const auto n = q.size(1);
    torch::Tensor logits = torch::bmm(q, k.transpose(1, 2)) / temperature;
    torch::Tensor labels = torch::arange(n, torch::kInt64).repeat({batch});
    torch::Tensor layer_loss =
        F::cross_entropy(logits.reshape({batch * n, n}), labels);
    acc = acc.defined() ? acc + layer_loss : layer_loss;
  }
  return acc / double(query_embeddings.size());
}

torch::Tensor weighted_total(const torch::Tensor& gan, const torch::Tensor& nce_source,
                             const torch::Tensor& nce_target, const torch::Tensor& seg_source,
                             const torch::Tensor& seg_target, const LossWeights& w) {
  return gan + w.lambda_Xs * nce_source + w.lambda_Xt * nce_target +
         w.lambda_s * seg_source + w.lambda_t * seg_target;
}

}  // namespace accut
