#pragma once

#include <torch/torch.h>

#include <optional>
#include <string>
#include <vector>

#include "accut/common.hpp"

namespace accut {

struct DiceOptions {
  // Classes absent from both masks score 1.0; when false they are excluded
  // from the mean instead (NaN in per_class).
  bool absent_in_both_is_one = true;
};

struct DiceScores {
  std::vector<double> per_class;  // size C; NaN marks excluded classes
  double mean = 0.0;
};

struct SubjectDice {
  int subject_id = 0;
  DiceScores scores;
};

struct DiceReport {
  std::vector<double> per_class;  // subject-mean per class
  double mean = 0.0;
  std::vector<SubjectDice> per_subject;
};

// Per-class overlap 2|P^G| / (|P|+|G|) for one mask pair.
DiceScores dice(const torch::Tensor& pred, const torch::Tensor& gt,
                int class_count = kNumClasses, const DiceOptions& options = {});

DiceReport dice_report(const std::vector<torch::Tensor>& preds,
                       const std::vector<torch::Tensor>& gts,
                       const std::vector<int>& subject_ids,
                       int class_count = kNumClasses, const DiceOptions& options = {});

struct FidInputs {
  torch::Tensor real_features;  // [N,d]
  torch::Tensor fake_features;  // [M,d]
};

// Returns a warning when a feature matrix has fewer rows than columns (the
// covariance is then rank-deficient), empty otherwise.
std::optional<std::string> fid_conditioning_warning(const FidInputs& inputs);

// Frechet distance between Gaussian moment fits of the two feature sets.
// Covariances use 1/(N-1); the matrix square root goes through an
// eigendecomposition with eigenvalues clamped at 1e-10.
double fid(const FidInputs& inputs);

struct ExtractorSpec {
  enum class Type { kRandomConv, kTorchScript };
  Type type = Type::kRandomConv;
  int dim = 32;            // feature dimension of the random-conv embedder
  std::uint64_t seed = 0;  // weight seed of the random-conv embedder
  std::string path;        // torchscript module path
  int resize = 0;          // 0 = native resolution
  int channels = 1;        // extractor input channels; grayscale is replicated
};

// Deterministic image -> feature-vector extractor used by the FID pipeline.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const ExtractorSpec& spec);

  // images: [N,1,H,W] in [-1,1]; returns [N,d].
  torch::Tensor extract(const torch::Tensor& images) const;

  // Recorded in reports so runs are only compared within identical settings.
  std::string descriptor() const { return descriptor_; }

 private:
  ExtractorSpec spec_;
  torch::nn::Sequential random_net_{nullptr};
  mutable std::optional<torch::jit::Module> scripted_;
  std::string descriptor_;
};

torch::Tensor extract_features(const torch::Tensor& images, const ExtractorSpec& spec);

}  // namespace accut
