#include "accut/metrics.hpp"

#include <torch/script.h>

#include <cmath>
#include <limits>

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace accut {

DiceScores dice(const torch::Tensor& pred, const torch::Tensor& gt, int class_count,
                const DiceOptions& options) {
  if (pred.sizes() != gt.sizes()) throw ShapeError("dice: pred and gt shapes differ");
  torch::Tensor p = pred.reshape(-1).to(torch::kInt64);
  torch::Tensor g = gt.reshape(-1).to(torch::kInt64);

  DiceScores out;
  out.per_class.resize(class_count);
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < class_count; ++c) {
    torch::Tensor pc = (p == c);
    torch::Tensor gc = (g == c);
    auto np = pc.sum().item<std::int64_t>();
    auto ng = gc.sum().item<std::int64_t>();
    double score;
    if (np + ng == 0) {
      if (!options.absent_in_both_is_one) {
        out.per_class[c] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      score = 1.0;
    } else {
      auto inter = (pc & gc).sum().item<std::int64_t>();
      score = 2.0 * double(inter) / double(np + ng);
    }
    out.per_class[c] = score;
    sum += score;
    ++counted;
  }
  out.mean = counted > 0 ? sum / counted : std::numeric_limits<double>::quiet_NaN();
  return out;
}

DiceReport dice_report(const std::vector<torch::Tensor>& preds,
                       const std::vector<torch::Tensor>& gts,
                       const std::vector<int>& subject_ids, int class_count,
                       const DiceOptions& options) {
  if (preds.size() != gts.size() || preds.size() != subject_ids.size()) {
    throw ShapeError("dice_report: list lengths differ");
  }
  if (preds.empty()) throw DataError("dice_report: no mask pairs given");

  DiceReport report;
  report.per_class.assign(class_count, 0.0);
  std::vector<int> class_counts(class_count, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    SubjectDice sd;
    sd.subject_id = subject_ids[i];
    sd.scores = dice(preds[i], gts[i], class_count, options);
    for (int c = 0; c < class_count; ++c) {
      if (!std::isnan(sd.scores.per_class[c])) {
        report.per_class[c] += sd.scores.per_class[c];
        ++class_counts[c];
      }
    }
    report.per_subject.push_back(std::move(sd));
  }
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < class_count; ++c) {
    if (class_counts[c] > 0) {
      report.per_class[c] /= class_counts[c];
      sum += report.per_class[c];
      ++counted;
    } else {
      report.per_class[c] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  report.mean = counted > 0 ? sum / counted : std::numeric_limits<double>::quiet_NaN();
  return report;
}

std::optional<std::string> fid_conditioning_warning(const FidInputs& inputs) {
  auto n = inputs.real_features.size(0);
  auto m = inputs.fake_features.size(0);
  auto d = inputs.real_features.size(1);
  if (n < d || m < d) {
    return "fid: feature count (" + std::to_string(std::min(n, m)) +
           ") is below the feature dimension (" + std::to_string(d) +
           "); covariance estimates are rank-deficient";
  }
  return std::nullopt;
}

namespace {

torch::Tensor covariance(const torch::Tensor& x) {
  torch::Tensor centered = x - x.mean(0, /*keepdim=*/true);
  return centered.t().mm(centered) / double(x.size(0) - 1);
}

torch::Tensor sym_sqrt(const torch::Tensor& sym) {
  auto [vals, vecs] = torch::linalg_eigh((sym + sym.t()) * 0.5);
  torch::Tensor clamped = vals.clamp_min(0.0);
  clamped = torch::where(clamped < 1e-10, torch::zeros_like(clamped), clamped);
  return vecs.mm(torch::diag(clamped.sqrt())).mm(vecs.t());
}

}  // namespace

double fid(const FidInputs& inputs) {
  const torch::Tensor real = inputs.real_features.to(torch::kFloat64);
  const torch::Tensor fake = inputs.fake_features.to(torch::kFloat64);
  if (real.dim() != 2 || fake.dim() != 2 || real.size(1) != fake.size(1)) {
    throw ShapeError("fid: feature matrices must be [N,d] with matching d");
  }
  if (real.size(0) < 2 || fake.size(0) < 2) {
    throw DataError("fid: need at least 2 feature rows per set");
  }
  if (auto warning = fid_conditioning_warning(inputs)) {
    std::fprintf(stderr, "[warn] %s\n", warning->c_str());
  }

  torch::Tensor mu_r = real.mean(0);
  torch::Tensor mu_f = fake.mean(0);
  torch::Tensor sigma_r = covariance(real);
  torch::Tensor sigma_f = covariance(fake);

  double mean_term = (mu_r - mu_f).pow(2).sum().item<double>();

  torch::Tensor root_r = sym_sqrt(sigma_r);
  torch::Tensor inner = root_r.mm(sigma_f).mm(root_r);
  auto [vals, vecs] = torch::linalg_eigh((inner + inner.t()) * 0.5);
  torch::Tensor clamped = vals.clamp_min(0.0);
  double trace_sqrt = clamped.sqrt().sum().item<double>();

  double value = mean_term + sigma_r.trace().item<double>() +
                 sigma_f.trace().item<double>() - 2.0 * trace_sqrt;
  return std::max(value, 0.0);
}

FeatureExtractor::FeatureExtractor(const ExtractorSpec& spec) : spec_(spec) {
  if (spec_.type == ExtractorSpec::Type::kRandomConv) {
    if (spec_.dim < 1) throw ConfigError("extractor dim must be >= 1");
    // Fixed-seed random weights; the global RNG state is left untouched.
    torch::Tensor saved = at::detail::getDefaultCPUGenerator().get_state();
    torch::manual_seed(spec_.seed);
    random_net_ = nn::Sequential(
        nn::Conv2d(nn::Conv2dOptions(spec_.channels, 16, 3).stride(2).padding(1)), nn::ReLU(),
        nn::Conv2d(nn::Conv2dOptions(16, 32, 3).stride(2).padding(1)), nn::ReLU(),
        nn::Conv2d(nn::Conv2dOptions(32, spec_.dim, 3).stride(2).padding(1)), nn::ReLU());
    random_net_->eval();
    at::detail::getDefaultCPUGenerator().set_state(saved);
    descriptor_ = "random_conv(dim=" + std::to_string(spec_.dim) +
                  ",seed=" + std::to_string(spec_.seed) + ")";
  } else {
    if (spec_.path.empty()) throw ConfigError("torchscript extractor requires a path");
    try {
      scripted_ = torch::jit::load(spec_.path);
      scripted_->eval();
    } catch (const c10::Error& e) {
      throw DataError("cannot load torchscript extractor " + spec_.path);
    }
    descriptor_ = "torchscript(" + spec_.path + ",channels=" + std::to_string(spec_.channels) +
                  ",resize=" + std::to_string(spec_.resize) + ")";
  }
  if (spec_.resize > 0) {
    descriptor_ += "+resize" + std::to_string(spec_.resize);
  }
}

torch::Tensor FeatureExtractor::extract(const torch::Tensor& images) const {
  if (images.dim() != 4 || images.size(1) != 1) {
    throw ShapeError("extract_features expects [N,1,H,W] grayscale images");
  }
  torch::NoGradGuard no_grad;
  torch::Tensor x = images;
  if (spec_.resize > 0) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<std::int64_t>{spec_.resize, spec_.resize})
                              .mode(torch::kBilinear)
                              .align_corners(false));
  }
  if (spec_.channels > 1) x = x.repeat({1, spec_.channels, 1, 1});

  if (spec_.type == ExtractorSpec::Type::kRandomConv) {
    torch::Tensor y = random_net_->forward(x);
    return y.mean({2, 3});
  }
  torch::Tensor y = scripted_->forward({x}).toTensor();
  return y.flatten(1);
}

torch::Tensor extract_features(const torch::Tensor& images, const ExtractorSpec& spec) {
  return FeatureExtractor(spec).extract(images);
}

}  // namespace accut
