#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <utility>

#include "accut/common.hpp"

namespace accut {

enum class DomainStyle : int { kSourceClean = 0, kTargetNoisy = 1 };

// Per-class mean/std of the generated intensities, in the [-1,1] range.
struct IntensityProfile {
  std::array<double, kNumClasses> mean{-0.85, 0.25, -0.25, -0.65, 0.45};
  std::array<double, kNumClasses> stddev{0.04, 0.08, 0.08, 0.05, 0.07};
};

struct PhantomParams {
  int image_height = 64;
  int image_width = 128;
  std::pair<int, int> retina_thickness_range{10, 18};  // pixels
  double boundary_smoothness = 0.9;
  double ped_probability = 0.5;
  double srf_probability = 0.5;
  DomainStyle domain_style = DomainStyle::kSourceClean;
  double speckle_strength = 0.0;   // multiplicative speckle, 0 = off
  double gamma = 1.0;              // global gamma shift, 1 = off
  IntensityProfile intensity_profile;
  std::uint64_t seed = 0;

  static PhantomParams source_defaults(std::uint64_t seed);
  static PhantomParams target_defaults(std::uint64_t seed);
};

// One image/mask pair. image: float32 [1,H,W] in [-1,1]; mask: int64 [H,W]
// with values in {0..4}. Geometry (and therefore the mask) depends only on
// (seed, subject_id), so the two domain styles of a subject are anatomically
// paired; texture and degradation additionally depend on the domain style.
struct Sample {
  torch::Tensor image;
  torch::Tensor mask;
  Domain domain = Domain::kSource;
  int subject_id = 0;
};

Sample generate_sample(const PhantomParams& params, int subject_id = 0);

}  // namespace accut
