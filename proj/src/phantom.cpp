#include "accut/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "accut/rng.hpp"

namespace accut {

namespace {

constexpr double kPi = 3.14159265358979323846;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform() { return rng_uniform(eng_); }
  double uniform(double lo, double hi) { return rng_uniform(eng_, lo, hi); }
  bool bernoulli(double p) { return rng_bernoulli(eng_, p); }
  double gaussian() { return gauss_(eng_); }

 private:
  std::mt19937_64 eng_;
  GaussianDraw gauss_;
};

// Smooth random curve: a few low-frequency sinusoids whose high harmonics
// decay with boundary_smoothness.
std::vector<double> smooth_curve(Rng& rng, int width, double amplitude,
                                 double smoothness) {
  constexpr int kHarmonics = 4;
  std::array<double, kHarmonics> amp{}, phase{}, freq{};
  for (int k = 0; k < kHarmonics; ++k) {
    amp[k] = amplitude * rng.uniform(0.5, 1.0) * std::exp(-smoothness * k);
    phase[k] = rng.uniform(0.0, 2.0 * kPi);
    freq[k] = 2.0 * kPi * double(k + 1) / double(width);
  }
  std::vector<double> curve(width);
  for (int x = 0; x < width; ++x) {
    double v = 0.0;
    for (int k = 0; k < kHarmonics; ++k) v += amp[k] * std::sin(freq[k] * x + phase[k]);
    curve[x] = v;
  }
  return curve;
}

void validate(const PhantomParams& p) {
  if (p.image_height < 64 || p.image_width < 64) {
    throw ConfigError("phantom dimensions must be at least 64x64");
  }
  if (p.ped_probability < 0.0 || p.ped_probability > 1.0 ||
      p.srf_probability < 0.0 || p.srf_probability > 1.0) {
    throw ConfigError("phantom biomarker probabilities must lie in [0,1]");
  }
  if (p.speckle_strength < 0.0) throw ConfigError("speckle_strength must be >= 0");
  if (p.retina_thickness_range.first < 4 ||
      p.retina_thickness_range.second < p.retina_thickness_range.first ||
      p.retina_thickness_range.second > p.image_height / 2) {
    throw ConfigError("retina_thickness_range must satisfy 4 <= min <= max <= H/2");
  }
  if (p.gamma <= 0.0) throw ConfigError("gamma must be > 0");
}

}  // namespace

PhantomParams PhantomParams::source_defaults(std::uint64_t seed) {
  PhantomParams p;
  p.domain_style = DomainStyle::kSourceClean;
  p.speckle_strength = 0.0;
  p.gamma = 1.0;
  p.seed = seed;
  return p;
}

PhantomParams PhantomParams::target_defaults(std::uint64_t seed) {
  PhantomParams p;
  p.domain_style = DomainStyle::kTargetNoisy;
  p.speckle_strength = 0.35;
  p.gamma = 0.75;
  p.seed = seed;
  return p;
}

Sample generate_sample(const PhantomParams& params, int subject_id) {
  validate(params);
  const int H = params.image_height;
  const int W = params.image_width;

  // Geometry stream is shared by both domain styles of a subject.
  Rng geom(mix_seed(params.seed, 0x100 + std::uint64_t(subject_id)));

  const double curve_amp = H * 0.06;
  auto top_curve = smooth_curve(geom, W, curve_amp, params.boundary_smoothness);
  auto thick_curve = smooth_curve(geom, W, curve_amp * 0.5, params.boundary_smoothness);

  const double top_base = geom.uniform(0.20 * H, 0.50 * H);
  const double thick_base = geom.uniform(double(params.retina_thickness_range.first),
                                         double(params.retina_thickness_range.second));

  const bool has_ped = geom.bernoulli(params.ped_probability);
  const bool has_srf = geom.bernoulli(params.srf_probability);

  // PED: localized downward bump of the retina/choroid boundary.
  const double ped_cx = geom.uniform(0.15 * W, 0.85 * W);
  const double ped_sigma = geom.uniform(0.03 * W, 0.06 * W);
  const double ped_amp = geom.uniform(std::max(4.0, 0.06 * H), std::max(8.0, 0.12 * H));

  // SRF: ellipsoidal hypo-intense pocket sitting just above the retina bottom.
  const double srf_cx = geom.uniform(0.2 * W, 0.8 * W);
  const double srf_rx = std::max(3.0, geom.uniform(0.04 * W, 0.10 * W));
  const double srf_ry = std::max(2.0, geom.uniform(0.08, 0.18) * thick_base);

  std::vector<int> y_top(W), y_bot(W), y_bump(W);
  for (int x = 0; x < W; ++x) {
    double t = top_base + top_curve[x];
    double th = std::clamp(thick_base + thick_curve[x],
                           double(params.retina_thickness_range.first),
                           double(params.retina_thickness_range.second));
    int yt = std::clamp(int(std::lround(t)), 2, H - 8);
    int yb = std::clamp(int(std::lround(t + th)), yt + 4, H - 4);
    double bump = 0.0;
    if (has_ped) {
      double dx = (x - ped_cx) / ped_sigma;
      bump = ped_amp * std::exp(-0.5 * dx * dx);
    }
    int ybp = std::clamp(yb + int(std::lround(bump)), yb, H - 2);
    y_top[x] = yt;
    y_bot[x] = yb;
    y_bump[x] = ybp;
  }

  torch::Tensor mask = torch::empty({H, W}, torch::kInt64);
  auto m = mask.accessor<std::int64_t, 2>();
  for (int x = 0; x < W; ++x) {
    for (int y = 0; y < H; ++y) {
      int c;
      if (y < y_top[x]) {
        c = int(SegClass::kVitreous);
      } else if (y < y_bot[x]) {
        c = int(SegClass::kRetina);
      } else if (y < y_bump[x]) {
        c = int(SegClass::kPed);
      } else {
        c = int(SegClass::kChoroid);
      }
      m[y][x] = c;
    }
  }
  if (has_srf) {
    // Clip the pocket to the retina band so the column order stays valid.
    for (int x = 0; x < W; ++x) {
      double cy = double(y_bot[x]) - srf_ry - 1.0;
      double dx = (x - srf_cx) / srf_rx;
      if (std::abs(dx) > 1.0) continue;
      double dy_max = srf_ry * std::sqrt(1.0 - dx * dx);
      int lo = std::max(y_top[x] + 1, int(std::ceil(cy - dy_max)));
      int hi = std::min(y_bot[x] - 1, int(std::floor(cy + dy_max)));
      for (int y = lo; y <= hi; ++y) m[y][x] = int(SegClass::kSrf);
    }
  }

  // Texture and degradation are per-domain.
  Rng tex(mix_seed(params.seed, 0x200 + (std::uint64_t(subject_id) << 2) +
                                    std::uint64_t(params.domain_style)));
  const auto& prof = params.intensity_profile;
  torch::Tensor image = torch::empty({1, H, W}, torch::kFloat32);
  auto im = image.accessor<float, 3>();
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      int c = int(m[y][x]);
      double v = prof.mean[c] + prof.stddev[c] * tex.gaussian();
      double v01 = std::clamp((v + 1.0) * 0.5, 0.0, 1.0);
      if (params.speckle_strength > 0.0) {
        v01 *= std::max(0.0, 1.0 + params.speckle_strength * tex.gaussian());
        v01 = std::min(v01, 1.0);
      }
      if (params.gamma != 1.0) v01 = std::pow(v01, params.gamma);
      im[0][y][x] = float(2.0 * v01 - 1.0);
    }
  }

  Sample s;
  s.image = image;
  s.mask = mask;
  s.domain = params.domain_style == DomainStyle::kSourceClean ? Domain::kSource
                                                              : Domain::kTarget;
  s.subject_id = subject_id;
  return s;
}

}  // namespace accut
