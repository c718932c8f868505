#include "accut/objectives.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace accut;

namespace {

// Brute-force oracles, double precision, plain loops. These stay independent
// of the implementation path they check.

double ce_oracle(const torch::Tensor& logits, const torch::Tensor& target) {
  auto l = logits.to(torch::kFloat64);
  auto t = target;
  const auto B = l.size(0), C = l.size(1), H = l.size(2), W = l.size(3);
  double acc = 0.0;
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t y = 0; y < H; ++y) {
      for (std::int64_t x = 0; x < W; ++x) {
        double denom = 0.0;
        double mx = -1e300;
        for (std::int64_t c = 0; c < C; ++c) {
          mx = std::max(mx, l[b][c][y][x].item<double>());
        }
        for (std::int64_t c = 0; c < C; ++c) {
          denom += std::exp(l[b][c][y][x].item<double>() - mx);
        }
        std::int64_t cls = t[b][y][x].item<std::int64_t>();
        double p = std::exp(l[b][cls][y][x].item<double>() - mx) / denom;
        acc += -std::log(std::max(p, 1e-12));
      }
    }
  }
  return acc / double(B * H * W);
}

double nce_oracle(const std::vector<torch::Tensor>& qs,
                  const std::vector<torch::Tensor>& ks, double tau) {
  double layer_acc = 0.0;
  for (std::size_t l = 0; l < qs.size(); ++l) {
    auto q = qs[l].to(torch::kFloat64);
    auto k = ks[l].to(torch::kFloat64);
    const auto B = q.size(0), N = q.size(1), D = q.size(2);
    double acc = 0.0;
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t i = 0; i < N; ++i) {
        // exhaustive softmax over the full similarity row
        std::vector<double> sims(N, 0.0);
        for (std::int64_t j = 0; j < N; ++j) {
          for (std::int64_t d = 0; d < D; ++d) {
            sims[j] += q[b][i][d].item<double>() * k[b][j][d].item<double>();
          }
          sims[j] /= tau;
        }
        double mx = *std::max_element(sims.begin(), sims.end());
        double denom = 0.0;
        for (double s : sims) denom += std::exp(s - mx);
        acc += -(sims[i] - mx) + std::log(denom);
      }
    }
    layer_acc += acc / double(B * N);
  }
  return layer_acc / double(qs.size());
}

torch::Tensor unit_rows(torch::Tensor x) {
  return x / x.norm(2, -1, true);
}

}  // namespace

TEST(ModeWeights, PaperTable) {
  LossWeights cut = mode_weights(OperatingMode::kCut);
  EXPECT_EQ(cut.lambda_s, 0.0);
  EXPECT_EQ(cut.lambda_t, 0.0);
  EXPECT_EQ(cut.lambda_Xs, 1.0);
  EXPECT_EQ(cut.lambda_Xt, 1.0);

  LossWeights s = mode_weights(OperatingMode::kAccutS);
  EXPECT_EQ(s.lambda_s, 1.0);
  EXPECT_EQ(s.lambda_t, 0.0);

  LossWeights t = mode_weights(OperatingMode::kAccutT);
  EXPECT_EQ(t.lambda_s, 0.0);
  EXPECT_EQ(t.lambda_t, 1.0);

  LossWeights st = mode_weights(OperatingMode::kAccutST);
  EXPECT_EQ(st.lambda_s, 0.5);
  EXPECT_EQ(st.lambda_t, 0.5);
}

TEST(ModeWeights, StringRoundTrip) {
  for (auto m : {OperatingMode::kCut, OperatingMode::kAccutS, OperatingMode::kAccutT,
                 OperatingMode::kAccutST}) {
    EXPECT_EQ(mode_from_string(mode_name(m)), m);
  }
  EXPECT_THROW(mode_from_string("accut"), ConfigError);
}

TEST(SegmentationCe, PerfectOneHotIsZero) {
  torch::Tensor target = torch::randint(0, 5, {1, 4, 4}, torch::kInt64);
  torch::Tensor logits = torch::zeros({1, 5, 4, 4});
  // drive the true class to probability ~1
  logits.scatter_(1, target.unsqueeze(1), 60.0);
  EXPECT_NEAR(segmentation_ce(logits, target).item<double>(), 0.0, 1e-9);
}

TEST(SegmentationCe, UniformIsLogC) {
  torch::Tensor logits = torch::zeros({1, 5, 2, 2});
  torch::Tensor target = torch::randint(0, 5, {1, 2, 2}, torch::kInt64);
  EXPECT_NEAR(segmentation_ce(logits, target).item<double>(), std::log(5.0), 1e-6);
}

TEST(SegmentationCe, SinglePixelKnownProbability) {
  // one pixel, two live classes; p(true) = 0.7
  torch::Tensor logits = torch::full({1, 5, 1, 1}, -60.0);
  double l0 = 0.0;
  double l1 = std::log(0.3 / 0.7);
  logits[0][0][0][0] = l0;
  logits[0][1][0][0] = l1;
  torch::Tensor target = torch::zeros({1, 1, 1}, torch::kInt64);
  EXPECT_NEAR(segmentation_ce(logits, target).item<double>(), -std::log(0.7), 1e-6);
}

TEST(SegmentationCe, MatchesBruteForceOracle) {
  torch::manual_seed(11);
  torch::Tensor logits = torch::randn({2, 5, 2, 2});
  torch::Tensor target = torch::randint(0, 5, {2, 2, 2}, torch::kInt64);
  double expected = ce_oracle(logits, target);
  double got = segmentation_ce(logits, target).item<double>();
  EXPECT_NEAR(got, expected, 1e-6 * std::max(1.0, std::abs(expected)));
}

TEST(SegmentationCe, RejectsBadClassIds) {
  torch::Tensor logits = torch::zeros({1, 5, 2, 2});
  torch::Tensor target = torch::full({1, 2, 2}, 5, torch::kInt64);
  EXPECT_THROW(segmentation_ce(logits, target), DataError);
}

TEST(SegmentationCe, RejectsMisalignedShapes) {
  torch::Tensor logits = torch::zeros({1, 5, 2, 2});
  torch::Tensor target = torch::zeros({1, 2, 3}, torch::kInt64);
  EXPECT_THROW(segmentation_ce(logits, target), ShapeError);
}

TEST(GanLosses, PerfectDiscriminator) {
  torch::Tensor real = torch::ones({1, 1, 3, 3});
  torch::Tensor fake = torch::zeros({1, 1, 3, 3});
  GanLosses g = gan_losses(real, fake);
  EXPECT_NEAR(g.loss_d.item<double>(), 0.0, 1e-9);
}

TEST(GanLosses, HalfConfused) {
  torch::Tensor half = torch::full({1, 1, 2, 2}, 0.5);
  GanLosses g = gan_losses(half, half);
  EXPECT_NEAR(g.loss_d.item<double>(), 0.25, 1e-7);
}

TEST(GanLosses, PerfectlyFooledGenerator) {
  torch::Tensor fake = torch::ones({1, 1, 2, 2});
  EXPECT_NEAR(gan_generator_loss(fake).item<double>(), 0.0, 1e-9);
  GanLosses g = gan_losses(fake, fake);
  EXPECT_NEAR(g.loss_g.item<double>(), 0.0, 1e-9);
}

TEST(GanLosses, MatchesBruteForce) {
  torch::manual_seed(3);
  torch::Tensor real = torch::randn({1, 1, 2, 4});
  torch::Tensor fake = torch::randn({1, 1, 2, 4});
  double ld = 0.0, lg = 0.0;
  for (int i = 0; i < 8; ++i) {
    double r = real.view(-1)[i].item<double>();
    double f = fake.view(-1)[i].item<double>();
    ld += 0.5 * (r - 1.0) * (r - 1.0) / 8.0 + 0.5 * f * f / 8.0;
    lg += (f - 1.0) * (f - 1.0) / 8.0;
  }
  GanLosses g = gan_losses(real, fake);
  EXPECT_NEAR(g.loss_d.item<double>(), ld, 1e-6);
  EXPECT_NEAR(g.loss_g.item<double>(), lg, 1e-6);
}

TEST(GanLosses, RejectsShapeMismatch) {
  EXPECT_THROW(gan_losses(torch::ones({1, 1, 2, 2}), torch::ones({1, 1, 3, 3})),
               ShapeError);
}

TEST(PatchNce, SinglePatchIsZero) {
  torch::Tensor q = unit_rows(torch::randn({1, 1, 8}));
  torch::Tensor k = unit_rows(torch::randn({1, 1, 8}));
  EXPECT_NEAR(patch_nce({q}, {k}, 1.0).item<double>(), 0.0, 1e-9);
}

TEST(PatchNce, IdenticalEmbeddingsGiveLogN) {
  // all four embeddings identical -> uniform softmax over 2 -> ln 2
  torch::Tensor e = unit_rows(torch::randn({1, 1, 16}));
  torch::Tensor q = torch::cat({e, e}, 1);
  EXPECT_NEAR(patch_nce({q}, {q.clone()}, 1.0).item<double>(), std::log(2.0), 1e-6);
}

TEST(PatchNce, AntipodalPair) {
  // q_i . k_i = 1, q_i . k_j = -1 -> -ln(e / (e + 1/e))
  torch::Tensor a = unit_rows(torch::randn({1, 1, 16}));
  torch::Tensor q = torch::cat({a, -a}, 1);
  double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0)));
  EXPECT_NEAR(patch_nce({q}, {q.clone()}, 1.0).item<double>(), expected, 1e-6);
  EXPECT_NEAR(expected, 0.1269, 2e-4);
}

TEST(PatchNce, MatchesExhaustiveOracle) {
  torch::manual_seed(5);
  std::vector<torch::Tensor> qs, ks;
  for (int l = 0; l < 3; ++l) {
    qs.push_back(unit_rows(torch::randn({2, 5, 7})));
    ks.push_back(unit_rows(torch::randn({2, 5, 7})));
  }
  double expected = nce_oracle(qs, ks, 0.07);
  double got = patch_nce(qs, ks, 0.07).item<double>();
  EXPECT_NEAR(got, expected, 1e-6 * std::max(1.0, std::abs(expected)));
}

TEST(PatchNce, JointPermutationInvariance) {
  torch::manual_seed(9);
  torch::Tensor q = unit_rows(torch::randn({1, 6, 8}));
  torch::Tensor k = unit_rows(torch::randn({1, 6, 8}));
  double base = patch_nce({q}, {k}, 0.5).item<double>();
  torch::Tensor perm = torch::randperm(6);
  double permuted =
      patch_nce({q.index_select(1, perm)}, {k.index_select(1, perm)}, 0.5).item<double>();
  EXPECT_NEAR(base, permuted, 1e-6);
}

TEST(PatchNce, HighTemperatureApproachesLogN) {
  torch::manual_seed(13);
  torch::Tensor q = unit_rows(torch::randn({1, 8, 16}));
  torch::Tensor k = unit_rows(torch::randn({1, 8, 16}));
  double v = patch_nce({q}, {k}, 100.0).item<double>();
  EXPECT_NEAR(v, std::log(8.0), 0.02);
}

TEST(PatchNce, RejectsCountMismatch) {
  torch::Tensor q = unit_rows(torch::randn({1, 4, 8}));
  torch::Tensor k = unit_rows(torch::randn({1, 5, 8}));
  EXPECT_THROW(patch_nce({q}, {k}, 1.0), ShapeError);
}

TEST(TotalLoss, AllZero) {
  LossBreakdown b = total_loss({}, mode_weights(OperatingMode::kCut));
  EXPECT_EQ(b.total, 0.0);
}

TEST(TotalLoss, AccutStWeightsSumExactly) {
  LossComponents c{1.0, 1.0, 1.0, 1.0, 1.0};
  LossBreakdown b = total_loss(c, mode_weights(OperatingMode::kAccutST));
  EXPECT_DOUBLE_EQ(b.total, 4.0);
}

TEST(TotalLoss, CutIgnoresSegComponents) {
  LossComponents with_seg{0.3, 0.2, 0.1, 7.0, 9.0};
  LossComponents no_seg{0.3, 0.2, 0.1, 0.0, 0.0};
  LossWeights w = mode_weights(OperatingMode::kCut);
  EXPECT_DOUBLE_EQ(total_loss(with_seg, w).total, total_loss(no_seg, w).total);

  // lambda * 0 keeps CUT and ACCUT_s totals equal when seg_source is 0
  EXPECT_DOUBLE_EQ(total_loss(no_seg, mode_weights(OperatingMode::kAccutS)).total,
                   total_loss(no_seg, w).total);
}

TEST(TotalLoss, BreakdownInvariantHoldsExactly) {
  std::mt19937_64 eng(7);
  std::uniform_real_distribution<double> dist(0.0, 2.0);
  for (int i = 0; i < 50; ++i) {
    LossComponents c{dist(eng), dist(eng), dist(eng), dist(eng), dist(eng)};
    LossWeights w{dist(eng), dist(eng), dist(eng), dist(eng)};
    LossBreakdown b = total_loss(c, w);
    double recomputed = b.gan + w.lambda_Xs * b.nce_source + w.lambda_Xt * b.nce_target +
                        w.lambda_s * b.seg_source + w.lambda_t * b.seg_target;
    EXPECT_EQ(b.total, recomputed);  // bitwise: same expression
  }
}

TEST(TotalLoss, LinearInEachComponent) {
  LossWeights w = mode_weights(OperatingMode::kAccutST);
  LossComponents base{0.5, 0.4, 0.3, 0.2, 0.1};
  const double h = 0.25;
  auto diff = [&](auto mutate, double weight) {
    LossComponents c = base;
    mutate(c, h);
    double up = total_loss(c, w).total;
    mutate(c, -2.0 * h);
    double down = total_loss(c, w).total;
    EXPECT_NEAR((up - down) / (2.0 * h), weight, 1e-12);
  };
  diff([](LossComponents& c, double d) { c.gan += d; }, 1.0);
  diff([](LossComponents& c, double d) { c.nce_source += d; }, w.lambda_Xs);
  diff([](LossComponents& c, double d) { c.nce_target += d; }, w.lambda_Xt);
  diff([](LossComponents& c, double d) { c.seg_source += d; }, w.lambda_s);
  diff([](LossComponents& c, double d) { c.seg_target += d; }, w.lambda_t);
}

TEST(TotalLoss, NamesNonFiniteComponent) {
  LossComponents c;
  c.nce_target = std::numeric_limits<double>::quiet_NaN();
  try {
    total_loss(c, mode_weights(OperatingMode::kCut));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("nce_target"), std::string::npos);
  }
}
