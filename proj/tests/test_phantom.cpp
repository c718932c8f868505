#include "accut/phantom.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "accut/dataset.hpp"

namespace fs = std::filesystem;
using namespace accut;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("accut_phantom_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// mean absolute 4-neighbour Laplacian, the high-frequency energy proxy
double mean_abs_laplacian(const torch::Tensor& image) {
  torch::Tensor x = image.squeeze(0);
  torch::Tensor inner = x.slice(0, 1, -1).slice(1, 1, -1);
  torch::Tensor lap = x.slice(0, 0, -2).slice(1, 1, -1) + x.slice(0, 2).slice(1, 1, -1) +
                      x.slice(0, 1, -1).slice(1, 0, -2) + x.slice(0, 1, -1).slice(1, 2) -
                      4.0 * inner;
  return lap.abs().mean().item<double>();
}

}  // namespace

TEST(Phantom, ZeroBiomarkerProbabilityOmitsClasses) {
  PhantomParams p = PhantomParams::source_defaults(3);
  p.ped_probability = 0.0;
  p.srf_probability = 0.0;
  Sample s = generate_sample(p, 0);
  EXPECT_EQ((s.mask == int(SegClass::kSrf)).sum().item<std::int64_t>(), 0);
  EXPECT_EQ((s.mask == int(SegClass::kPed)).sum().item<std::int64_t>(), 0);
}

TEST(Phantom, DeterministicGivenSeed) {
  PhantomParams p = PhantomParams::target_defaults(17);
  Sample a = generate_sample(p, 4);
  Sample b = generate_sample(p, 4);
  EXPECT_TRUE(a.image.equal(b.image));
  EXPECT_TRUE(a.mask.equal(b.mask));
}

TEST(Phantom, DifferentSeedsDiffer) {
  PhantomParams a = PhantomParams::source_defaults(1);
  PhantomParams b = PhantomParams::source_defaults(2);
  EXPECT_FALSE(generate_sample(a, 0).image.equal(generate_sample(b, 0).image));
}

TEST(Phantom, CleanSourceVarianceBoundedByProfileStd) {
  PhantomParams p = PhantomParams::source_defaults(23);
  p.speckle_strength = 0.0;
  Sample s = generate_sample(p, 1);
  for (int c = 0; c < kNumClasses; ++c) {
    torch::Tensor hit = (s.mask == c);
    if (hit.sum().item<std::int64_t>() < 16) continue;
    torch::Tensor values = s.image.squeeze(0).masked_select(hit);
    double var = values.var().item<double>();
    EXPECT_LE(var, p.intensity_profile.stddev[c])
        << "class " << seg_class_name(c) << " variance " << var;
  }
}

TEST(Phantom, StructuralClassesAlwaysPresent) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    PhantomParams p = PhantomParams::target_defaults(seed);
    Sample s = generate_sample(p, int(seed % 7));
    for (int c : {0, 1, 2}) {
      EXPECT_GT((s.mask == c).sum().item<std::int64_t>(), 0)
          << "seed " << seed << " class " << seg_class_name(c);
    }
  }
}

TEST(Phantom, ColumnOrderVitreousRetinaChoroid) {
  // per column: vitreous block first, choroid block last, retina in between;
  // SRF/PED only interrupt within the band
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PhantomParams p = PhantomParams::source_defaults(seed);
    p.ped_probability = seed % 2 ? 1.0 : 0.0;
    p.srf_probability = seed % 3 ? 1.0 : 0.0;
    Sample s = generate_sample(p, 2);
    auto m = s.mask.accessor<std::int64_t, 2>();
    for (int x = 0; x < p.image_width; ++x) {
      int phase = 0;  // 0 vitreous, 1 band (retina/srf/ped), 2 choroid
      for (int y = 0; y < p.image_height; ++y) {
        int c = int(m[y][x]);
        if (phase == 0) {
          if (c != int(SegClass::kVitreous)) {
            ASSERT_NE(c, int(SegClass::kChoroid)) << "choroid before retina at x=" << x;
            phase = 1;
          }
        } else if (phase == 1) {
          if (c == int(SegClass::kChoroid)) phase = 2;
          ASSERT_NE(c, int(SegClass::kVitreous)) << "vitreous inside band at x=" << x;
        } else {
          ASSERT_EQ(c, int(SegClass::kChoroid)) << "non-choroid below band at x=" << x;
        }
      }
      ASSERT_EQ(phase, 2) << "column " << x << " never reached choroid";
    }
  }
}

TEST(Phantom, BiomarkersPresentWhenSampled) {
  PhantomParams p = PhantomParams::source_defaults(5);
  p.ped_probability = 1.0;
  p.srf_probability = 1.0;
  for (int subj = 0; subj < 10; ++subj) {
    Sample s = generate_sample(p, subj);
    EXPECT_GT((s.mask == int(SegClass::kSrf)).sum().item<std::int64_t>(), 0);
    EXPECT_GT((s.mask == int(SegClass::kPed)).sum().item<std::int64_t>(), 0);
  }
}

TEST(Phantom, TargetHasHigherHighFrequencyEnergy) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Sample clean = generate_sample(PhantomParams::source_defaults(seed), 0);
    Sample noisy = generate_sample(PhantomParams::target_defaults(seed), 0);
    EXPECT_TRUE(clean.mask.equal(noisy.mask));  // shared geometry
    EXPECT_GT(mean_abs_laplacian(noisy.image), mean_abs_laplacian(clean.image))
        << "seed " << seed;
  }
}

TEST(Phantom, RejectsBadParameters) {
  PhantomParams p = PhantomParams::source_defaults(1);
  p.image_height = 32;
  EXPECT_THROW(generate_sample(p), ConfigError);
  p = PhantomParams::source_defaults(1);
  p.ped_probability = 1.5;
  EXPECT_THROW(generate_sample(p), ConfigError);
  p = PhantomParams::source_defaults(1);
  p.speckle_strength = -0.1;
  EXPECT_THROW(generate_sample(p), ConfigError);
}

TEST(Manifest, SubjectDisjointSplitsAndCounts) {
  fs::path out = temp_dir("splits");
  DatasetManifest m = make_manifest(38, PhantomParams::source_defaults(7),
                                    PhantomParams::target_defaults(7),
                                    {0.6, 0.2, 0.2}, out);
  EXPECT_EQ(m.entries.size(), 76u);
  EXPECT_EQ(m.select(Domain::kSource).size(), 38u);
  EXPECT_EQ(m.select(Domain::kTarget).size(), 38u);

  std::map<int, std::string> subject_split;
  for (const auto& e : m.entries) {
    auto it = subject_split.find(e.subject_id);
    if (it == subject_split.end()) {
      subject_split[e.subject_id] = e.split;
    } else {
      EXPECT_EQ(it->second, e.split) << "subject " << e.subject_id;
    }
    EXPECT_TRUE(fs::exists(m.image_path(e)));
    EXPECT_TRUE(fs::exists(m.mask_path(e)));
  }
  int train = 0, val = 0, test = 0;
  for (auto& [id, split] : subject_split) {
    if (split == "train") ++train;
    if (split == "val") ++val;
    if (split == "test") ++test;
  }
  EXPECT_EQ(train + val + test, 38);
  EXPECT_EQ(train, 23);  // largest-remainder of 38 * (0.6, 0.2, 0.2)
  EXPECT_EQ(val, 8);
  EXPECT_EQ(test, 7);
  fs::remove_all(out);
}

TEST(Manifest, SingleSubjectLandsInOneSplit) {
  fs::path out = temp_dir("single");
  DatasetManifest m = make_manifest(1, PhantomParams::source_defaults(9),
                                    PhantomParams::target_defaults(9),
                                    {0.6, 0.2, 0.2}, out);
  for (const auto& e : m.entries) EXPECT_EQ(e.split, "train");
  fs::remove_all(out);
}

TEST(Manifest, ByteIdenticalAcrossRuns) {
  fs::path out_a = temp_dir("det_a");
  fs::path out_b = temp_dir("det_b");
  make_manifest(3, PhantomParams::source_defaults(21), PhantomParams::target_defaults(21),
                {0.6, 0.2, 0.2}, out_a);
  make_manifest(3, PhantomParams::source_defaults(21), PhantomParams::target_defaults(21),
                {0.6, 0.2, 0.2}, out_b);
  EXPECT_EQ(file_bytes(out_a / "manifest.json"), file_bytes(out_b / "manifest.json"));
  EXPECT_EQ(file_bytes(out_a / "images/source/subj_0000.png"),
            file_bytes(out_b / "images/source/subj_0000.png"));
  fs::remove_all(out_a);
  fs::remove_all(out_b);
}

TEST(Manifest, RefusesNonEmptyDirWithoutOverwrite) {
  fs::path out = temp_dir("refuse");
  std::ofstream(out / "existing.txt") << "x";
  EXPECT_THROW(make_manifest(1, PhantomParams::source_defaults(1),
                             PhantomParams::target_defaults(1), {1.0, 0.0, 0.0}, out),
               DataError);
  EXPECT_NO_THROW(make_manifest(1, PhantomParams::source_defaults(1),
                                PhantomParams::target_defaults(1), {1.0, 0.0, 0.0}, out,
                                /*overwrite=*/true));
  fs::remove_all(out);
}

TEST(Manifest, RejectsBadRatios) {
  fs::path out = temp_dir("ratios");
  EXPECT_THROW(make_manifest(2, PhantomParams::source_defaults(1),
                             PhantomParams::target_defaults(1), {0.5, 0.2, 0.2}, out),
               ConfigError);
  fs::remove_all(out);
}

TEST(Dataset, ImageRoundTripThroughPng) {
  fs::path out = temp_dir("roundtrip");
  Sample s = generate_sample(PhantomParams::target_defaults(2), 0);
  save_image(out / "img.png", s.image);
  save_mask(out / "mask.png", s.mask);
  torch::Tensor img = load_image(out / "img.png");
  torch::Tensor mask = load_mask(out / "mask.png");
  EXPECT_TRUE(mask.equal(s.mask));
  // 16-bit quantization error bound: half a step of 2/65535
  EXPECT_LE((img - s.image).abs().max().item<double>(), 1.0 / 65535.0 + 1e-7);
  // re-save is bit-stable
  save_image(out / "img2.png", img);
  EXPECT_EQ(file_bytes(out / "img.png"), file_bytes(out / "img2.png"));
  fs::remove_all(out);
}

TEST(Dataset, AuditLogRecordsReads) {
  fs::path out = temp_dir("audit");
  make_manifest(1, PhantomParams::source_defaults(4), PhantomParams::target_defaults(4),
                {1.0, 0.0, 0.0}, out);
  DatasetManifest m = load_manifest(out / "manifest.json");
  FileAuditLog audit;
  audit.set_phase("probe");
  load_sample(m, m.entries.front(), &audit);
  ASSERT_EQ(audit.entries().size(), 2u);
  EXPECT_EQ(audit.entries()[0].phase, "probe");
  fs::remove_all(out);
}
