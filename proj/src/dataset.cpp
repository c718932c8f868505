#include "accut/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "accut/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace accut {

std::vector<ManifestEntry> DatasetManifest::select(Domain domain,
                                                   const std::string& split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.domain != domain) continue;
    if (!split.empty() && e.split != split) continue;
    out.push_back(e);
  }
  return out;
}

torch::Tensor load_image(const fs::path& path, FileAuditLog* audit) {
  if (audit) audit->record(path);
  auto png = png_io::read_gray16(path);
  torch::Tensor t = torch::empty({1, png.height, png.width}, torch::kFloat32);
  auto a = t.accessor<float, 3>();
  for (int y = 0; y < png.height; ++y) {
    for (int x = 0; x < png.width; ++x) {
      a[0][y][x] = float(png.pixels[std::size_t(y) * png.width + x]) / 65535.0f * 2.0f - 1.0f;
    }
  }
  return t;
}

torch::Tensor load_mask(const fs::path& path, FileAuditLog* audit) {
  if (audit) audit->record(path);
  auto png = png_io::read_gray8(path);
  torch::Tensor t = torch::empty({png.height, png.width}, torch::kInt64);
  auto a = t.accessor<std::int64_t, 2>();
  for (int y = 0; y < png.height; ++y) {
    for (int x = 0; x < png.width; ++x) {
      std::uint8_t v = png.pixels[std::size_t(y) * png.width + x];
      if (v >= kNumClasses) throw DataError("mask value out of range in " + path.string());
      a[y][x] = v;
    }
  }
  return t;
}

void save_image(const fs::path& path, const torch::Tensor& image) {
  torch::Tensor img = image.detach().to(torch::kFloat32).contiguous();
  if (img.dim() == 3) img = img.squeeze(0);
  if (img.dim() != 2) throw ShapeError("save_image expects [H,W] or [1,H,W]");
  png_io::Gray16 png;
  png.height = int(img.size(0));
  png.width = int(img.size(1));
  png.pixels.resize(std::size_t(png.height) * png.width);
  auto a = img.accessor<float, 2>();
  for (int y = 0; y < png.height; ++y) {
    for (int x = 0; x < png.width; ++x) {
      double v01 = (double(a[y][x]) + 1.0) * 0.5;
      long q = std::lround(std::clamp(v01, 0.0, 1.0) * 65535.0);
      png.pixels[std::size_t(y) * png.width + x] = std::uint16_t(q);
    }
  }
  png_io::write_gray16(path, png);
}

void save_mask(const fs::path& path, const torch::Tensor& mask) {
  torch::Tensor m = mask.detach().to(torch::kInt64).contiguous();
  if (m.dim() != 2) throw ShapeError("save_mask expects [H,W]");
  png_io::Gray8 png;
  png.height = int(m.size(0));
  png.width = int(m.size(1));
  png.pixels.resize(std::size_t(png.height) * png.width);
  auto a = m.accessor<std::int64_t, 2>();
  for (int y = 0; y < png.height; ++y) {
    for (int x = 0; x < png.width; ++x) {
      auto v = a[y][x];
      if (v < 0 || v >= kNumClasses) throw DataError("mask value out of range on save");
      png.pixels[std::size_t(y) * png.width + x] = std::uint8_t(v);
    }
  }
  png_io::write_gray8(path, png);
}

Sample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry,
                   FileAuditLog* audit, bool with_mask) {
  Sample s;
  s.image = load_image(manifest.image_path(entry), audit);
  if (with_mask) s.mask = load_mask(manifest.mask_path(entry), audit);
  s.domain = entry.domain;
  s.subject_id = entry.subject_id;
  return s;
}

namespace {

std::vector<std::string> assign_splits(int n_subjects,
                                       const std::array<double, 3>& ratios,
                                       std::uint64_t seed) {
  static const std::array<std::string, 3> names{"train", "val", "test"};
  // Largest-remainder allocation, then a seeded shuffle of subject ids.
  std::array<int, 3> counts{};
  std::array<double, 3> frac{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double ideal = ratios[i] * n_subjects;
    counts[i] = int(std::floor(ideal));
    frac[i] = ideal - counts[i];
    assigned += counts[i];
  }
  for (int left = n_subjects - assigned; left > 0; --left) {
    int best = int(std::max_element(frac.begin(), frac.end()) - frac.begin());
    ++counts[best];
    frac[best] = -1.0;
  }
  std::vector<int> ids(n_subjects);
  for (int i = 0; i < n_subjects; ++i) ids[i] = i;
  std::mt19937_64 eng(mix_seed(seed, 0x51));
  std::shuffle(ids.begin(), ids.end(), eng);
  std::vector<std::string> split(n_subjects);
  int k = 0;
  for (int s = 0; s < 3; ++s) {
    for (int j = 0; j < counts[s]; ++j) split[ids[k++]] = names[s];
  }
  return split;
}

std::string subject_file(int subject_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "subj_%04d.png", subject_id);
  return buf;
}

}  // namespace

DatasetManifest make_manifest(int n_subjects, const PhantomParams& params_source,
                              const PhantomParams& params_target,
                              const std::array<double, 3>& split_ratios,
                              const fs::path& out_dir, bool overwrite,
                              const std::string& config_hash) {
  if (n_subjects < 1) throw ConfigError("n_subjects must be >= 1");
  double ratio_sum = split_ratios[0] + split_ratios[1] + split_ratios[2];
  if (std::abs(ratio_sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !overwrite) {
    throw DataError("output directory " + out_dir.string() +
                    " is not empty (pass overwrite to replace)");
  }

  auto splits = assign_splits(n_subjects, split_ratios, params_source.seed);

  DatasetManifest manifest;
  manifest.seed = params_source.seed;
  manifest.config_hash = config_hash;
  manifest.root = out_dir;

  for (Domain domain : {Domain::kSource, Domain::kTarget}) {
    const auto& params = domain == Domain::kSource ? params_source : params_target;
    std::string dname = domain_name(domain);
    fs::create_directories(out_dir / "images" / dname);
    fs::create_directories(out_dir / "masks" / dname);
    for (int subj = 0; subj < n_subjects; ++subj) {
      Sample s = generate_sample(params, subj);
      ManifestEntry e;
      e.path = "images/" + dname + "/" + subject_file(subj);
      e.mask_path = "masks/" + dname + "/" + subject_file(subj);
      e.domain = domain;
      e.subject_id = subj;
      e.split = splits[subj];
      save_image(out_dir / e.path, s.image);
      save_mask(out_dir / e.mask_path, s.mask);
      manifest.entries.push_back(std::move(e));
    }
  }

  write_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& file) {
  json j;
  j["seed"] = manifest.seed;
  j["config_hash"] = manifest.config_hash;
  j["entries"] = json::array();
  for (const auto& e : manifest.entries) {
    j["entries"].push_back({{"path", e.path},
                            {"mask_path", e.mask_path},
                            {"domain", domain_name(e.domain)},
                            {"subject_id", e.subject_id},
                            {"split", e.split}});
  }
  std::ofstream out(file);
  if (!out) throw DataError("cannot write manifest " + file.string());
  out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const fs::path& manifest_file) {
  std::ifstream in(manifest_file);
  if (!in) throw DataError("cannot open manifest " + manifest_file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("invalid manifest " + manifest_file.string() + ": " + e.what());
  }
  DatasetManifest manifest;
  manifest.root = manifest_file.parent_path();
  manifest.seed = j.value("seed", std::uint64_t(0));
  manifest.config_hash = j.value("config_hash", "");
  for (const auto& je : j.at("entries")) {
    ManifestEntry e;
    e.path = je.at("path").get<std::string>();
    e.mask_path = je.at("mask_path").get<std::string>();
    std::string d = je.at("domain").get<std::string>();
    if (d == "source") {
      e.domain = Domain::kSource;
    } else if (d == "target") {
      e.domain = Domain::kTarget;
    } else {
      throw DataError("unknown domain '" + d + "' in manifest");
    }
    e.subject_id = je.at("subject_id").get<int>();
    e.split = je.at("split").get<std::string>();
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

}  // namespace accut
