#pragma once

#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "accut/common.hpp"
#include "accut/phantom.hpp"

namespace accut {

// Records every file the data layer touches, tagged with the pipeline phase
// active at the time. The UDA harness uses this to prove that no target-domain
// mask is read during training or model selection.
class FileAuditLog {
 public:
  struct Entry {
    std::string phase;
    std::string path;
  };

  void set_phase(std::string phase) { phase_ = std::move(phase); }
  const std::string& phase() const { return phase_; }
  void record(const std::filesystem::path& p) { entries_.push_back({phase_, p.string()}); }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::string phase_ = "unspecified";
  std::vector<Entry> entries_;
};

struct ManifestEntry {
  std::string path;       // image, relative to the manifest file
  std::string mask_path;  // mask, relative to the manifest file
  Domain domain = Domain::kSource;
  int subject_id = 0;
  std::string split;  // train | val | test
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::filesystem::path root;  // directory the relative paths resolve against

  std::vector<ManifestEntry> select(Domain domain, const std::string& split = "") const;
  std::filesystem::path image_path(const ManifestEntry& e) const { return root / e.path; }
  std::filesystem::path mask_path(const ManifestEntry& e) const { return root / e.mask_path; }
};

// Image <-> 16-bit PNG and mask <-> 8-bit PNG conversions.
torch::Tensor load_image(const std::filesystem::path& path, FileAuditLog* audit = nullptr);
torch::Tensor load_mask(const std::filesystem::path& path, FileAuditLog* audit = nullptr);
void save_image(const std::filesystem::path& path, const torch::Tensor& image);
void save_mask(const std::filesystem::path& path, const torch::Tensor& mask);

Sample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry,
                   FileAuditLog* audit = nullptr, bool with_mask = true);

// Generates the two-domain phantom dataset on disk and writes manifest.json.
// Subjects are disjoint across splits; both domains of a subject share its
// split. Refuses to write into a non-empty directory unless overwrite is set.
DatasetManifest make_manifest(int n_subjects, const PhantomParams& params_source,
                              const PhantomParams& params_target,
                              const std::array<double, 3>& split_ratios,
                              const std::filesystem::path& out_dir,
                              bool overwrite = false,
                              const std::string& config_hash = "");

DatasetManifest load_manifest(const std::filesystem::path& manifest_file);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& file);

}  // namespace accut
