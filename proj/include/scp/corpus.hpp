#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scp/tensor.hpp"

namespace scp {

struct CorpusRecord {
  LatentImage latent;
  LabelMask mask;
  std::string id;

  /// Mask downsampled onto the latent token grid.
  LabelMask token_mask() const { return downsample_mask(mask, latent.height(), latent.width()); }
};

/// Throws DataError naming the record id when the mask is not a common integer
/// multiple of the latent grid.
void validate_record(const CorpusRecord& record);

struct ManifestEntry {
  std::filesystem::path latent_path;  // resolved against the manifest directory
  std::filesystem::path mask_path;
  std::string id;
};

/// Parses a tab-separated `latent_path<TAB>mask_path<TAB>id` manifest. Blank lines are skipped.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);

/// Relative manifest paths that do not exist are looked up under $SCP_DATA_DIR.
std::filesystem::path resolve_data_path(const std::filesystem::path& path);

/// Single-consumer stream over the records of a manifest, in manifest order.
class CorpusReader {
 public:
  explicit CorpusReader(const std::filesystem::path& manifest, int ignore_id = kDefaultIgnoreId);

  std::optional<CorpusRecord> next();
  std::size_t size() const noexcept { return entries_.size(); }
  /// crc32 chained over every latent and mask file read so far.
  std::uint32_t checksum() const noexcept { return checksum_; }

 private:
  std::vector<ManifestEntry> entries_;
  std::size_t cursor_ = 0;
  int ignore_id_;
  std::uint32_t checksum_ = 0;
};

std::vector<CorpusRecord> load_corpus(const std::filesystem::path& manifest, int ignore_id = kDefaultIgnoreId);

/// Writes `<dir>/latents/<id>.npy`, `<dir>/masks/<id>.npy` and a manifest with relative paths.
void write_corpus(const std::filesystem::path& dir, const std::string& manifest_name,
                  const std::vector<CorpusRecord>& records);

}  // namespace scp
