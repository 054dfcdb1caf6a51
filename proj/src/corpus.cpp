#include "scp/corpus.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "scp/error.hpp"
#include "scp/npy.hpp"

namespace scp {

void validate_record(const CorpusRecord& record) {
  const auto& l = record.latent;
  const auto& m = record.mask;
  try {
    downsample_factor(m.height(), m.width(), l.height(), l.width());
  } catch (const ParameterError&) {
    throw DataError("record '" + record.id + "': mask " + std::to_string(m.height()) + "x" +
                    std::to_string(m.width()) + " is not a common integer multiple of latent " +
                    std::to_string(l.height()) + "x" + std::to_string(l.width()));
  }
}

std::filesystem::path resolve_data_path(const std::filesystem::path& path) {
  if (path.is_absolute() || std::filesystem::exists(path)) return path;
  if (const char* root = std::getenv("SCP_DATA_DIR"); root != nullptr && *root != '\0') {
    auto candidate = std::filesystem::path(root) / path;
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return path;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest) {
  const auto path = resolve_data_path(manifest);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected latent_path<TAB>mask_path<TAB>id");
    }
    entries.push_back({base / fields[0], base / fields[1], fields[2]});
  }
  return entries;
}

CorpusReader::CorpusReader(const std::filesystem::path& manifest, int ignore_id)
    : entries_(read_manifest(manifest)), ignore_id_(ignore_id) {}

std::optional<CorpusRecord> CorpusReader::next() {
  if (cursor_ >= entries_.size()) return std::nullopt;
  const auto& entry = entries_[cursor_++];
  const auto latent_bytes = read_file_bytes(entry.latent_path);
  const auto mask_bytes = read_file_bytes(entry.mask_path);
  checksum_ = crc32_of(latent_bytes, checksum_);
  checksum_ = crc32_of(mask_bytes, checksum_);
  CorpusRecord record;
  record.id = entry.id;
  try {
    record.latent = latent_from_array(decode_npy(latent_bytes));
    record.mask = mask_from_array(decode_npy(mask_bytes), ignore_id_);
  } catch (const FormatError& e) {
    throw FormatError("record '" + entry.id + "': " + e.what());
  } catch (const ShapeError& e) {
    throw DataError("record '" + entry.id + "': " + e.what());
  } catch (const DataError& e) {
    throw DataError("record '" + entry.id + "': " + e.what());
  }
  validate_record(record);
  return record;
}

std::vector<CorpusRecord> load_corpus(const std::filesystem::path& manifest, int ignore_id) {
  CorpusReader reader(manifest, ignore_id);
  std::vector<CorpusRecord> records;
  records.reserve(reader.size());
  while (auto record = reader.next()) records.push_back(std::move(*record));
  return records;
}

void write_corpus(const std::filesystem::path& dir, const std::string& manifest_name,
                  const std::vector<CorpusRecord>& records) {
  std::filesystem::create_directories(dir / "latents");
  std::filesystem::create_directories(dir / "masks");
  std::ofstream manifest(dir / manifest_name, std::ios::trunc);
  if (!manifest) throw IoError("cannot write manifest in " + dir.string());
  for (const auto& r : records) {
    const auto latent_rel = std::filesystem::path("latents") / (r.id + ".npy");
    const auto mask_rel = std::filesystem::path("masks") / (r.id + ".npy");
    write_latent(dir / latent_rel, r.latent);
    write_mask(dir / mask_rel, r.mask);
    manifest << latent_rel.generic_string() << '\t' << mask_rel.generic_string() << '\t' << r.id << '\n';
  }
  if (!manifest) throw IoError("failed writing manifest in " + dir.string());
}

}  // namespace scp
