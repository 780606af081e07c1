#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "batchinfer/types.hpp"

namespace batchinfer {

std::string base64_encode(std::string_view bytes);
// Throws IoError on malformed input.
std::string base64_decode(std::string_view text);

struct DatasetFile {
  std::string file;  // relative to the manifest directory
  RecordId start = 0;
  RecordId end = 0;
};

struct DatasetManifest {
  std::uint64_t dataset_size = 0;
  std::uint64_t payload_bytes = 0;
  std::uint64_t seed = 0;
  std::vector<DatasetFile> files;
  // Directory the manifest was loaded from; file paths are relative to it.
  std::filesystem::path base_dir;

  nlohmann::json to_json() const;
};

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr std::uint64_t kDefaultRecordsPerFile = 100'000;

// Deterministic payload of record `id`.
std::string synthetic_payload(std::uint64_t seed, RecordId id, std::uint64_t payload_bytes);

// Writes part-NNNNN.jsonl files of at most `records_per_file` lines plus
// manifest.json into `out_dir`. Throws IoError if the directory is unwritable.
DatasetManifest generate_dataset(std::uint64_t size, std::uint64_t payload_bytes, std::uint64_t seed,
                                 const std::filesystem::path& out_dir,
                                 std::uint64_t records_per_file = kDefaultRecordsPerFile);

// Accepts a manifest file or a directory containing one.
DatasetManifest load_manifest(const std::filesystem::path& path);

struct LoadedRecord {
  RecordId id = 0;
  std::string payload;
  // Set when this line could not be parsed.
  std::optional<TolerableError> error;
};

// A whole file backing the requested range is unavailable.
class FetchFailure : public IoError {
 public:
  using IoError::IoError;
};

// Range reader over a file-backed dataset. Safe to share between threads;
// per-file line offsets are indexed on first access.
class DatasetReader {
 public:
  explicit DatasetReader(DatasetManifest manifest);

  const DatasetManifest& manifest() const { return manifest_; }

  // Records [start, end) in order. Throws std::out_of_range if the range is
  // outside the dataset and FetchFailure if a backing file is missing.
  std::vector<LoadedRecord> read_range(RecordId start, RecordId end) const;

 private:
  std::shared_ptr<const std::vector<std::uint64_t>> offsets_for(std::size_t file_index) const;

  DatasetManifest manifest_;
  mutable std::mutex mu_;
  mutable std::map<std::size_t, std::shared_ptr<const std::vector<std::uint64_t>>> offsets_;
};

}  // namespace batchinfer
