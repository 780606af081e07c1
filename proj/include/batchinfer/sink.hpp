#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "batchinfer/types.hpp"

namespace batchinfer {

// One output row per input record.
struct ResultRecord {
  RecordId record_id = 0;
  RecordId origin_record_id = 0;
  std::optional<TolerableError> error;
  // Fan-out outputs reaching the ensemble point, in (node, lineage) order.
  std::vector<std::string> segments;
  ShardId shard_id = 0;
  std::uint32_t attempt = 0;
  WorkerId worker_id;

  bool ok() const { return !error.has_value(); }
  std::string payload() const;
  friend bool operator==(const ResultRecord&, const ResultRecord&) = default;
};

// Row schema, keys in this order:
//   record_id, origin_record_id, status ("ok"|"error"),
//   error (null | {"kind", "message"}), segments ([base64...]),
//   shard_id, attempt, worker_id
nlohmann::ordered_json to_json(const ResultRecord& row);
ResultRecord result_from_json(const nlohmann::json& j);

struct ShardOutput {
  ShardId shard_id = 0;
  std::uint32_t attempt = 0;
  RecordRange range;
  std::vector<ResultRecord> rows;
};

// Throws ProtocolError unless rows are ascending and exactly cover the range.
void validate_shard_output(const ShardOutput& output);

enum class CommitResult { Committed, AlreadyCommitted };

std::string shard_file_name(ShardId id);

// Test hook: where to "crash" inside commit_shard.
enum class CommitKillPoint { None, AfterStaging };

class SimulatedCrash : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Writes the rows to a private staging file, then publishes it as
// shard-<id>.jsonl with a hard link, which fails if the name exists: the
// first committer wins and later attempts leave the published file alone.
// Throws IoError if staging fails (retryable).
CommitResult commit_shard(const ShardOutput& output, const std::filesystem::path& sink_dir,
                          CommitKillPoint kill_point = CommitKillPoint::None);

std::vector<ResultRecord> read_shard_file(const std::filesystem::path& path);

struct IntegrityReport {
  std::uint64_t expected_rows = 0;
  std::uint64_t total_rows = 0;
  std::uint64_t shard_files = 0;
  std::vector<RecordId> missing;
  std::vector<RecordId> duplicates;
  std::vector<RecordId> out_of_range;
  std::vector<std::string> malformed_files;
  std::map<TolerableErrorKind, std::uint64_t> errors_by_kind;

  std::uint64_t error_rows() const;
  bool passed() const;
  nlohmann::json to_json() const;
};

// Scans every published shard file (staging leftovers are ignored).
IntegrityReport verify_output(std::uint64_t dataset_size, const std::filesystem::path& sink_dir);

}  // namespace batchinfer
