#include "batchinfer/sink.hpp"

#include <unistd.h>

#include <atomic>
#include <fstream>

#include <fmt/format.h>

#include "batchinfer/dataset.hpp"

namespace batchinfer {

namespace fs = std::filesystem;

std::string ResultRecord::payload() const {
  std::string out;
  for (const auto& s : segments) out += s;
  return out;
}

nlohmann::ordered_json to_json(const ResultRecord& row) {
  nlohmann::ordered_json j;
  j["record_id"] = row.record_id;
  j["origin_record_id"] = row.origin_record_id;
  j["status"] = row.ok() ? "ok" : "error";
  if (row.error) {
    j["error"] = {{"kind", to_string(row.error->kind)}, {"message", row.error->message}};
  } else {
    j["error"] = nullptr;
  }
  auto segments = nlohmann::ordered_json::array();
  for (const auto& s : row.segments) segments.push_back(base64_encode(s));
  j["segments"] = std::move(segments);
  j["shard_id"] = row.shard_id;
  j["attempt"] = row.attempt;
  j["worker_id"] = row.worker_id;
  return j;
}

ResultRecord result_from_json(const nlohmann::json& j) {
  ResultRecord r;
  r.record_id = j.at("record_id").get<RecordId>();
  r.origin_record_id = j.at("origin_record_id").get<RecordId>();
  const auto status = j.at("status").get<std::string>();
  if (status != "ok" && status != "error") throw IoError("bad status '" + status + "'");
  if (status == "error") {
    const auto& e = j.at("error");
    const auto kind = parse_tolerable_error(e.at("kind").get<std::string>());
    if (!kind) throw IoError("bad error kind");
    r.error = TolerableError{*kind, e.at("message").get<std::string>()};
  }
  for (const auto& s : j.at("segments")) r.segments.push_back(base64_decode(s.get<std::string>()));
  r.shard_id = j.at("shard_id").get<ShardId>();
  r.attempt = j.at("attempt").get<std::uint32_t>();
  r.worker_id = j.at("worker_id").get<std::string>();
  return r;
}

void validate_shard_output(const ShardOutput& output) {
  if (output.rows.size() != output.range.size()) {
    throw ProtocolError(fmt::format("shard {}: {} rows for a range of {}", output.shard_id,
                                    output.rows.size(), output.range.size()));
  }
  RecordId expected = output.range.start;
  for (const auto& row : output.rows) {
    if (row.record_id != expected) {
      throw ProtocolError(fmt::format("shard {}: expected record {}, found {}", output.shard_id,
                                      expected, row.record_id));
    }
    ++expected;
  }
}

std::string shard_file_name(ShardId id) { return fmt::format("shard-{}.jsonl", id); }

CommitResult commit_shard(const ShardOutput& output, const fs::path& sink_dir,
                          CommitKillPoint kill_point) {
  validate_shard_output(output);
  const fs::path final_path = sink_dir / shard_file_name(output.shard_id);
  if (fs::exists(final_path)) return CommitResult::AlreadyCommitted;

  static std::atomic<std::uint64_t> counter{0};
  const fs::path staging_dir = sink_dir / ".staging";
  std::error_code ec;
  fs::create_directories(staging_dir, ec);
  if (ec) throw IoError("cannot create " + staging_dir.string() + ": " + ec.message());
  const fs::path staging =
      staging_dir / fmt::format("shard-{}.a{}.{}.{}.tmp", output.shard_id, output.attempt,
                                static_cast<long>(::getpid()), counter.fetch_add(1));
  {
    std::ofstream out(staging, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open staging file " + staging.string());
    for (const auto& row : output.rows) out << to_json(row).dump() << '\n';
    out.flush();
    if (!out) throw IoError("staging write failed for " + staging.string());
  }
  if (kill_point == CommitKillPoint::AfterStaging) {
    throw SimulatedCrash("crash between staging and publish of shard " +
                         std::to_string(output.shard_id));
  }

  fs::create_hard_link(staging, final_path, ec);
  std::error_code ignored;
  fs::remove(staging, ignored);
  if (ec == std::errc::file_exists) return CommitResult::AlreadyCommitted;
  if (ec) throw IoError("cannot publish " + final_path.string() + ": " + ec.message());
  return CommitResult::Committed;
}

std::vector<ResultRecord> read_shard_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<ResultRecord> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      rows.push_back(result_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ": " + e.what());
    }
  }
  return rows;
}

std::uint64_t IntegrityReport::error_rows() const {
  std::uint64_t n = 0;
  for (const auto& [_, count] : errors_by_kind) n += count;
  return n;
}

bool IntegrityReport::passed() const {
  return missing.empty() && duplicates.empty() && out_of_range.empty() && malformed_files.empty() &&
         total_rows == expected_rows;
}

nlohmann::json IntegrityReport::to_json() const {
  nlohmann::json errors = nlohmann::json::object();
  for (const auto& [kind, count] : errors_by_kind) errors[std::string(to_string(kind))] = count;
  return {{"pass", passed()},
          {"expected_rows", expected_rows},
          {"total_rows", total_rows},
          {"shard_files", shard_files},
          {"missing", missing},
          {"duplicates", duplicates},
          {"out_of_range", out_of_range},
          {"malformed_files", malformed_files},
          {"error_rows", error_rows()},
          {"errors_by_kind", std::move(errors)}};
}

IntegrityReport verify_output(std::uint64_t dataset_size, const fs::path& sink_dir) {
  IntegrityReport report;
  report.expected_rows = dataset_size;
  std::vector<std::uint32_t> seen(static_cast<std::size_t>(dataset_size), 0);
  if (fs::is_directory(sink_dir)) {
    for (const auto& entry : fs::directory_iterator(sink_dir)) {
      const std::string name = entry.path().filename().string();
      if (!entry.is_regular_file() || !name.starts_with("shard-") || !name.ends_with(".jsonl")) continue;
      ++report.shard_files;
      std::vector<ResultRecord> rows;
      try {
        rows = read_shard_file(entry.path());
      } catch (const std::exception&) {
        report.malformed_files.push_back(name);
        continue;
      }
      for (const auto& row : rows) {
        ++report.total_rows;
        if (row.error) ++report.errors_by_kind[row.error->kind];
        if (row.record_id >= dataset_size) {
          report.out_of_range.push_back(row.record_id);
          continue;
        }
        if (++seen[static_cast<std::size_t>(row.record_id)] == 2) report.duplicates.push_back(row.record_id);
      }
    }
  }
  for (RecordId id = 0; id < dataset_size; ++id) {
    if (seen[static_cast<std::size_t>(id)] == 0) report.missing.push_back(id);
  }
  std::sort(report.duplicates.begin(), report.duplicates.end());
  std::sort(report.malformed_files.begin(), report.malformed_files.end());
  return report;
}

}  // namespace batchinfer
