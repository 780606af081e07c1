#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "batchinfer/dataset.hpp"
#include "batchinfer/json_schema.hpp"
#include "batchinfer/metrics.hpp"
#include "batchinfer/sink.hpp"
#include "test_support.hpp"

using namespace batchinfer;
using batchinfer::testing::TempDir;
using batchinfer::testing::write_file;
namespace fs = std::filesystem;

namespace {

ShardOutput make_output(ShardId id, RecordId start, RecordId end, std::uint32_t attempt = 0,
                        const WorkerId& worker = "n0") {
  ShardOutput out{id, attempt, {start, end}, {}};
  for (RecordId r = start; r < end; ++r) {
    ResultRecord row;
    row.record_id = r;
    row.origin_record_id = r;
    row.segments = {"seg-" + std::to_string(r)};
    row.shard_id = id;
    row.attempt = attempt;
    row.worker_id = worker;
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::size_t count_files(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) n += e.is_regular_file();
  return n;
}

}  // namespace

// ---- dataset ------------------------------------------------------------

TEST(Base64, Rfc4648Vectors) {
  EXPECT_EQ(base64_encode(""), "");
  EXPECT_EQ(base64_encode("f"), "Zg==");
  EXPECT_EQ(base64_encode("fo"), "Zm8=");
  EXPECT_EQ(base64_encode("foo"), "Zm9v");
  EXPECT_EQ(base64_encode("foob"), "Zm9vYg==");
  EXPECT_EQ(base64_encode("fooba"), "Zm9vYmE=");
  EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
  EXPECT_EQ(base64_decode("Zm9vYmE="), "fooba");
  EXPECT_EQ(base64_decode(""), "");
}

TEST(Base64, BinaryRoundTripAndRejectsGarbage) {
  std::string bytes;
  for (int i = 0; i < 256; ++i) bytes.push_back(static_cast<char>(i));
  EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
  EXPECT_THROW(base64_decode("abc"), IoError);
  EXPECT_THROW(base64_decode("a!b="), IoError);
}

TEST(Dataset, PayloadsMatchIndependentOracle) {
  EXPECT_EQ(base64_encode(synthetic_payload(7, 0, 12)), "g+w5oDH3WQp4OlvZ");
  EXPECT_EQ(base64_encode(synthetic_payload(7, 5, 12)), "GvIH1ZcCjvGLzRtD");
  EXPECT_EQ(base64_encode(synthetic_payload(0, 123456, 5)), "r7PaZFE=");
}

TEST(Dataset, GenerateLoadAndReadAcrossFiles) {
  TempDir dir("ds");
  const auto m = generate_dataset(250, 16, 3, dir.path(), 100);
  ASSERT_EQ(m.files.size(), 3u);
  EXPECT_EQ(m.files[2].start, 200u);
  EXPECT_EQ(m.files[2].end, 250u);
  const auto loaded = load_manifest(dir.path());
  EXPECT_EQ(loaded.dataset_size, 250u);
  EXPECT_EQ(loaded.to_json(), m.to_json());

  DatasetReader reader(loaded);
  const auto recs = reader.read_range(95, 205);
  ASSERT_EQ(recs.size(), 110u);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].id, 95 + i);
    EXPECT_FALSE(recs[i].error.has_value());
    EXPECT_EQ(recs[i].payload, synthetic_payload(3, 95 + i, 16));
  }

  // Independent check against the raw line in the file.
  std::ifstream in(dir / "part-00001.jsonl");
  std::string line;
  for (int i = 0; i <= 7; ++i) std::getline(in, line);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j.at("id"), 107);
  EXPECT_EQ(base64_decode(j.at("payload").get<std::string>()), recs[12].payload);

  EXPECT_TRUE(reader.read_range(10, 10).empty());
  EXPECT_THROW(reader.read_range(200, 251), std::out_of_range);
}

TEST(Dataset, SameSeedSameFiles) {
  TempDir a("a"), b("b");
  generate_dataset(50, 8, 9, a.path(), 20);
  generate_dataset(50, 8, 9, b.path(), 20);
  for (const char* f : {"manifest.json", "part-00000.jsonl", "part-00002.jsonl"}) {
    EXPECT_EQ(read_text_file(a / f), read_text_file(b / f)) << f;
  }
}

TEST(Dataset, MissingFileIsFetchFailure) {
  TempDir dir("ds");
  generate_dataset(30, 4, 1, dir.path(), 10);
  fs::remove(dir / "part-00001.jsonl");
  DatasetReader reader(load_manifest(dir / "manifest.json"));
  EXPECT_NO_THROW(reader.read_range(0, 10));
  EXPECT_THROW(reader.read_range(5, 15), FetchFailure);
}

TEST(Dataset, CorruptLineIsParseErrorForThatRecordOnly) {
  TempDir dir("ds");
  generate_dataset(5, 4, 1, dir.path(), 10);
  std::ifstream in(dir / "part-00000.jsonl");
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  in.close();
  lines[2] = "{not json";
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_file(dir / "part-00000.jsonl", text);

  DatasetReader reader(load_manifest(dir.path()));
  const auto recs = reader.read_range(0, 5);
  ASSERT_EQ(recs.size(), 5u);
  ASSERT_TRUE(recs[2].error.has_value());
  EXPECT_EQ(recs[2].error->kind, TolerableErrorKind::ParseError);
  EXPECT_FALSE(recs[1].error.has_value());
  EXPECT_FALSE(recs[3].error.has_value());
}

TEST(Dataset, MalformedManifestIsRejected) {
  TempDir dir("ds");
  write_file(dir / "manifest.json", R"({"dataset_size": "many"})");
  EXPECT_ANY_THROW(load_manifest(dir.path()));
  EXPECT_ANY_THROW(load_manifest(dir / "nowhere"));
}

// ---- sink ---------------------------------------------------------------

TEST(Sink, RowJsonHasFixedKeyOrder) {
  ResultRecord row;
  row.record_id = 4;
  row.origin_record_id = 4;
  row.error = TolerableError{TolerableErrorKind::Timeout, "slow"};
  row.shard_id = 1;
  row.worker_id = "n2";
  EXPECT_EQ(to_json(row).dump(),
            R"({"record_id":4,"origin_record_id":4,"status":"error","error":{"kind":"Timeout","message":"slow"},)"
            R"("segments":[],"shard_id":1,"attempt":0,"worker_id":"n2"})");
  EXPECT_EQ(result_from_json(nlohmann::json::parse(to_json(row).dump())), row);
}

TEST(Sink, ValidateRequiresExactAscendingCover) {
  auto out = make_output(0, 10, 15);
  EXPECT_NO_THROW(validate_shard_output(out));
  std::swap(out.rows[1], out.rows[2]);
  EXPECT_THROW(validate_shard_output(out), ProtocolError);
  out = make_output(0, 10, 15);
  out.rows.pop_back();
  EXPECT_THROW(validate_shard_output(out), ProtocolError);
}

TEST(Sink, FirstCommitterWins) {
  TempDir dir("sink");
  EXPECT_EQ(commit_shard(make_output(3, 30, 40, 0, "n0"), dir.path()), CommitResult::Committed);
  EXPECT_EQ(commit_shard(make_output(3, 30, 40, 1, "n1"), dir.path()), CommitResult::AlreadyCommitted);
  const auto rows = read_shard_file(dir / shard_file_name(3));
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_EQ(rows[0].worker_id, "n0");
  EXPECT_EQ(rows[9].payload(), "seg-39");
  EXPECT_EQ(count_files(dir.path()), 1u);  // no staging leftovers
}

TEST(Sink, RacingCommittersPublishExactlyOnce) {
  for (int round = 0; round < 20; ++round) {
    TempDir dir("race");
    std::atomic<int> committed{0};
    std::vector<std::thread> threads;
    for (int w = 0; w < 4; ++w) {
      threads.emplace_back([&, w] {
        const auto out = make_output(0, 0, 50, static_cast<std::uint32_t>(w), "n" + std::to_string(w));
        if (commit_shard(out, dir.path()) == CommitResult::Committed) ++committed;
      });
    }
    for (auto& t : threads) t.join();
    ASSERT_EQ(committed.load(), 1);
    const auto rows = read_shard_file(dir / shard_file_name(0));
    ASSERT_EQ(rows.size(), 50u);
    // Whole file from a single attempt, never a mix.
    for (const auto& r : rows) ASSERT_EQ(r.worker_id, rows[0].worker_id);
  }
}

TEST(Sink, CrashAfterStagingPublishesNothing) {
  TempDir dir("sink");
  EXPECT_THROW(commit_shard(make_output(2, 0, 5), dir.path(), CommitKillPoint::AfterStaging), SimulatedCrash);
  EXPECT_FALSE(fs::exists(dir / shard_file_name(2)));
  const auto report = verify_output(5, dir.path());
  EXPECT_EQ(report.shard_files, 0u);
  EXPECT_EQ(report.missing.size(), 5u);
  // The retry publishes normally despite the leftover staging file.
  EXPECT_EQ(commit_shard(make_output(2, 0, 5, 1), dir.path()), CommitResult::Committed);
  EXPECT_TRUE(verify_output(5, dir.path()).passed());
}

TEST(Sink, VerifyDetectsMissingDuplicateOutOfRangeAndMalformed) {
  TempDir dir("sink");
  commit_shard(make_output(0, 0, 10), dir.path());
  commit_shard(make_output(1, 10, 20), dir.path());
  auto good = verify_output(20, dir.path());
  EXPECT_TRUE(good.passed());
  EXPECT_EQ(good.total_rows, 20u);
  EXPECT_EQ(good.shard_files, 2u);

  auto report = verify_output(25, dir.path());
  EXPECT_FALSE(report.passed());
  EXPECT_EQ(report.missing, (std::vector<RecordId>{20, 21, 22, 23, 24}));

  commit_shard(make_output(7, 5, 12), dir.path());  // overlaps shards 0 and 1
  commit_shard(make_output(8, 30, 31), dir.path());
  write_file(dir / "shard-9.jsonl", "{\"record_id\": oops}\n");
  report = verify_output(20, dir.path());
  EXPECT_EQ(report.duplicates, (std::vector<RecordId>{5, 6, 7, 8, 9, 10, 11}));
  EXPECT_EQ(report.out_of_range, (std::vector<RecordId>{30}));
  EXPECT_EQ(report.malformed_files, (std::vector<std::string>{"shard-9.jsonl"}));
  EXPECT_FALSE(report.passed());
  EXPECT_EQ(report.to_json()["pass"], false);
}

TEST(Sink, VerifyCountsErrorRowsByKind) {
  TempDir dir("sink");
  auto out = make_output(0, 0, 4);
  out.rows[1].error = TolerableError{TolerableErrorKind::ParseError, "x"};
  out.rows[1].segments.clear();
  out.rows[3].error = TolerableError{TolerableErrorKind::Timeout, "y"};
  commit_shard(out, dir.path());
  const auto report = verify_output(4, dir.path());
  EXPECT_TRUE(report.passed());
  EXPECT_EQ(report.error_rows(), 2u);
  EXPECT_EQ(report.errors_by_kind.at(TolerableErrorKind::ParseError), 1u);
}

// ---- metrics ------------------------------------------------------------

TEST(Metrics, ThroughputOfOneSecondWindow) {
  std::vector<MetricSample> samples;
  for (int i = 0; i < 12; ++i) samples.push_back({static_cast<TimestampMs>(i * 80), "n0", series::kCompletedRecords, 100});
  const auto w = aggregate(samples, 1000);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_DOUBLE_EQ(w[0].completed_records, 1200.0);
  EXPECT_DOUBLE_EQ(w[0].qps, 1200.0);
}

TEST(Metrics, EmptyInputsGiveZeroThroughput) {
  EXPECT_TRUE(aggregate({}, 1000).empty());
  const auto w = aggregate({}, 1000, 2500);
  ASSERT_EQ(w.size(), 3u);
  for (const auto& x : w) EXPECT_EQ(x.qps, 0.0);
  const auto s = summarize({}, 1000);
  EXPECT_EQ(s.qps_mean, 0.0);
  EXPECT_EQ(s.jct_ms, 0u);
  EXPECT_THROW(aggregate({}, 0), ConfigurationError);
}

TEST(Metrics, WindowsPartitionTotals) {
  std::vector<MetricSample> samples;
  RngStream rng(5);
  double total = 0;
  for (int i = 0; i < 500; ++i) {
    const double v = static_cast<double>(rng.uniform_int(1, 50));
    total += v;
    samples.push_back({rng.uniform_int(0, 9999), "n" + std::to_string(i % 3), series::kCompletedRecords, v});
  }
  for (TimestampMs window : {1u, 7u, 250u, 1000u, 20000u}) {
    double sum = 0;
    for (const auto& w : aggregate(samples, window)) sum += w.completed_records;
    EXPECT_DOUBLE_EQ(sum, total) << window;
  }
}

TEST(Metrics, MeansCumulativeShardsAndExecutors) {
  std::vector<MetricSample> s = {
      {100, "n0", "queue.predict", 0.2},     {200, "n1", "queue.predict", 0.6},
      {1100, "n0", "queue.predict", 1.0},    {300, "n0", series::kCompletedShards, 1},
      {1300, "n0", series::kCompletedShards, 2}, {400, "n0", "executors.model", 1},
      {900, "n0", "executors.model", 3},     {500, "n0", series::kUtilization, 0.5},
  };
  const auto w = aggregate(s, 1000);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_DOUBLE_EQ(w[0].mean.at("queue.predict"), 0.4);
  EXPECT_DOUBLE_EQ(w[1].mean.at("queue.predict"), 1.0);
  EXPECT_DOUBLE_EQ(w[0].mean.at("utilization"), 0.5);
  EXPECT_DOUBLE_EQ(w[0].cumulative_shards, 1.0);
  EXPECT_DOUBLE_EQ(w[1].cumulative_shards, 3.0);
  EXPECT_DOUBLE_EQ(w[0].executors.at("n0/model"), 3.0);
}

TEST(Metrics, SummaryUsesLastCommitAsJct) {
  std::vector<MetricSample> s = {
      {500, "n0", series::kCompletedRecords, 100},
      {2000, "n1", series::kCompletedRecords, 300},
      {2500, "n1", series::kRestarts, 2},
      {2600, "n1", "queue.load", 0.3},
  };
  const auto sum = summarize(s, 1000);
  EXPECT_EQ(sum.jct_ms, 2000u);
  EXPECT_EQ(sum.completed_records, 400u);
  EXPECT_DOUBLE_EQ(sum.qps_mean, 200.0);
  EXPECT_EQ(sum.restarts, 2u);
  // Peak is the busiest full window: 300 records in [2000, 3000).
  EXPECT_DOUBLE_EQ(sum.qps_peak, 300.0);
  EXPECT_EQ(RunSummary::from_json(sum.to_json()).to_json(), sum.to_json());
}

TEST(Metrics, CollectorIsLosslessUnderConcurrency) {
  MetricsCollector c;
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&c, t] {
      for (int i = 0; i < 2500; ++i) c.record(i, "n" + std::to_string(t), series::kCompletedRecords, 1);
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(c.snapshot().size(), 10000u);
  EXPECT_DOUBLE_EQ(c.total(series::kCompletedRecords), 10000.0);
  EXPECT_DOUBLE_EQ(c.total_by_worker(series::kCompletedRecords).at("n2"), 2500.0);
}

TEST(Metrics, CsvRoundTrip) {
  TempDir dir("csv");
  std::vector<MetricSample> s = {{0, "n0", "queue.load", 0.125}, {17, "n1", series::kCompletedRecords, 300}};
  write_csv(s, dir / "m.csv");
  const auto back = read_csv(dir / "m.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].worker_id, "n1");
  EXPECT_EQ(back[1].at, 17u);
  EXPECT_DOUBLE_EQ(back[0].value, 0.125);
  EXPECT_EQ(read_text_file(dir / "m.csv").substr(0, 24), "at_ms,worker_id,series,v");
}
