#include "batchinfer/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "batchinfer/dataset.hpp"
#include "batchinfer/job_spec.hpp"
#include "batchinfer/json_schema.hpp"
#include "batchinfer/report.hpp"
#include "batchinfer/runner.hpp"

namespace batchinfer {

namespace fs = std::filesystem;

namespace {

void configure_logging() {
  const char* level = std::getenv("BATCHINFER_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
}

std::string verdict_text(const JobVerdict& v) {
  switch (v.state) {
    case Verdict::Completed: return "completed";
    case Verdict::Running: return "incomplete";
    case Verdict::FailedUnretryable:
      return fmt::format("failed ({} on {})", v.failure ? to_string(*v.failure) : "unknown", v.node);
  }
  return "?";
}

void print_integrity(const IntegrityReport& r, std::ostream& out) {
  out << (r.passed() ? "PASS" : "FAIL") << ": " << r.total_rows << "/" << r.expected_rows << " rows in "
      << r.shard_files << " shard files, " << r.missing.size() << " missing, " << r.duplicates.size()
      << " duplicate, " << r.error_rows() << " error rows\n";
}

int cmd_run(const fs::path& job_path, const std::optional<fs::path>& scenario_path, const fs::path& out_dir,
            std::optional<std::uint64_t> seed, std::optional<double> time_scale, std::ostream& out,
            std::ostream& err) {
  RunOptions options;
  try {
    options.job = load_job_spec(job_path);
    if (scenario_path) options.scenario = load_scenario(*scenario_path);
  } catch (const ConfigurationError& e) {
    err << e.what() << "\n";
    return kExitSchema;
  } catch (const IoError& e) {
    err << e.what() << "\n";
    return kExitSchema;
  }
  options.out_dir = out_dir;
  options.seed = seed;
  options.time_scale = time_scale;

  RunResult result;
  try {
    result = run_job(options);
  } catch (const ConfigurationError& e) {
    err << e.what() << "\n";
    return kExitSchema;
  }
  out << "verdict: " << verdict_text(result.verdict) << "\n";
  print_integrity(result.integrity, out);
  out << result.summary.to_json().dump(2) << "\n";
  return result.exit_code;
}

int cmd_gen_data(std::uint64_t size, const fs::path& out_dir, std::uint64_t seed, std::uint64_t payload_bytes,
                 std::uint64_t records_per_file, std::ostream& out) {
  const auto manifest = generate_dataset(size, payload_bytes, seed, out_dir, records_per_file);
  out << "wrote " << manifest.dataset_size << " records in " << manifest.files.size() << " files to "
      << out_dir.string() << "\n";
  out << "manifest sha256: " << dataset_fingerprint(out_dir) << "\n";
  return kExitOk;
}

int cmd_verify(const std::optional<fs::path>& run_dir, std::optional<fs::path> sink,
               std::optional<std::uint64_t> size, std::ostream& out, std::ostream& err) {
  if (run_dir) {
    const auto run = nlohmann::json::parse(read_text_file(*run_dir / "run.json"));
    const auto job = nlohmann::json::parse(read_text_file(*run_dir / "job.json"));
    size = run.at("dataset_size").get<std::uint64_t>();
    sink = *run_dir / job.at("writer").at("output_path").get<std::string>();
  }
  if (!sink || !size) {
    err << "verify needs --run, or --sink with --size\n";
    return kExitSchema;
  }
  const auto report = verify_output(*size, *sink);
  print_integrity(report, out);
  if (!report.passed()) out << report.to_json().dump(2) << "\n";
  return report.passed() ? kExitOk : kExitIntegrity;
}

int cmd_report(const fs::path& run_dir, const std::optional<fs::path>& baseline_dir, TimestampMs window_ms,
               const std::optional<fs::path>& plot, std::ostream& out) {
  const RunReport run = load_run_report(run_dir, window_ms);
  out << run.summary.to_json().dump(2) << "\n";
  std::optional<RunReport> baseline;
  if (baseline_dir) {
    baseline = load_run_report(*baseline_dir, window_ms);
    const double ratio = speedup(run.summary, baseline->summary);
    out << fmt::format("speedup: {:.3f}x (baseline JCT {} ms / run JCT {} ms)\n", ratio,
                       baseline->summary.jct_ms, run.summary.jct_ms);
    if (baseline->summary.qps_mean > 0) {
      out << fmt::format("qps ratio: {:.3f}\n", run.summary.qps_mean / baseline->summary.qps_mean);
    }
  }
  if (plot) {
    std::ofstream svg(*plot, std::ios::trunc);
    if (!svg) throw IoError("cannot write " + plot->string());
    svg << render_svg(run, baseline ? &*baseline : nullptr);
    out << "plot: " << plot->string() << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  configure_logging();
  CLI::App app{"Elastic batch inference runner"};
  app.require_subcommand(1);

  fs::path job_path, out_dir;
  std::optional<fs::path> scenario_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> time_scale;
  auto* run = app.add_subcommand("run", "Run a job and write a run directory");
  run->add_option("--job", job_path, "Job spec (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--scenario", scenario_path, "Cluster scenario (JSON)")->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Run directory")->required();
  run->add_option("--seed", seed, "Seed (defaults to the scenario seed)");
  run->add_option("--time-scale", time_scale, "Multiplier on scripted event times")->check(CLI::PositiveNumber);

  std::uint64_t size = 0, data_seed = 0, payload_bytes = 32, per_file = kDefaultRecordsPerFile;
  fs::path data_out;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--size", size, "Number of records")->required();
  gen->add_option("--out", data_out, "Dataset directory")->required();
  gen->add_option("--seed", data_seed, "Payload seed");
  gen->add_option("--payload-bytes", payload_bytes, "Bytes per payload");
  gen->add_option("--records-per-file", per_file, "Records per data file")->check(CLI::PositiveNumber);

  std::optional<fs::path> verify_run, verify_sink;
  std::optional<std::uint64_t> verify_size;
  auto* verify = app.add_subcommand("verify", "Check exactly-once output integrity");
  verify->add_option("--run", verify_run, "Run directory")->check(CLI::ExistingDirectory);
  verify->add_option("--sink", verify_sink, "Output directory")->check(CLI::ExistingDirectory);
  verify->add_option("--size", verify_size, "Dataset size (with --sink)");

  fs::path report_run;
  std::optional<fs::path> report_baseline, plot;
  TimestampMs window_ms = 1000;
  auto* report = app.add_subcommand("report", "Summarize a run, compare with a baseline, plot");
  report->add_option("--run", report_run, "Run directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--baseline", report_baseline, "Baseline run directory")->check(CLI::ExistingDirectory);
  report->add_option("--window-ms", window_ms, "Aggregation window")->check(CLI::PositiveNumber);
  report->add_option("--plot", plot, "Write an SVG plot here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << e.what() << "\n" << app.help();
    return kExitSchema;
  }

  try {
    if (run->parsed()) return cmd_run(job_path, scenario_path, out_dir, seed, time_scale, out, err);
    if (gen->parsed()) return cmd_gen_data(size, data_out, data_seed, payload_bytes, per_file, out);
    if (verify->parsed()) return cmd_verify(verify_run, verify_sink, verify_size, out, err);
    if (report->parsed()) return cmd_report(report_run, report_baseline, window_ms, plot, out);
  } catch (const ConfigurationError& e) {
    err << e.what() << "\n";
    return kExitSchema;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitIntegrity;
  }
  return kExitSchema;
}

}  // namespace batchinfer
