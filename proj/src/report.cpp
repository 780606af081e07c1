#include "batchinfer/report.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <memory>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "batchinfer/dataset.hpp"
#include "batchinfer/json_schema.hpp"

namespace batchinfer {

namespace fs = std::filesystem;

RunReport load_run_report(const fs::path& run_dir, TimestampMs window_ms) {
  RunReport r;
  r.run_dir = run_dir;
  const auto samples = read_csv(run_dir / "metrics.csv");
  r.summary = summarize(samples, window_ms);
  const fs::path summary_file = run_dir / "summary.json";
  if (fs::exists(summary_file)) {
    // Failovers and error rows are only known to the run itself.
    const auto saved = RunSummary::from_json(nlohmann::json::parse(read_text_file(summary_file)));
    r.summary.failovers = saved.failovers;
    r.summary.error_rows = saved.error_rows;
  }
  r.windows = aggregate(samples, window_ms);
  return r;
}

double speedup(const RunSummary& run, const RunSummary& baseline) {
  if (run.jct_ms == 0 || baseline.jct_ms == 0) return 0.0;
  return static_cast<double>(baseline.jct_ms) / static_cast<double>(run.jct_ms);
}

namespace {

constexpr double kWidth = 800;
constexpr double kPanel = 220;
constexpr double kMargin = 50;
constexpr std::array<const char*, 8> kColors = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string polyline(const std::vector<std::pair<double, double>>& pts, double x_max, double y_max,
                     double top, const char* color) {
  std::string points;
  for (const auto& [x, y] : pts) {
    const double px = kMargin + (x_max > 0 ? x / x_max : 0) * (kWidth - 2 * kMargin);
    const double py = top + kPanel - (y_max > 0 ? y / y_max : 0) * kPanel;
    points += fmt::format("{:.1f},{:.1f} ", px, py);
  }
  return fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", color, points);
}

std::string axes(double top, const std::string& label, double y_max) {
  return fmt::format(
      "<rect x=\"{0}\" y=\"{1}\" width=\"{2}\" height=\"{3}\" fill=\"none\" stroke=\"#999\"/>\n"
      "<text x=\"{0}\" y=\"{4}\" font-size=\"12\">{5} (max {6:.4g})</text>\n",
      kMargin, top, kWidth - 2 * kMargin, kPanel, top - 6, label, y_max);
}

std::string legend(double x, double y, const std::string& text, const char* color) {
  return fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{}\">{}</text>\n", x, y, color, text);
}

}  // namespace

std::string render_svg(const RunReport& run, const RunReport* baseline) {
  double x_max = 0, qps_max = 0;
  auto extent = [&](const RunReport& r) {
    for (const auto& w : r.windows) {
      x_max = std::max(x_max, static_cast<double>(w.end) / 1000.0);
      qps_max = std::max(qps_max, w.qps);
    }
  };
  extent(run);
  if (baseline) extent(*baseline);

  const double top1 = kMargin;
  const double top2 = kMargin * 2 + kPanel;
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      kWidth, top2 + kPanel + kMargin);
  svg += axes(top1, "QPS over time (s)", qps_max);

  auto qps_points = [](const RunReport& r) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& w : r.windows) pts.emplace_back(static_cast<double>(w.end) / 1000.0, w.qps);
    return pts;
  };
  svg += polyline(qps_points(run), x_max, qps_max, top1, kColors[0]);
  svg += legend(kWidth - 260, top1 + 16, run.run_dir.filename().string(), kColors[0]);
  if (baseline) {
    svg += polyline(qps_points(*baseline), x_max, qps_max, top1, kColors[1]);
    svg += legend(kWidth - 260, top1 + 30, baseline->run_dir.filename().string() + " (baseline)", kColors[1]);
  }

  std::vector<std::string> stages;
  for (const auto& w : run.windows) {
    for (const auto& [name, _] : w.mean) {
      if (name.rfind(series::kQueuePrefix, 0) == 0 && std::find(stages.begin(), stages.end(), name) == stages.end()) {
        stages.push_back(name);
      }
    }
  }
  svg += axes(top2, "mean queue occupancy", 1.0);
  for (std::size_t i = 0; i < stages.size(); ++i) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& w : run.windows) {
      auto it = w.mean.find(stages[i]);
      pts.emplace_back(static_cast<double>(w.end) / 1000.0, it == w.mean.end() ? 0.0 : it->second);
    }
    const char* color = kColors[i % kColors.size()];
    svg += polyline(pts, x_max, 1.0, top2, color);
    svg += legend(kWidth - 260, top2 + 16 + 14 * static_cast<double>(i), stages[i], color);
  }
  svg += "</svg>\n";
  return svg;
}

std::string dataset_fingerprint(const fs::path& dataset_dir) {
  const DatasetManifest manifest = load_manifest(dataset_dir);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("sha256 unavailable");
  auto feed = [&](const fs::path& p) {
    const std::string bytes = read_text_file(p);
    EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size());
  };
  feed(manifest.base_dir / kManifestName);
  for (const auto& f : manifest.files) feed(manifest.base_dir / f.file);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

}  // namespace batchinfer
