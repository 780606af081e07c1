#include "batchinfer/dataset.hpp"

#include <fstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "batchinfer/json_schema.hpp"
#include "batchinfer/rng.hpp"

namespace batchinfer {

namespace fs = std::filesystem;

std::string base64_encode(std::string_view bytes) {
  if (bytes.empty()) return {};
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.empty()) return {};
  if (text.size() % 4 != 0) throw IoError("malformed base64");
  std::string out(3 * text.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw IoError("malformed base64");
  // EVP_DecodeBlock keeps the bytes produced by '=' padding; drop them.
  std::size_t padding = 0;
  if (text.back() == '=') ++padding;
  if (text.size() >= 2 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json files_json = nlohmann::json::array();
  for (const auto& f : files) files_json.push_back({{"file", f.file}, {"start", f.start}, {"end", f.end}});
  return {{"dataset_size", dataset_size},
          {"payload_bytes", payload_bytes},
          {"seed", seed},
          {"files", std::move(files_json)}};
}

std::string synthetic_payload(std::uint64_t seed, RecordId id, std::uint64_t payload_bytes) {
  auto rng = RngStream::keyed(seed, {fnv1a64("payload"), id});
  std::string out;
  out.reserve(payload_bytes);
  while (out.size() < payload_bytes) {
    std::uint64_t word = rng.next();
    for (int i = 0; i < 8 && out.size() < payload_bytes; ++i, word >>= 8) {
      out.push_back(static_cast<char>(word & 0xFF));
    }
  }
  return out;
}

DatasetManifest generate_dataset(std::uint64_t size, std::uint64_t payload_bytes, std::uint64_t seed,
                                 const fs::path& out_dir, std::uint64_t records_per_file) {
  if (records_per_file == 0) throw ConfigurationError("records_per_file must be >= 1");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.dataset_size = size;
  manifest.payload_bytes = payload_bytes;
  manifest.seed = seed;
  manifest.base_dir = out_dir;
  for (RecordId start = 0; start < size; start += records_per_file) {
    const RecordId end = std::min(size, start + records_per_file);
    const std::string name = fmt::format("part-{:05d}.jsonl", manifest.files.size());
    std::ofstream out(out_dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (out_dir / name).string());
    for (RecordId id = start; id < end; ++id) {
      out << "{\"id\":" << id << ",\"payload\":\""
          << base64_encode(synthetic_payload(seed, id, payload_bytes)) << "\"}\n";
    }
    if (!out) throw IoError("write failed for " + (out_dir / name).string());
    manifest.files.push_back({name, start, end});
  }
  std::ofstream mf(out_dir / kManifestName, std::ios::binary | std::ios::trunc);
  if (!mf) throw IoError("cannot write manifest in " + out_dir.string());
  mf << manifest.to_json().dump(2) << "\n";
  if (!mf) throw IoError("write failed for manifest in " + out_dir.string());
  return manifest;
}

DatasetManifest load_manifest(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / kManifestName : path;
  DatasetManifest m = parse_json_file(file, [](const nlohmann::json& doc) {
    const FieldReader r(doc, "");
    DatasetManifest out;
    out.dataset_size = r.uint("dataset_size");
    out.payload_bytes = r.uint_or("payload_bytes", 0);
    out.seed = r.uint_or("seed", 0);
    const auto& files = r.raw("files");
    if (!files.is_array()) r.fail("files", "expected an array");
    RecordId expected = 0;
    for (std::size_t i = 0; i < files.size(); ++i) {
      const FieldReader f(files[i], "/files/" + std::to_string(i));
      DatasetFile df{f.string("file"), f.uint("start"), f.uint("end")};
      if (df.start != expected || df.end < df.start) {
        throw SchemaError(f.pointer(), "files must cover the dataset contiguously and in order");
      }
      expected = df.end;
      out.files.push_back(std::move(df));
    }
    if (expected != out.dataset_size) {
      throw SchemaError("/files", "files cover " + std::to_string(expected) + " records, expected " +
                                      std::to_string(out.dataset_size));
    }
    return out;
  });
  m.base_dir = file.parent_path();
  return m;
}

DatasetReader::DatasetReader(DatasetManifest manifest) : manifest_(std::move(manifest)) {}

std::shared_ptr<const std::vector<std::uint64_t>> DatasetReader::offsets_for(std::size_t index) const {
  {
    std::lock_guard lock(mu_);
    if (auto it = offsets_.find(index); it != offsets_.end()) return it->second;
  }
  const auto& df = manifest_.files[index];
  const fs::path path = manifest_.base_dir / df.file;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FetchFailure("cannot open " + path.string());
  auto offsets = std::make_shared<std::vector<std::uint64_t>>();
  offsets->reserve(static_cast<std::size_t>(df.end - df.start));
  std::uint64_t pos = 0;
  std::string line;
  while (offsets->size() < df.end - df.start && std::getline(in, line)) {
    offsets->push_back(pos);
    pos += line.size() + 1;
  }
  std::lock_guard lock(mu_);
  return offsets_.emplace(index, std::move(offsets)).first->second;
}

std::vector<LoadedRecord> DatasetReader::read_range(RecordId start, RecordId end) const {
  if (start > end || end > manifest_.dataset_size) {
    throw std::out_of_range(fmt::format("range [{}, {}) outside dataset of {} records", start, end,
                                        manifest_.dataset_size));
  }
  std::vector<LoadedRecord> out;
  out.reserve(static_cast<std::size_t>(end - start));
  for (std::size_t fi = 0; fi < manifest_.files.size() && start < end; ++fi) {
    const auto& df = manifest_.files[fi];
    if (df.end <= start || df.start >= end) continue;
    const fs::path path = manifest_.base_dir / df.file;
    if (!fs::exists(path)) throw FetchFailure("missing data file " + path.string());
    const auto offsets = offsets_for(fi);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FetchFailure("cannot open " + path.string());
    const RecordId from = std::max(start, df.start);
    const RecordId to = std::min(end, df.end);
    std::string line;
    for (RecordId id = from; id < to; ++id) {
      LoadedRecord rec;
      rec.id = id;
      const std::size_t local = static_cast<std::size_t>(id - df.start);
      if (local >= offsets->size()) {
        rec.error = TolerableError{TolerableErrorKind::FetchError,
                                   fmt::format("record {} missing from {}", id, df.file)};
        out.push_back(std::move(rec));
        continue;
      }
      in.clear();
      in.seekg(static_cast<std::streamoff>((*offsets)[local]));
      std::getline(in, line);
      try {
        const auto j = nlohmann::json::parse(line);
        if (j.at("id").get<RecordId>() != id) throw std::runtime_error("id mismatch");
        rec.payload = base64_decode(j.at("payload").get<std::string>());
      } catch (const std::exception& e) {
        rec.error = TolerableError{TolerableErrorKind::ParseError,
                                   fmt::format("record {}: {}", id, e.what())};
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace batchinfer
