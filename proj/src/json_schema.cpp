#include "batchinfer/json_schema.hpp"

#include <fstream>
#include <sstream>

namespace batchinfer {

namespace {

// Minimal recursive scanner; the text has already been validated by the
// real parser, so malformed input just stops the walk.
class LineScanner {
 public:
  LineScanner(std::string_view text, std::map<std::string, std::size_t, std::less<>>& out)
      : text_(text), out_(out) {}

  void run() { value(""); }

 private:
  bool at_end() const { return pos_ >= text_.size(); }

  void skip_ws() {
    while (!at_end()) {
      const char c = text_[pos_];
      if (c == '\n') ++line_;
      if (c != ' ' && c != '\t' && c != '\n' && c != '\r') break;
      ++pos_;
    }
  }

  std::string string_token() {
    std::string out;
    ++pos_;  // opening quote
    while (!at_end() && text_[pos_] != '"') {
      char c = text_[pos_++];
      if (c == '\\' && !at_end()) {
        const char e = text_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case 'r': c = '\r'; break;
          case 'b': c = '\b'; break;
          case 'f': c = '\f'; break;
          default: c = e; break;
        }
      }
      out.push_back(c);
    }
    ++pos_;  // closing quote
    return out;
  }

  void value(const std::string& pointer) {
    skip_ws();
    if (at_end()) return;
    out_.emplace(pointer, line_);
    switch (text_[pos_]) {
      case '{': object(pointer); break;
      case '[': array(pointer); break;
      case '"': string_token(); break;
      default:
        while (!at_end() && std::string_view(",]} \t\r\n").find(text_[pos_]) == std::string_view::npos)
          ++pos_;
    }
  }

  void object(const std::string& pointer) {
    ++pos_;
    for (;;) {
      skip_ws();
      if (at_end()) return;
      if (text_[pos_] == '}') { ++pos_; return; }
      if (text_[pos_] == ',') { ++pos_; continue; }
      if (text_[pos_] != '"') return;
      const std::string key = string_token();
      skip_ws();
      if (at_end() || text_[pos_] != ':') return;
      ++pos_;
      value(pointer + "/" + escape_pointer_token(key));
    }
  }

  void array(const std::string& pointer) {
    ++pos_;
    std::size_t index = 0;
    for (;;) {
      skip_ws();
      if (at_end()) return;
      if (text_[pos_] == ']') { ++pos_; return; }
      if (text_[pos_] == ',') { ++pos_; continue; }
      value(pointer + "/" + std::to_string(index++));
    }
  }

  std::string_view text_;
  std::map<std::string, std::size_t, std::less<>>& out_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

std::string_view type_name(const nlohmann::json& j) { return j.type_name(); }

}  // namespace

std::string escape_pointer_token(std::string_view token) {
  std::string out;
  for (char c : token) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out.push_back(c);
  }
  return out;
}

JsonLocator::JsonLocator(std::string_view text) { LineScanner(text, lines_).run(); }

std::size_t JsonLocator::line_of(std::string_view pointer) const {
  std::string p(pointer);
  for (;;) {
    if (auto it = lines_.find(p); it != lines_.end()) return it->second;
    if (p.empty()) return 1;
    p.erase(p.rfind('/'));
  }
}

FieldReader::FieldReader(const nlohmann::json& object, std::string pointer)
    : object_(object), pointer_(std::move(pointer)) {
  if (!object_.is_object()) {
    throw SchemaError(pointer_, "expected an object, found " + std::string(type_name(object_)));
  }
}

std::string FieldReader::pointer_to(std::string_view key) const {
  return pointer_ + "/" + escape_pointer_token(key);
}

void FieldReader::fail(std::string_view key, const std::string& message) const {
  throw SchemaError(pointer_to(key), message);
}

bool FieldReader::has(std::string_view key) const { return object_.contains(key); }

const nlohmann::json& FieldReader::raw(std::string_view key) const {
  auto it = object_.find(key);
  if (it == object_.end()) throw SchemaError(pointer_, "missing required field '" + std::string(key) + "'");
  return *it;
}

FieldReader FieldReader::child(std::string_view key) const {
  return FieldReader(raw(key), pointer_to(key));
}

std::string FieldReader::string(std::string_view key) const {
  const auto& v = raw(key);
  if (!v.is_string()) fail(key, "expected a string, found " + std::string(type_name(v)));
  return v.get<std::string>();
}

std::string FieldReader::string_or(std::string_view key, std::string fallback) const {
  return has(key) ? string(key) : std::move(fallback);
}

double FieldReader::number(std::string_view key) const {
  const auto& v = raw(key);
  if (!v.is_number()) fail(key, "expected a number, found " + std::string(type_name(v)));
  return v.get<double>();
}

double FieldReader::number_or(std::string_view key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

std::uint64_t FieldReader::uint(std::string_view key) const {
  const auto& v = raw(key);
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    fail(key, "expected a non-negative integer, found " +
                  (v.is_number() ? v.dump() : std::string(type_name(v))));
  }
  return v.get<std::uint64_t>();
}

std::uint64_t FieldReader::uint_or(std::string_view key, std::uint64_t fallback) const {
  return has(key) ? uint(key) : fallback;
}

bool FieldReader::boolean_or(std::string_view key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto& v = raw(key);
  if (!v.is_boolean()) fail(key, "expected a boolean, found " + std::string(type_name(v)));
  return v.get<bool>();
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace batchinfer
