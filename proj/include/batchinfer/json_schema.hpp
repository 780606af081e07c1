#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "batchinfer/types.hpp"

namespace batchinfer {

// Schema violation at a JSON pointer inside a document.
class SchemaError : public ConfigurationError {
 public:
  SchemaError(std::string pointer, const std::string& message)
      : ConfigurationError(message), pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

// Maps JSON pointers to the 1-based source line where each value starts.
class JsonLocator {
 public:
  explicit JsonLocator(std::string_view text);

  // Falls back to the nearest located ancestor (e.g. the object missing a key).
  std::size_t line_of(std::string_view pointer) const;

 private:
  std::map<std::string, std::size_t, std::less<>> lines_;
};

// Typed accessors that raise SchemaError with the offending pointer.
class FieldReader {
 public:
  FieldReader(const nlohmann::json& object, std::string pointer);

  bool has(std::string_view key) const;
  FieldReader child(std::string_view key) const;
  const nlohmann::json& raw(std::string_view key) const;
  std::string pointer_to(std::string_view key) const;
  const std::string& pointer() const { return pointer_; }
  const nlohmann::json& json() const { return object_; }

  std::string string(std::string_view key) const;
  std::string string_or(std::string_view key, std::string fallback) const;
  double number(std::string_view key) const;
  double number_or(std::string_view key, double fallback) const;
  std::uint64_t uint(std::string_view key) const;
  std::uint64_t uint_or(std::string_view key, std::uint64_t fallback) const;
  bool boolean_or(std::string_view key, bool fallback) const;

  [[noreturn]] void fail(std::string_view key, const std::string& message) const;

 private:
  const nlohmann::json& object_;
  std::string pointer_;
};

std::string escape_pointer_token(std::string_view token);

std::string read_text_file(const std::filesystem::path& path);

// Parses `path` and runs `parse` over it, turning JSON syntax errors and
// SchemaErrors into ConfigurationErrors of the form "file:line: message".
template <typename Parse>
auto parse_json_file(const std::filesystem::path& path, Parse&& parse) {
  const std::string text = read_text_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigurationError(path.string() + ": " + e.what());
  }
  try {
    return parse(doc);
  } catch (const SchemaError& e) {
    const JsonLocator locator(text);
    throw ConfigurationError(path.string() + ":" + std::to_string(locator.line_of(e.pointer())) +
                             ": " + e.pointer() + ": " + e.what());
  }
}

}  // namespace batchinfer
