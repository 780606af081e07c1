#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace batchinfer {

using RecordId = std::uint64_t;
using ShardId = std::uint32_t;
// One worker runs per simulated node, so the two share an identifier.
using NodeId = std::string;
using WorkerId = NodeId;
// Milliseconds since harness start.
using TimestampMs = std::uint64_t;

// Half-open interval [start, end) of record indices.
struct RecordRange {
  RecordId start = 0;
  RecordId end = 0;

  std::uint64_t size() const { return end - start; }
  bool empty() const { return end <= start; }
  bool contains(RecordId id) const { return id >= start && id < end; }
  friend bool operator==(const RecordRange&, const RecordRange&) = default;
};

enum class ShardState { Todo, Doing, Done };

std::string_view to_string(ShardState state);

// Legal edges: TODO->DOING, DOING->DONE, DOING->TODO.
bool is_legal_transition(ShardState from, ShardState to);

struct Shard {
  ShardId id = 0;
  RecordRange range;
  ShardState state = ShardState::Todo;
  std::optional<WorkerId> assigned_worker;
  std::uint32_t attempt = 0;
  TimestampMs assigned_at = 0;
};

enum class FailureKind {
  NetworkError,
  HardwareFailure,
  Preemption,
  ConfigError,
  ProgramError,
};

inline constexpr FailureKind kAllFailureKinds[] = {
    FailureKind::NetworkError, FailureKind::HardwareFailure,
    FailureKind::Preemption, FailureKind::ConfigError,
    FailureKind::ProgramError};

bool is_retryable(FailureKind kind);
std::string_view to_string(FailureKind kind);
std::optional<FailureKind> parse_failure_kind(std::string_view name);

enum class TolerableErrorKind { ParseError, NanValue, InferenceError, FetchError, Timeout };

inline constexpr TolerableErrorKind kAllTolerableErrorKinds[] = {
    TolerableErrorKind::ParseError, TolerableErrorKind::NanValue,
    TolerableErrorKind::InferenceError, TolerableErrorKind::FetchError,
    TolerableErrorKind::Timeout};

std::string_view to_string(TolerableErrorKind kind);
std::optional<TolerableErrorKind> parse_tolerable_error(std::string_view name);

// A per-record failure that is recorded in the output instead of aborting
// the shard.
struct TolerableError {
  TolerableErrorKind kind = TolerableErrorKind::InferenceError;
  std::string message;
  friend bool operator==(const TolerableError&, const TolerableError&) = default;
};

// Invalid user configuration (job spec, scenario, arguments).
class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A component was driven outside its protocol (unknown shard, unknown node).
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace batchinfer
