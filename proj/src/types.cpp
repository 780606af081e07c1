#include "batchinfer/types.hpp"

#include <array>
#include <utility>

namespace batchinfer {

namespace {

constexpr std::array<std::pair<FailureKind, std::string_view>, 5> kFailureNames{{
    {FailureKind::NetworkError, "NetworkError"},
    {FailureKind::HardwareFailure, "HardwareFailure"},
    {FailureKind::Preemption, "Preemption"},
    {FailureKind::ConfigError, "ConfigError"},
    {FailureKind::ProgramError, "ProgramError"},
}};

constexpr std::array<std::pair<TolerableErrorKind, std::string_view>, 5> kTolerableNames{{
    {TolerableErrorKind::ParseError, "ParseError"},
    {TolerableErrorKind::NanValue, "NanValue"},
    {TolerableErrorKind::InferenceError, "InferenceError"},
    {TolerableErrorKind::FetchError, "FetchError"},
    {TolerableErrorKind::Timeout, "Timeout"},
}};

}  // namespace

std::string_view to_string(ShardState state) {
  switch (state) {
    case ShardState::Todo: return "TODO";
    case ShardState::Doing: return "DOING";
    case ShardState::Done: return "DONE";
  }
  return "?";
}

bool is_legal_transition(ShardState from, ShardState to) {
  return (from == ShardState::Todo && to == ShardState::Doing) ||
         (from == ShardState::Doing && to == ShardState::Done) ||
         (from == ShardState::Doing && to == ShardState::Todo);
}

bool is_retryable(FailureKind kind) {
  switch (kind) {
    case FailureKind::NetworkError:
    case FailureKind::HardwareFailure:
    case FailureKind::Preemption:
      return true;
    case FailureKind::ConfigError:
    case FailureKind::ProgramError:
      return false;
  }
  return false;
}

std::string_view to_string(FailureKind kind) {
  for (const auto& [k, name] : kFailureNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::optional<FailureKind> parse_failure_kind(std::string_view name) {
  for (const auto& [k, n] : kFailureNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(TolerableErrorKind kind) {
  for (const auto& [k, name] : kTolerableNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::optional<TolerableErrorKind> parse_tolerable_error(std::string_view name) {
  for (const auto& [k, n] : kTolerableNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

}  // namespace batchinfer
