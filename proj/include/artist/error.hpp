#pragma once

#include <stdexcept>
#include <string>

namespace artist {

enum class ErrorCode {
  invalid_argument,
  out_of_range,
  shape_mismatch,
  invalid_schedule,
  invalid_tap,
  uninitialized,
  corrupted_record,
  io,
  non_finite,
  client,
  unavailable,
  unparseable,
  rate_limited,
  timeout,
  cache_corrupted,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::invalid_schedule: return "invalid_schedule";
    case ErrorCode::invalid_tap: return "invalid_tap";
    case ErrorCode::uninitialized: return "uninitialized";
    case ErrorCode::corrupted_record: return "corrupted_record";
    case ErrorCode::io: return "io";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::client: return "client";
    case ErrorCode::unavailable: return "unavailable";
    case ErrorCode::unparseable: return "unparseable";
    case ErrorCode::rate_limited: return "rate_limited";
    case ErrorCode::timeout: return "timeout";
    case ErrorCode::cache_corrupted: return "cache_corrupted";
  }
  return "unknown";
}

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by the stylization loop when a latent stops being finite.
class NonFiniteError : public Error {
 public:
  NonFiniteError(int step, const std::string& where)
      : Error(ErrorCode::non_finite, "non-finite value at step " + std::to_string(step) + " (" + where + ")"),
        step_(step) {}

  int step() const noexcept { return step_; }

 private:
  int step_;
};

#define ARTIST_CHECK(cond, code, msg)                 \
  do {                                                \
    if (!(cond)) throw ::artist::Error((code), (msg)); \
  } while (0)

}  // namespace artist
