#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace influence {

enum class ErrorCategory {
  invalid_argument,
  insufficient_data,
  parse_error,
  invalid_state,
  training_diverged,
  file_not_found,
  checkpoint_parse_error,
  io_error,
};

constexpr std::string_view to_string(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::invalid_argument: return "invalid_argument";
    case ErrorCategory::insufficient_data: return "insufficient_data";
    case ErrorCategory::parse_error: return "parse_error";
    case ErrorCategory::invalid_state: return "invalid_state";
    case ErrorCategory::training_diverged: return "training_diverged";
    case ErrorCategory::file_not_found: return "file_not_found";
    case ErrorCategory::checkpoint_parse_error: return "checkpoint_parse_error";
    case ErrorCategory::io_error: return "io_error";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable category.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

inline void require(bool condition, ErrorCategory category, const std::string& message) {
  if (!condition) fail(category, message);
}

}  // namespace influence
