#pragma once

#include <stdexcept>
#include <string>

namespace mergeq {

// Invalid configuration or CLI input. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed weight files or wire payloads.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Edge-service failures: timeouts, refused connections, protocol errors.
// `code` carries the wire-level error code when the server sent one.
struct ServiceError : std::runtime_error {
  int code = 0;
  ServiceError(int c, const std::string& msg)
      : std::runtime_error(msg), code(c) {}
  explicit ServiceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mergeq
