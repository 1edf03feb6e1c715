#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ipcir {

/// Failure categories. Each maps onto one CLI exit code.
enum class ErrorKind {
  config,      // bad flags or run configuration
  argument,    // precondition violated by a caller
  format,      // malformed file header or document
  data,        // non-finite values, bad ids
  role,        // embedding set role mismatch
  shape,       // dimension / length mismatch
  resolution,  // dangling reference in a manifest
  validation,  // schema violations in a layout
  protocol,    // evaluation protocol violated (ground truth, subsets, proxies)
  size,        // instance too large for the oracle
};

std::string_view to_string(ErrorKind kind);

/// Exit code per kind: 2 config, 3 data/format, 4 protocol.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& message)
      : std::runtime_error(message), kind_(kind), module_(std::move(module)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorKind kind_;
  std::string module_;
};

}  // namespace ipcir
