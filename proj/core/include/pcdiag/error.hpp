#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pcdiag {

/// Failure categories shared by every module. The CLI maps these onto exit codes.
enum class ErrorKind {
  dimension,
  numeric_guard,
  index,
  contract,
  count,
  mask,
  label,
  shape_class,
  degeneracy,
  spec,
  format,
  corruption,
  parse,
  value,
  io,
  config,
  calibration,
  divergence,
  reliability,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  /// Message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace pcdiag
