#include "pcdiag/error.hpp"

namespace pcdiag {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension error";
    case ErrorKind::numeric_guard: return "numeric-guard error";
    case ErrorKind::index: return "index error";
    case ErrorKind::contract: return "contract error";
    case ErrorKind::count: return "count error";
    case ErrorKind::mask: return "mask error";
    case ErrorKind::label: return "label error";
    case ErrorKind::shape_class: return "class error";
    case ErrorKind::degeneracy: return "degeneracy error";
    case ErrorKind::spec: return "spec error";
    case ErrorKind::format: return "format error";
    case ErrorKind::corruption: return "corruption error";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::value: return "value error";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::config: return "config error";
    case ErrorKind::calibration: return "calibration error";
    case ErrorKind::divergence: return "training-divergence error";
    case ErrorKind::reliability: return "reliability error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace pcdiag
