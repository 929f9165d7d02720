#pragma once

#include <stdexcept>
#include <string>

namespace mgs {

// Error taxonomy shared by the library and the CLI exit-code mapping.
enum class ErrorKind {
  Domain,   // argument outside the mathematical domain of an operation
  Format,   // malformed file contents
  Io,       // filesystem read/write failure
  Shape,    // mismatched grid/array shapes
  Config,   // invalid configuration values
  Render,   // scene not renderable (joint outside coverage, ...)
  Fit,      // optimization failure (non-finite loss, ...)
  Metric,   // degenerate metric input
  Scene,    // synthetic scene construction failure
  Oracle,   // finite-difference oracle failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Format: return "format";
    case ErrorKind::Io: return "io";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Config: return "config";
    case ErrorKind::Render: return "render";
    case ErrorKind::Fit: return "fit";
    case ErrorKind::Metric: return "metric";
    case ErrorKind::Scene: return "scene";
    case ErrorKind::Oracle: return "oracle";
  }
  return "unknown";
}

}  // namespace mgs
