#pragma once

#include <stdexcept>
#include <string>

namespace fitdeblur {

enum class ErrorKind {
  degenerate_input,
  empty_input,
  shape,
  parameter,
  out_of_support,
  empty_bank,
  config,
  io,
  corrupt_file,
  version_mismatch,
  numeric,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::degenerate_input: return "degenerate input";
    case ErrorKind::empty_input: return "empty input";
    case ErrorKind::shape: return "shape mismatch";
    case ErrorKind::parameter: return "invalid parameter";
    case ErrorKind::out_of_support: return "out of support";
    case ErrorKind::empty_bank: return "empty kernel bank";
    case ErrorKind::config: return "configuration error";
    case ErrorKind::io: return "i/o error";
    case ErrorKind::corrupt_file: return "corrupt file";
    case ErrorKind::version_mismatch: return "version mismatch";
    case ErrorKind::numeric: return "numeric error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace fitdeblur
