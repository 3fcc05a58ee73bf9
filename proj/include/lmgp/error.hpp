#pragma once

#include <stdexcept>
#include <string>

namespace lmgp {

// Broad failure classes. The CLI maps these onto exit codes.
enum class ErrorKind {
  kNumerical,   // factorization failures, infeasible fits
  kIo,          // unreadable or unwritable files
  kValidation,  // bad dimensions, labels, schema violations
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& what) {
  throw Error(ErrorKind::kValidation, what);
}

[[noreturn]] inline void fail_numerical(const std::string& what) {
  throw Error(ErrorKind::kNumerical, what);
}

[[noreturn]] inline void fail_io(const std::string& what) { throw Error(ErrorKind::kIo, what); }

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNumerical:
      return "numerical";
    case ErrorKind::kIo:
      return "io";
    case ErrorKind::kValidation:
      return "schema";
  }
  return "unknown";
}

}  // namespace lmgp
