#pragma once

#include <iosfwd>

namespace lmgp {

// Exit codes: 0 success, 1 numerical failure, 2 I/O failure, 3 validation.
inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitValidation = 3;

// Runs one command line. Reports go to `out`; failures are written to `err`
// as {"error": {"kind": ..., "message": ...}}.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lmgp
