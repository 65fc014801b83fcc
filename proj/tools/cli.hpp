#pragma once

#include <iosfwd>

namespace unmt::cli {

/// Exit codes: 0 success, 1 usage error, 2 runtime error.
int cli_main(int argc, const char* const* argv);
/// Same, with explicit streams (translate reads `in`, results go to `out`,
/// diagnostics to `err`).
int cli_main(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace unmt::cli
