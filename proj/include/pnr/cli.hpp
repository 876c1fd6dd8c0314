#pragma once

#include <iosfwd>

namespace pnr {

/// Entry point of the `pnr` tool. Returns the process exit status:
/// 0 success, 1 user error (bad flags, configuration or input files),
/// 2 internal or backend error. Log output goes to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pnr
