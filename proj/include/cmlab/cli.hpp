#pragma once

#include <iosfwd>

namespace cmlab {

/// Parses argv, runs one subcommand and writes its artifacts plus manifest.json.
/// Returns 0 on success, 1 on validation errors, 2 on numerical failures.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cmlab
