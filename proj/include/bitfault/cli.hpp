#pragma once

#include <ostream>

namespace bitfault {

/// Entry point of the `bitfault` tool: train, inject, sweep, bench, report.
/// Writes one JSON summary line per command to `out` and diagnostics to `err`.
/// Returns 0 on success, 1 on a runtime failure, 2 on a usage or config error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace bitfault
