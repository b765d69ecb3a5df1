#pragma once

#include <ostream>

namespace palmctl {

/// Exit codes: 0 success, 1 validation/protocol/IO failure, 2 usage error.
/// Machine-readable results go to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace palmctl
