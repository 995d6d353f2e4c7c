#pragma once

// Fast invariant suite behind the `selftest` CLI subcommand: one line per
// check, returns the number of failures.

#include <ostream>

namespace hcfs {

int run_selftest(std::ostream& os);

}  // namespace hcfs
