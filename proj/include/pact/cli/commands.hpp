#pragma once

#include <string>
#include <vector>

namespace pact::cli {

// Dispatches one subcommand. Returns 0 on success, 1 on usage errors, 2 on
// runtime errors; every command archives its resolved config beside the
// artifacts it writes.
int run_command(const std::vector<std::string>& argv);

} // namespace pact::cli
