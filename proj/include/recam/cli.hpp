#pragma once

#include <string>
#include <vector>

namespace recam {

/// Entry point behind the `recam` binary. `args` excludes the program name.
/// Returns 0 on success, 1 on operational failure, 2 on usage errors.
int run_cli(std::vector<std::string> args);

} // namespace recam
