#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace maskforge {

/// Entry point of the maskforge tool. `args` excludes the program name.
/// Returns 0 on success, 1 on runtime failure and 2 on usage errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace maskforge
