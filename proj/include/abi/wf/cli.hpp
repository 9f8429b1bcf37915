#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace abi::wf {

// Command line front end (simulate/train/sample/estimate/diagnose/compare).
// args excludes the program name. Returns the process exit code: 0 on
// success, 1 for configuration and usage errors, 2 for runtime failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace abi::wf
