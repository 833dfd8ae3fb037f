#pragma once

#include <string>
#include <vector>

namespace xmlp {

// Entry point shared by the xmlp binary and in-process callers (tests drive
// the exact same code path). args excludes the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace xmlp
