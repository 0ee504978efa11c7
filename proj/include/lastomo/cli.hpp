#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lastomo {

// Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print a
// single line "error: <kind>: <message>" to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lastomo
