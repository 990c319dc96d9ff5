#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mmscreen {

// Exit codes: 0 ok, 1 validation error (bad input or usage), 2 runtime error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mmscreen
