#pragma once

#include <string>
#include <vector>

namespace landseg::cli {

// Exit codes: 0 success, 1 usage error, 2 runtime error.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args without the program name

}  // namespace landseg::cli
