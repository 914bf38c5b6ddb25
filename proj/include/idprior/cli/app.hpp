#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace idprior::cli {

// Runs one command line (args exclude the program name). Errors go to `err`
// as a single "error: <category>: <message>" line. Returns the exit status:
// 0 on success, 2 for usage errors, 1 otherwise.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace idprior::cli
