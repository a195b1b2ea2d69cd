#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace adopt::cli {

/// Runs one stage. Returns the process exit status; failures print a JSON
/// error object on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace adopt::cli
