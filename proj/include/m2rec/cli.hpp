#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace m2rec {

// Runs one `m2rec` subcommand. Returns the process exit status: 0 on success
// (and for --help), 2 on usage errors, 1 on any other failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace m2rec
