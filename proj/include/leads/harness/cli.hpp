#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace leads::harness {

// Entry point of the `leads` command. Returns 0 on success, 1 on usage or
// contract errors, 2 on I/O errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

} // namespace leads::harness
