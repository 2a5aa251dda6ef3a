#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rcl::cli {

/// Runs one verb. `args` excludes the program name. Returns the process exit
/// status: 0 when every requested output was written, 1 on a runtime failure,
/// 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace rcl::cli
