#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace voltmargin::cli {

/// Entry point behind the voltmargin binary. Exit codes: 0 success, 1 runtime
/// or numerical failure, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace voltmargin::cli
