#pragma once

#include <iosfwd>

namespace mapexit {

/// Entry point of the command-line tool. Returns the process exit status:
/// 0 success, 1 usage or domain error, 2 invalid model, 3 numerical failure.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace mapexit
