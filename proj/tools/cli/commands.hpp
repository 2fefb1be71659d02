#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ddtas::cli {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitRuntime = 2 };

// Entry point shared by the binary and the tests. args[0] is the program
// name. Errors are reported on `err` as a single JSON line
// {"error": "usage"|"config"|"runtime", "message": ...}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ddtas::cli
