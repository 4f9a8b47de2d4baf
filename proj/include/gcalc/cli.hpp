#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gcalc::cli {

/// Exit codes: 0 success, 1 usage or config error, 2 a certified check failed.
enum ExitCode : int { kOk = 0, kUsage = 1, kCheckFailed = 2 };

/// Runs `gcalc <subcommand> [flags]`. Results go to --out or `out`,
/// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gcalc::cli
