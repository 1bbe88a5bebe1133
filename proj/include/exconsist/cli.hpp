#pragma once

#include <string>
#include <vector>

namespace exconsist {

// Entry point behind the `exconsist` binary; `args` excludes the program
// name. Exit codes: 0 success, 1 usage or configuration error, 2 training
// divergence. All diagnostics go to stderr, results to stdout and files.
int run_cli(const std::vector<std::string>& args);

}  // namespace exconsist
