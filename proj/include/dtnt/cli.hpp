#pragma once

namespace dtnt {

// Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print a
// one-line machine-parsable "error: <category>: <detail>" to stderr.
int run_cli(int argc, const char* const* argv);

}  // namespace dtnt
