#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dsffnet {

// Dispatches one command-line invocation (argv[0] excluded). Exit codes:
// 0 success, 1 a result check failed (gradcheck over tolerance), 2 bad
// input or environment. All output goes to the given streams.
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);

} // namespace dsffnet
