#pragma once

#include <iosfwd>

namespace orion::cli {

/// Exit codes: 0 success, 1 runtime failure, 2 usage error.
int run(int argc, char** argv);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace orion::cli
