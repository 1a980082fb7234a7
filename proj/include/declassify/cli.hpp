#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "declassify/common.hpp"

namespace declassify {

/// Exit codes: 0 ok, 1 usage, 2 input parse, 3 invariant violation.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int exit_code_for(ErrorKind kind);

}  // namespace declassify
