// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 success, 1 usage/config error,
// 2 data/parse/dimension/label/pairing/checkpoint/spectrum error, 3 numeric
// failure. Every error is reported on one line as `error:<category>: ...`.
#pragma once

#include "fdkd/errors.hpp"

#include <iosfwd>

namespace fdkd::cli {

int exit_code(ErrorCategory c);

/// argv[0] is the program name.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fdkd::cli
