// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

namespace shufflenas::cli {

/// Runs one command. Exit codes: 0 success, 1 runtime failure, 2 usage or
/// configuration error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace shufflenas::cli
