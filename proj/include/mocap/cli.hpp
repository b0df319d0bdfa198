// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mocap::cli {

// Runs one CLI invocation (args exclude the program name). Exit codes:
// 0 success, 1 usage error, 2 data error. Diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mocap::cli
