// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace avs::cli {

enum ExitCode : int { kOk = 0, kUsageError = 1, kDataError = 2 };

/// Runs one subcommand. args excludes the program name. Results go to `out`
/// (JSON) or to files; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace avs::cli
