// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sdp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPipelineError = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line. Errors are reported on `err` as a single line
/// "error: <Name>: <message>".
int dispatch(int argc, char** argv, std::ostream& out, std::ostream& err);
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Subcommand names and, per subcommand, every long flag it accepts.
std::vector<std::pair<std::string, std::vector<std::string>>> describe_flags();

}  // namespace sdp::cli
