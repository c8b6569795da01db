// Copyright 2026 The vfield Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// \file
/// \brief The `vfield` command line: subcommands over the library.
///
/// Every subcommand resolves one flat JSON object of settings: built-in
/// defaults, then the keys of `--config FILE`, then explicitly passed flags.
/// Commands that write a run directory store the resolved object there as
/// config.json, which can be passed back through `--config` to replay the run.
#ifndef VFIELD_TOOLS_CLI_HPP_
#define VFIELD_TOOLS_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace vfield::cli {

/// Process exit codes, one per error class.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,  ///< any other library error
  kUsage = 2,
  kIo = 3,
  kFormat = 4,
  kInvalidArgument = 5,
  kDegenerateGeometry = 6,
  kStaleCache = 7,
};

/// Runs the CLI on `args` (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace vfield::cli

#endif  // VFIELD_TOOLS_CLI_HPP_
