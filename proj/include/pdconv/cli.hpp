// Copyright 2026 The pdconv Authors.
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

// The pdconv command line: gradcheck, equivalence, rfmap, bench, gen, train
// and eval subcommands.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pdconv::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kBadArgs = 2,
  kFileError = 3,  // missing, unreadable or corrupted file
  kDiverged = 4,   // non-finite training loss
};

/// Runs one command line (args excludes the program name) and returns the
/// exit code. Normal output goes to out, diagnostics to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pdconv::cli
