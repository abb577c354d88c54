// tools/cli.h

// Copyright 2026  The dropclass Authors

// See the LICENSE file in the top-level directory for the full text.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dropclass::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitValidation = 2,
  kExitIo = 3,
  kExitNumeric = 4,
};

// args[0] is the program name. Never throws; errors become exit codes with
// a one-line message on `err`.
int RunCli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

}  // namespace dropclass::cli
