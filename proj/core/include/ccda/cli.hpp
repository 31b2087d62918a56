/* Copyright 2026 The CCDA Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef CCDA_CLI_HPP_
#define CCDA_CLI_HPP_

namespace ccda {

// Entry point behind the `ccda` tool; also callable in-process by tests.
// Subcommands: generate, train, eval, gradcheck, ablate.
// Exit codes: 0 success, 2 validation/usage error, 3 runtime failure.
int run_cli(int argc, const char* const* argv);

}  // namespace ccda

#endif  // CCDA_CLI_HPP_
