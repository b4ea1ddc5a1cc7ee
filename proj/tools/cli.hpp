/*
 * facefit - 3D morphable face model fitting by analysis-by-synthesis.
 *
 * File: tools/cli.hpp
 *
 * Copyright 2026 The facefit authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#ifndef FACEFIT_TOOLS_CLI_HPP
#define FACEFIT_TOOLS_CLI_HPP

#include <ostream>

namespace facefit::cli {

/// Process exit status of the command-line tool.
enum ExitCode : int {
    success = 0,
    usage_error = 2,
    io_error = 3,
    domain_error = 4,
};

/// Runs the facefit command line. Diagnostics go to err, regular output to out.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} /* namespace facefit::cli */

#endif /* FACEFIT_TOOLS_CLI_HPP */
