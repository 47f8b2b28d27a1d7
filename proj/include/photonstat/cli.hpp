#pragma once

// Command-line front end: simulate | sync | stats | fit | calibrate.
//
// Options may also come from a flat key=value file given with --config; keys
// are option names without the leading dashes ('_' and '-' are equivalent)
// and flags on the command line win over the file.

#include "photonstat/error.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace photonstat::cli {

enum ExitCode : int {
    kOk = 0,
    kValidation = 2,   // bad options, invalid or insufficient data
    kConvergence = 3,  // clock recovery or a fit did not converge
    kIo = 4,           // unreadable input, unwritable output
};

int exit_code_for(ErrorKind kind) noexcept;

// `args` excludes the program name. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace photonstat::cli
