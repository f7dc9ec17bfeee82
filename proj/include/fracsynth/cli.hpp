#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace fracsynth {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;     //!< generation or I/O failure
inline constexpr int kExitValidation = 2;  //!< bad input; JSON error report on stderr
inline constexpr int kExitUsage = 64;      //!< unknown subcommand

//! Runs one subcommand. `args` excludes the program name. The
//! FRACSYNTH_SEED environment variable backs up a missing --seed.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

std::string version_string();

}  // namespace fracsynth
