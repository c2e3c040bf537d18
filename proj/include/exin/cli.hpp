#pragma once
#include <iosfwd>
#include <string>
#include <vector>

namespace exin {

// Process exit codes, one per failure class.
enum ExitCode {
  kExitOk = 0,
  kExitUsage = 2,    // malformed command line
  kExitConfig = 3,   // bad configuration (unknown key, bad value, contract)
  kExitIo = 4,       // filesystem/serialization failure
  kExitNumeric = 5,  // non-finite numerics or an unclassified internal error
};

// Run one subcommand (gen | train | eval | ablate | inspect-checkpoint).
// Arguments after the subcommand are `--config <file>` (merge a config file
// at that position) and `--key <value>` overrides; last writer wins.
// Returns the process exit code; never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace exin
