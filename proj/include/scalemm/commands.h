#pragma once

namespace scalemm {

// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitDegenerate = 2,
  kExitInput = 3,
  kExitNotConverged = 4,
  kExitNoGroundTruth = 5,
};

// Entry point of the `scalemm` tool. Returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace scalemm
