#pragma once

namespace afusion {

// Entry point for the `afusion` binary. Exit codes: 0 success, 1 validation
// error (bad flags, config, or input files), 2 runtime failure.
int cli_main(int argc, char** argv);

}  // namespace afusion
