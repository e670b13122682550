#pragma once

namespace flowrecon {

/// Command-line driver. Returns the process exit code: 0 on success, 2 for usage errors and
/// 1 for failures while running a command.
int run_cli(int argc, char const *const *argv);

} // namespace flowrecon
