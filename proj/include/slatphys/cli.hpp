#ifndef SLATPHYS_CLI_HPP_
#define SLATPHYS_CLI_HPP_

#include <string>
#include <vector>

namespace slatphys {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `slatphys` tool: gen, align, train, eval, simulate, bench.
// Module failures print "error: <kind>: <message>" to stderr and return 1;
// bad flags or subcommands return 2.
int run_command(int argc, char** argv);
int run_command(const std::vector<std::string>& args);

}  // namespace slatphys

#endif  // SLATPHYS_CLI_HPP_
