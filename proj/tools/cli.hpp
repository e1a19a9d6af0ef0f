#ifndef MFSTEER_TOOLS_CLI_HPP
#define MFSTEER_TOOLS_CLI_HPP

#include <iosfwd>

namespace mfsteer::cli {

/// The mfsteer command line. Exit status: 0 when every check passes, 1 when
/// a verification check fails, 2 for usage, config or library errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mfsteer::cli

#endif  // MFSTEER_TOOLS_CLI_HPP
