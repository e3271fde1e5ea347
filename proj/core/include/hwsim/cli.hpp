#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hwsim::cli {

/// Runs one subcommand against a config file plus overrides, writing JSON
/// (and CSV) artifacts under the configured output directory.
/// Exit codes: 0 success, 2 config/validation error, 3 runtime simulation
/// error.
int run(const std::string& subcommand, const std::string& config_path,
        const std::vector<std::string>& overrides, std::ostream& out,
        std::ostream& err);

extern const char* const kSubcommands[7];

}  // namespace hwsim::cli
