#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "mvsim/config.hpp"

namespace mvsim {

/// Version of the CSV and JSON output layouts.
inline constexpr int kSchemaVersion = 1;

std::string_view library_version() noexcept;

/// Exit codes of execute_command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitError = 2;

const std::vector<std::string>& subcommand_names();

/// Runs one subcommand and writes its outputs, plus `resolved_config.json`,
/// under config.output_dir. Failures are reported on `err` as a single JSON
/// object. Returns kExitCheckFailed when a check inside the subcommand fails
/// and kExitError on any error.
int execute_command(std::string_view subcommand, const RunConfig& config, std::ostream& err);

}  // namespace mvsim
