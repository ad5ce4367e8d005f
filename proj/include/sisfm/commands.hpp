#pragma once

// The fit / simulate / prior-check / summarize commands behind the CLI.

#include "sisfm/io.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sisfm {

struct CliOptions {
    std::string command;
    std::optional<std::filesystem::path> config;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::filesystem::path output = "sisfm-out";
    std::vector<std::string> overrides; ///< "dotted.key=value"
};

/// `key=value` on a dotted path; the value is read as JSON when it parses, else as a string.
void apply_override(Json& document, const std::string& assignment);

/// Config file (if any) with relative data paths resolved against its directory, then overrides.
Json load_run_config(const CliOptions& options);

/// Machine-readable description of a failure.
Json error_json(const std::exception& error);

/// Runs one command; on failure writes error.json to the output directory,
/// prints it to `err` and returns a nonzero status.
int run_command(const CliOptions& options, std::ostream& out, std::ostream& err);

} // namespace sisfm
