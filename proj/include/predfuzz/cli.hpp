#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "predfuzz/fuzz_engine.hpp"

namespace predfuzz {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct CliOptions {
    CampaignConfig config;
    std::string out;
    std::string config_file;
    std::string emit_program;
    std::optional<std::pair<std::string, std::string>> compare;
    bool help = false;
    std::string help_text;
};

/// Parses command-line arguments (without the program name). Values from
/// --config FILE are applied first and flags override them. Throws
/// ConfigError for unknown flags, malformed values and out-of-range settings.
CliOptions parse_config(const std::vector<std::string>& args);

/// Reads a JSON campaign config file.
CampaignConfig load_config_file(const std::string& path);

}  // namespace predfuzz
