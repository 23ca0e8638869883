#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bgfg/pipeline.hpp"

namespace bgfg {

using Setting = std::pair<std::string, std::string>;

/// `key = value` lines with '#' comments. Settings apply in order on top of
/// the preset named by the last `profile` key (desk when absent). Unknown keys
/// and malformed values throw ConfigError.
TrainingConfig parse_config(const std::string& text, const std::vector<Setting>& overrides = {});
TrainingConfig load_config(const std::string& path, const std::vector<Setting>& overrides = {});

/// "key=value" -> Setting; throws ConfigError without '='.
Setting parse_override(const std::string& kv);

void apply_setting(TrainingConfig& config, const std::string& key, const std::string& value);

/// Every key with its resolved value, one per line, in the same syntax.
std::string describe(const TrainingConfig& config);

}  // namespace bgfg
