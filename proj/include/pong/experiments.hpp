#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pong/trainer.hpp"

namespace pong {

/// A named bundle of overrides applied on top of the default RunConfig.
struct Preset {
  std::string name;
  std::vector<std::pair<std::string, std::string>> settings;
  std::string notes;
};

const std::vector<Preset>& presets();
std::vector<std::string> preset_names();

/// Applies the preset, then `overrides` in order. Unknown names throw
/// ConfigError listing the available presets.
RunConfig resolve_preset(const std::string& name,
                         const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// Parses "key=value".
std::pair<std::string, std::string> parse_override(const std::string& text);

TrainingSummary run_preset(const std::string& name,
                           const std::vector<std::pair<std::string, std::string>>& overrides,
                           const std::string& output_dir);

}  // namespace pong
