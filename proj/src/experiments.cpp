#include "pong/experiments.hpp"

#include "pong/errors.hpp"

namespace pong {

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = {
      {"baseline",
       {{"hidden", "200"}, {"batch_episodes", "10"}, {"alpha", "0.001"}, {"ball_diameter", "2"},
        {"opponent", "consistent"}},
       "single 200-unit hidden layer, batch 10, alpha 0.001, 2 px ball, consistently-tracking "
       "opponent"},
      {"lr-high", {{"alpha", "0.01"}}, "baseline with a ten times larger label learning rate"},
      {"arch-100", {{"hidden", "100"}}, "one hidden layer of 100"},
      {"arch-300", {{"hidden", "300"}}, "one hidden layer of 300"},
      {"arch-200-100", {{"hidden", "200-100"}}, "two hidden layers"},
      {"arch-200-200-100", {{"hidden", "200-200-100"}}, "three hidden layers, narrowing"},
      {"arch-300-200-100-50", {{"hidden", "300-200-100-50"}}, "four hidden layers, narrowing"},
      {"ball-6", {{"ball_diameter", "6"}}, "baseline with a 6 px ball"},
      {"alt-ball-8", {{"ball_diameter", "8"}}, "baseline with an 8 px ball"},
      {"opp-partial", {{"opponent", "partial"}}, "baseline against the partially-tracking opponent"},
      {"drill", {{"mode", "drill"}, {"opponent", "drill-none"}},
       "empty opposing goal, balls spawned from the far half"},
  };
  return table;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : presets()) names.push_back(p.name);
  return names;
}

std::pair<std::string, std::string> parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + text + "' is not of the form key=value");
  }
  return {text.substr(0, eq), text.substr(eq + 1)};
}

RunConfig resolve_preset(const std::string& name,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  const Preset* found = nullptr;
  const Preset* base = nullptr;
  for (const auto& p : presets()) {
    if (p.name == name) found = &p;
    if (p.name == "baseline") base = &p;
  }
  if (found == nullptr) {
    std::string list;
    for (const auto& n : preset_names()) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "'; available: " + list);
  }
  RunConfig config;
  for (const auto& [k, v] : base->settings) config.set(k, v);
  for (const auto& [k, v] : found->settings) config.set(k, v);
  for (const auto& [k, v] : overrides) config.set(k, v);
  config.validate();
  return config;
}

TrainingSummary run_preset(const std::string& name,
                           const std::vector<std::pair<std::string, std::string>>& overrides,
                           const std::string& output_dir) {
  const auto config = resolve_preset(name, overrides);
  std::vector<std::string> header{"preset=" + name};
  for (const auto& [k, v] : overrides) header.push_back("override " + k + "=" + v);
  return training_loop(config, output_dir, header);
}

}  // namespace pong
