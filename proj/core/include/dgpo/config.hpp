#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dgpo/trainers.hpp"

namespace dgpo::cli {

/// One `key = value` line, remembered with its origin for diagnostics.
struct ConfigEntry {
  std::string value;
  int line = 0;
};

/// Flat view of a sectioned key-value file: keys are "section.key"; keys
/// before the first section header live at top level.
using KeyValues = std::map<std::string, ConfigEntry>;

/// Parses the text form. Malformed lines raise ConfigError naming the line.
KeyValues parse_config_text(const std::string& text, const std::string& origin = "<config>");
KeyValues parse_config_file(const std::filesystem::path& path);

/// Everything a subcommand needs, with defaults for every field.
struct RunConfig {
  train::TrainConfig train;
  std::string base_checkpoint;   // posttrain: pretrained θ_ref
  std::string eval_checkpoint;   // eval: model to score
  std::string plot_input;        // plot: sample dump to render
  std::vector<std::string> variants;
  std::map<std::string, KeyValues> variant_overrides;
  int checkpoint_every = 0;      // 0 = at each eval
};

/// Applies `kv` on top of `base`. Unknown keys and unparsable values raise
/// ConfigError with the line and field.
RunConfig resolve_config(const KeyValues& kv, RunConfig base = {}, const std::string& origin = "<config>");

/// Canonical text form; parsing it back yields an identical RunConfig.
std::string to_config_text(const RunConfig& config);

/// Resolved configuration as JSON (manifest payload).
nlohmann::json config_to_json(const RunConfig& config);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace dgpo::cli
