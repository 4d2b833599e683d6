#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmsa/trainer.hpp"

namespace mmsa {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Resolved experiment configuration: every recognized key has a value here.
struct RunConfig {
  TrainerConfig trainer;
  std::string env_name = "coordination";
  long long checkpoint_interval = 0;  // gradient steps; 0 = final checkpoint only
};

// All recognized keys in canonical order. Assigning any other key is a
// ConfigError whose message lists this set.
std::vector<std::string> config_keys();

// Current value of one key, rendered in the round-trip decimal form.
std::string config_get(const RunConfig& cfg, const std::string& key);

// Assigns one key. Unknown keys, unparseable values, and out-of-range values
// throw ConfigError. "ablate.variant" rewrites the ablation flags as a set.
void config_set(RunConfig& cfg, const std::string& key, const std::string& value);

// Parses "key = value" text: one assignment per line, '#' comments, blank
// lines ignored, later assignments win. Also accepts "key=value" overrides.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);  // ConfigError on io failure

// Canonical "key = value" rendering of every key; parse_config round-trips it.
std::string render_config(const RunConfig& cfg);

// FNV-1a 64-bit hash of render_config; stable identity for manifests.
std::uint64_t config_hash(const RunConfig& cfg);

// Shortest decimal form that parses back to exactly the same double. Used by
// the config renderer and every metrics writer so all emitted numbers
// round-trip bit-exactly.
std::string format_double(double v);

}  // namespace mmsa
