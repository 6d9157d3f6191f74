#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "piml/harness.hpp"

namespace piml {

// Everything a CLI run needs. Parsed from a flat `key = value` file:
//
//   # comment
//   condition = FD001
//   seeds = [0, 1, 2]
//   use_mu = true
//   rul_cap = none
//
// Unknown keys, duplicate keys and malformed values are rejected.
struct RunConfig {
  TrainConfig train;
  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "out";
  int synth_paths = 100;
  std::optional<int> synth_length;  // unset: shortest physics grid
  double gradcheck_step = 1e-5;
  double gradcheck_threshold = 1e-5;
};

// Sets one key from its textual value. Throws ParseError.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

RunConfig parse_config(std::istream& in, const std::string& source_name = "<config>");
RunConfig load_config(const std::filesystem::path& path);

// Applies `key=value` overrides in order.
void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides);

// Every key with its current value in canonical text form, sorted by key.
std::map<std::string, std::string> canonical_config(const RunConfig& config);
std::vector<std::string> config_keys();

// FNV-1a 64 of the canonical form, as 16 hex digits.
std::string config_hash(const RunConfig& config);

}  // namespace piml
