#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "macdmp/netsim.hpp"

namespace macdmp::netsim {

enum class Layout { kUniform, kGrown, kExplicit };

// Everything needed to instantiate an Environment. Loaded from a YAML file or
// one of the bundled scenarios (see bundled_scenario_names()).
struct ScenarioConfig {
  std::string name = "custom";

  int node_count = 8;
  int high_rate_nodes = 2;  // nodes 0..high_rate_nodes-1 are high-rate
  Layout layout = Layout::kUniform;
  std::uint64_t layout_seed = 1;
  double area_width = 10000.0;   // m
  double area_height = 10000.0;  // m
  std::vector<Position> positions;  // kExplicit only

  double high_interarrival = 1.25e-3;  // s
  double low_interarrival = 5e-3;      // s
  double packet_bits = 1000.0;
  int queue_capacity = 50;

  RadioParams radio;             // rx_sensitivity derived from range_m when > 0
  double range_m = 3600.0;
  bool limited_rf = false;
  double limited_freq_factor = 2.0;
  double limited_power_factor = 0.5;

  FrameGrid grid;

  // Radio after applying range-derived sensitivity and the limited-RF knob.
  RadioParams effective_radio() const;

  // Stable key=value rendering of every field; input to config_hash().
  std::string canonical() const;
  std::uint32_t hash() const;
  std::string hash_hex() const;
};

std::vector<std::string> bundled_scenario_names();

// `name_or_path` is a bundled scenario name or a path to a YAML file.
// Throws ConfigError naming the field on malformed input.
ScenarioConfig load_scenario(const std::string& name_or_path);
ScenarioConfig parse_scenario_yaml(const std::string& text);
std::string to_yaml(const ScenarioConfig& cfg);

// Places nodes (retrying uniform layouts until connected) and builds the
// topology.
Environment make_environment(const ScenarioConfig& cfg);

}  // namespace macdmp::netsim
