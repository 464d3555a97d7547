#include "macdmp/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "macdmp/container.hpp"
#include "macdmp/errors.hpp"

namespace macdmp::netsim {

namespace {

constexpr int kMaxLayoutAttempts = 10000;

const char* layout_name(Layout l) {
  switch (l) {
    case Layout::kUniform:
      return "uniform";
    case Layout::kGrown:
      return "grown";
    case Layout::kExplicit:
      return "explicit";
  }
  return "uniform";
}

Layout parse_layout(const std::string& s) {
  if (s == "uniform") return Layout::kUniform;
  if (s == "grown") return Layout::kGrown;
  if (s == "explicit") return Layout::kExplicit;
  throw ConfigError("nodes.layout: unknown layout '" + s + "' (uniform|grown|explicit)");
}

template <typename T>
T read_field(const YAML::Node& parent, const char* section, const char* key, T fallback) {
  const auto node = parent[key];
  if (!node) return fallback;
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(std::string(section) + "." + key + ": cannot parse value");
  }
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// name -> (nodes, high-rate nodes, layout seed, limited RF)
struct Bundled {
  int nodes;
  int high;
  std::uint64_t seed;
  bool limited;
};

const std::map<std::string, Bundled>& bundled() {
  static const std::map<std::string, Bundled> table = {
      {"s8_2v6", {8, 2, 11, false}},  {"s8_4v4", {8, 4, 12, false}},
      {"s9_2v7", {9, 2, 13, false}},  {"s9_4v5", {9, 4, 14, false}},
      {"s12_3v9", {12, 3, 15, false}}, {"s8_2v6_limited", {8, 2, 11, true}},
  };
  return table;
}

ScenarioConfig make_bundled(const std::string& name, const Bundled& b) {
  ScenarioConfig cfg;
  cfg.name = name;
  cfg.node_count = b.nodes;
  cfg.high_rate_nodes = b.high;
  cfg.layout_seed = b.seed;
  cfg.limited_rf = b.limited;
  // The shrunken limited-RF range almost never yields a connected uniform
  // layout over the full area.
  cfg.layout = b.limited ? Layout::kGrown : Layout::kUniform;
  // Keep the offered load comparable across node counts and class ratios:
  // total arrival rate of about 12 packets per frame.
  const double frame = cfg.grid.frame_duration;
  const double low_rate = 12.0 / (b.high * 3.0 + (b.nodes - b.high));  // packets per frame
  cfg.low_interarrival = frame / low_rate;
  cfg.high_interarrival = frame / (3.0 * low_rate);
  return cfg;
}

std::vector<Position> uniform_positions(const ScenarioConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> ux(0.0, cfg.area_width), uy(0.0, cfg.area_height);
  std::vector<Position> out(cfg.node_count);
  for (auto& p : out) {
    p.x = ux(rng);
    p.y = uy(rng);
  }
  return out;
}

// Each new node lands within 90% of the radio range of a random earlier node.
std::vector<Position> grown_positions(const ScenarioConfig& cfg, double range, Rng& rng) {
  std::uniform_real_distribution<double> ux(0.0, cfg.area_width), uy(0.0, cfg.area_height);
  std::vector<Position> out;
  out.push_back({ux(rng), uy(rng)});
  while (static_cast<int>(out.size()) < cfg.node_count) {
    const auto& anchor = out[std::uniform_int_distribution<std::size_t>(0, out.size() - 1)(rng)];
    const double r = 0.9 * range * std::sqrt(uniform01(rng));
    const double th = 2.0 * std::numbers::pi * uniform01(rng);
    const Position p{anchor.x + r * std::cos(th), anchor.y + r * std::sin(th)};
    if (p.x < 0 || p.y < 0 || p.x > cfg.area_width || p.y > cfg.area_height) continue;
    out.push_back(p);
  }
  return out;
}

std::vector<NodeSpec> node_specs(const ScenarioConfig& cfg, const std::vector<Position>& pos) {
  std::vector<NodeSpec> nodes(cfg.node_count);
  for (int i = 0; i < cfg.node_count; ++i) {
    const bool high = i < cfg.high_rate_nodes;
    nodes[i] = {i, pos[i], high ? TrafficClass::kHigh : TrafficClass::kLow,
                high ? cfg.high_interarrival : cfg.low_interarrival, cfg.queue_capacity};
  }
  return nodes;
}

void validate(const ScenarioConfig& cfg) {
  if (cfg.node_count < 2) throw ConfigError("nodes.count: need at least 2 nodes");
  if (cfg.high_rate_nodes < 0 || cfg.high_rate_nodes > cfg.node_count) {
    throw ConfigError("nodes.high: must lie in [0, nodes.count]");
  }
  if (!(cfg.area_width > 0) || !(cfg.area_height > 0)) throw ConfigError("nodes.area_m: must be positive");
  if (cfg.layout == Layout::kExplicit && static_cast<int>(cfg.positions.size()) != cfg.node_count) {
    throw ConfigError("nodes.positions: explicit layout needs one position per node");
  }
  if (!(cfg.high_interarrival > 0) || !(cfg.low_interarrival > 0)) {
    throw ConfigError("traffic.*_interarrival_s: must be positive");
  }
  if (!(cfg.packet_bits > 0)) throw ConfigError("traffic.packet_bits: must be positive");
  if (cfg.queue_capacity < 1) throw ConfigError("traffic.queue_capacity: must be >= 1");
  if (cfg.grid.slots < 1) throw ConfigError("frame.slots: must be >= 1");
  if (cfg.grid.channels < 1) throw ConfigError("frame.channels: must be >= 1");
  if (!(cfg.grid.frame_duration > 0)) throw ConfigError("frame.duration_s: must be positive");
  if (!(cfg.grid.data_rate > 0)) throw ConfigError("frame.data_rate_bps: must be positive");
  if (cfg.packet_bits > cfg.grid.slot_capacity() + 1e-9) {
    throw ConfigError("traffic.packet_bits: exceeds the capacity of one resource block");
  }
  if (!(cfg.radio.transmit_power > 0)) throw ConfigError("radio.transmit_power_w: must be positive");
  if (!(cfg.radio.carrier_freq > 0)) throw ConfigError("radio.carrier_freq_hz: must be positive");
  if (!(cfg.radio.gain_tx > 0) || !(cfg.radio.gain_rx > 0)) throw ConfigError("radio.gain_*: must be positive");
  if (!(cfg.range_m > 0) && !(cfg.radio.rx_sensitivity > 0)) {
    throw ConfigError("radio.range_m: need a positive range or rx_sensitivity_w");
  }
}

}  // namespace

RadioParams ScenarioConfig::effective_radio() const {
  RadioParams r = radio;
  if (range_m > 0.0) r.rx_sensitivity = sensitivity_for_range(radio, range_m);
  if (limited_rf) {
    r.carrier_freq *= limited_freq_factor;
    r.transmit_power *= limited_power_factor;
  }
  return r;
}

std::string ScenarioConfig::canonical() const {
  std::ostringstream s;
  s << "name=" << name << '\n'
    << "nodes.count=" << node_count << '\n'
    << "nodes.high=" << high_rate_nodes << '\n'
    << "nodes.layout=" << layout_name(layout) << '\n'
    << "nodes.layout_seed=" << layout_seed << '\n'
    << "nodes.area_m=" << fmt_double(area_width) << ',' << fmt_double(area_height) << '\n';
  for (const auto& p : positions) s << "nodes.position=" << fmt_double(p.x) << ',' << fmt_double(p.y) << '\n';
  s << "traffic.high_interarrival_s=" << fmt_double(high_interarrival) << '\n'
    << "traffic.low_interarrival_s=" << fmt_double(low_interarrival) << '\n'
    << "traffic.packet_bits=" << fmt_double(packet_bits) << '\n'
    << "traffic.queue_capacity=" << queue_capacity << '\n'
    << "radio.transmit_power_w=" << fmt_double(radio.transmit_power) << '\n'
    << "radio.gain_tx=" << fmt_double(radio.gain_tx) << '\n'
    << "radio.gain_rx=" << fmt_double(radio.gain_rx) << '\n'
    << "radio.carrier_freq_hz=" << fmt_double(radio.carrier_freq) << '\n'
    << "radio.rx_sensitivity_w=" << fmt_double(radio.rx_sensitivity) << '\n'
    << "radio.range_m=" << fmt_double(range_m) << '\n'
    << "radio.limited_rf=" << (limited_rf ? 1 : 0) << '\n'
    << "radio.limited_freq_factor=" << fmt_double(limited_freq_factor) << '\n'
    << "radio.limited_power_factor=" << fmt_double(limited_power_factor) << '\n'
    << "frame.slots=" << grid.slots << '\n'
    << "frame.channels=" << grid.channels << '\n'
    << "frame.duration_s=" << fmt_double(grid.frame_duration) << '\n'
    << "frame.data_rate_bps=" << fmt_double(grid.data_rate) << '\n';
  return s.str();
}

std::uint32_t ScenarioConfig::hash() const { return io::crc32(canonical()); }

std::string ScenarioConfig::hash_hex() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", hash());
  return buf;
}

std::vector<std::string> bundled_scenario_names() {
  std::vector<std::string> out;
  for (const auto& [name, _] : bundled()) out.push_back(name);
  return out;
}

ScenarioConfig parse_scenario_yaml(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("scenario config: YAML syntax error: ") + e.what());
  }
  if (!root.IsMap()) throw ConfigError("scenario config: top level must be a mapping");

  ScenarioConfig cfg;
  if (const auto base = root["base"]) {
    const auto name = base.as<std::string>();
    const auto it = bundled().find(name);
    if (it == bundled().end()) throw ConfigError("base: unknown bundled scenario '" + name + "'");
    cfg = make_bundled(name, it->second);
  }
  cfg.name = read_field<std::string>(root, "", "name", cfg.name);

  if (const auto n = root["nodes"]) {
    cfg.node_count = read_field(n, "nodes", "count", cfg.node_count);
    cfg.high_rate_nodes = read_field(n, "nodes", "high", cfg.high_rate_nodes);
    cfg.layout = parse_layout(read_field<std::string>(n, "nodes", "layout", layout_name(cfg.layout)));
    cfg.layout_seed = read_field(n, "nodes", "layout_seed", cfg.layout_seed);
    if (const auto area = n["area_m"]) {
      if (!area.IsSequence() || area.size() != 2) throw ConfigError("nodes.area_m: expected [width, height]");
      cfg.area_width = area[0].as<double>();
      cfg.area_height = area[1].as<double>();
    }
    if (const auto pos = n["positions"]) {
      if (!pos.IsSequence()) throw ConfigError("nodes.positions: expected a list of [x, y]");
      cfg.positions.clear();
      for (const auto& p : pos) {
        if (!p.IsSequence() || p.size() != 2) throw ConfigError("nodes.positions: expected [x, y] pairs");
        cfg.positions.push_back({p[0].as<double>(), p[1].as<double>()});
      }
    }
  }
  if (const auto t = root["traffic"]) {
    cfg.high_interarrival = read_field(t, "traffic", "high_interarrival_s", cfg.high_interarrival);
    cfg.low_interarrival = read_field(t, "traffic", "low_interarrival_s", cfg.low_interarrival);
    cfg.packet_bits = read_field(t, "traffic", "packet_bits", cfg.packet_bits);
    cfg.queue_capacity = read_field(t, "traffic", "queue_capacity", cfg.queue_capacity);
  }
  if (const auto r = root["radio"]) {
    cfg.radio.transmit_power = read_field(r, "radio", "transmit_power_w", cfg.radio.transmit_power);
    cfg.radio.gain_tx = read_field(r, "radio", "gain_tx", cfg.radio.gain_tx);
    cfg.radio.gain_rx = read_field(r, "radio", "gain_rx", cfg.radio.gain_rx);
    cfg.radio.carrier_freq = read_field(r, "radio", "carrier_freq_hz", cfg.radio.carrier_freq);
    cfg.radio.rx_sensitivity = read_field(r, "radio", "rx_sensitivity_w", cfg.radio.rx_sensitivity);
    cfg.range_m = read_field(r, "radio", "range_m", cfg.range_m);
    if (r["rx_sensitivity_w"] && !r["range_m"]) cfg.range_m = 0.0;
    cfg.limited_rf = read_field(r, "radio", "limited_rf", cfg.limited_rf);
    cfg.limited_freq_factor = read_field(r, "radio", "limited_freq_factor", cfg.limited_freq_factor);
    cfg.limited_power_factor = read_field(r, "radio", "limited_power_factor", cfg.limited_power_factor);
  }
  if (const auto f = root["frame"]) {
    cfg.grid.slots = read_field(f, "frame", "slots", cfg.grid.slots);
    cfg.grid.channels = read_field(f, "frame", "channels", cfg.grid.channels);
    cfg.grid.frame_duration = read_field(f, "frame", "duration_s", cfg.grid.frame_duration);
    cfg.grid.data_rate = read_field(f, "frame", "data_rate_bps", cfg.grid.data_rate);
  }
  validate(cfg);
  return cfg;
}

std::string to_yaml(const ScenarioConfig& cfg) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << cfg.name;
  out << YAML::Key << "nodes" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "count" << YAML::Value << cfg.node_count;
  out << YAML::Key << "high" << YAML::Value << cfg.high_rate_nodes;
  out << YAML::Key << "layout" << YAML::Value << layout_name(cfg.layout);
  out << YAML::Key << "layout_seed" << YAML::Value << cfg.layout_seed;
  out << YAML::Key << "area_m" << YAML::Value << YAML::Flow << YAML::BeginSeq << cfg.area_width
      << cfg.area_height << YAML::EndSeq;
  if (!cfg.positions.empty()) {
    out << YAML::Key << "positions" << YAML::Value << YAML::BeginSeq;
    for (const auto& p : cfg.positions) out << YAML::Flow << YAML::BeginSeq << p.x << p.y << YAML::EndSeq;
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;
  out << YAML::Key << "traffic" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "high_interarrival_s" << YAML::Value << cfg.high_interarrival;
  out << YAML::Key << "low_interarrival_s" << YAML::Value << cfg.low_interarrival;
  out << YAML::Key << "packet_bits" << YAML::Value << cfg.packet_bits;
  out << YAML::Key << "queue_capacity" << YAML::Value << cfg.queue_capacity;
  out << YAML::EndMap;
  out << YAML::Key << "radio" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "transmit_power_w" << YAML::Value << cfg.radio.transmit_power;
  out << YAML::Key << "gain_tx" << YAML::Value << cfg.radio.gain_tx;
  out << YAML::Key << "gain_rx" << YAML::Value << cfg.radio.gain_rx;
  out << YAML::Key << "carrier_freq_hz" << YAML::Value << cfg.radio.carrier_freq;
  if (cfg.range_m > 0) {
    out << YAML::Key << "range_m" << YAML::Value << cfg.range_m;
  } else {
    out << YAML::Key << "rx_sensitivity_w" << YAML::Value << cfg.radio.rx_sensitivity;
  }
  out << YAML::Key << "limited_rf" << YAML::Value << cfg.limited_rf;
  out << YAML::Key << "limited_freq_factor" << YAML::Value << cfg.limited_freq_factor;
  out << YAML::Key << "limited_power_factor" << YAML::Value << cfg.limited_power_factor;
  out << YAML::EndMap;
  out << YAML::Key << "frame" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "slots" << YAML::Value << cfg.grid.slots;
  out << YAML::Key << "channels" << YAML::Value << cfg.grid.channels;
  out << YAML::Key << "duration_s" << YAML::Value << cfg.grid.frame_duration;
  out << YAML::Key << "data_rate_bps" << YAML::Value << cfg.grid.data_rate;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

ScenarioConfig load_scenario(const std::string& name_or_path) {
  if (const auto it = bundled().find(name_or_path); it != bundled().end()) {
    return make_bundled(it->first, it->second);
  }
  std::ifstream in(name_or_path);
  if (!in) {
    throw ConfigError("config: '" + name_or_path + "' is neither a bundled scenario nor a readable file");
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario_yaml(buf.str());
}

Environment make_environment(const ScenarioConfig& cfg) {
  validate(cfg);
  const auto radio = cfg.effective_radio();
  Environment env;
  env.grid = cfg.grid;
  env.packet_size = cfg.packet_bits;

  if (cfg.layout == Layout::kExplicit) {
    try {
      env.topology = build_topology(node_specs(cfg, cfg.positions), radio);
    } catch (const TopologyError& e) {
      throw ConfigError(std::string("nodes.positions: ") + e.what());
    }
    return env;
  }

  Rng rng = make_rng(cfg.layout_seed, streams::kLayout);
  const double range = radio_range(radio);
  for (int attempt = 0; attempt < kMaxLayoutAttempts; ++attempt) {
    const auto pos = cfg.layout == Layout::kGrown ? grown_positions(cfg, range, rng)
                                                  : uniform_positions(cfg, rng);
    try {
      env.topology = build_topology(node_specs(cfg, pos), radio);
      return env;
    } catch (const TopologyError&) {
      // disconnected layout; draw again
    }
  }
  throw ConfigError("nodes.layout: no connected layout found after " +
                    std::to_string(kMaxLayoutAttempts) + " attempts");
}

}  // namespace macdmp::netsim
