#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "macdmp/rng.hpp"

// Discrete-event model of a multi-hop MF-TDMA wireless network.
namespace macdmp::netsim {

inline constexpr double kSpeedOfLight = 2.99792458e8;  // m/s

struct RadioParams {
  double transmit_power = 1.0;    // W
  double gain_tx = 1.0;
  double gain_rx = 1.0;
  double carrier_freq = 2.4e9;    // Hz
  double rx_sensitivity = 1e-12;  // W

  void validate() const;
};

// Free-space path loss (lambda / (4 pi d))^2.
double path_loss(double distance, double carrier_freq);

// P_t * G_t * G_r * L_p(d).
double received_power(const RadioParams& radio, double distance);

// Distance at which received power equals the sensitivity threshold.
double radio_range(const RadioParams& radio);

// Sensitivity that makes `range` the exact 1-hop radius for `radio`.
double sensitivity_for_range(const RadioParams& radio, double range);

enum class TrafficClass { kHigh, kLow };

struct Position {
  double x = 0.0;
  double y = 0.0;
};

double distance(const Position& a, const Position& b);

struct NodeSpec {
  int id = 0;
  Position position;
  TrafficClass traffic_class = TrafficClass::kLow;
  double mean_interarrival = 1.0;  // s; +inf means no traffic
  int queue_capacity = 50;         // packets
};

struct Topology {
  std::vector<NodeSpec> nodes;
  std::vector<char> adjacency;            // n*n, symmetric, zero diagonal
  std::vector<std::vector<int>> neighbors;  // ascending ids
  std::vector<int> next_hop;              // n*n, [src*n + dst]; -1 on the diagonal

  int size() const { return static_cast<int>(nodes.size()); }
  bool adjacent(int i, int j) const { return adjacency[i * size() + j] != 0; }
  int route(int src, int dst) const { return next_hop[src * size() + dst]; }
};

// Links every pair whose received power reaches the sensitivity (inclusive),
// then computes static shortest-hop routes (BFS, lowest neighbor id wins ties).
// Throws TopologyError listing unreachable pairs when the graph is disconnected.
Topology build_topology(std::vector<NodeSpec> nodes, const RadioParams& radio);

struct FrameGrid {
  int slots = 10;               // M
  int channels = 4;             // L
  double frame_duration = 5e-3; // s
  double data_rate = 2e6;       // bit/s

  int blocks() const { return slots * channels; }
  double slot_duration() const { return frame_duration / slots; }
  double slot_capacity() const { return data_rate * slot_duration(); }
  void validate() const;
};

struct ResourceBlock {
  int slot = 0;
  int channel = 0;
  auto operator<=>(const ResourceBlock&) const = default;
};

// Per-node sets of resource blocks for one frame.
using Allocation = std::vector<std::vector<ResourceBlock>>;

// Largest-remainder apportionment of `total` blocks proportional to demands,
// remainder ties broken by lower node id. All-zero demands split evenly.
std::vector<int> rb_counts(std::span<const double> demands, int total);

// Counts from rb_counts, cells dealt from a uniform random permutation of the grid.
Allocation allocate_rbs(std::span<const double> demands, const FrameGrid& grid, Rng& rng);

struct Packet {
  std::uint64_t id = 0;
  int src = 0;
  int dst = 0;
  double size = 0.0;  // bits
  double created_at = 0.0;
  std::optional<double> delivered_at;
};

// Per-frame local observation. Counts are packets; the same type carries
// neighborhood means, which are fractional.
struct Observation {
  double gen = 0.0;
  double gen_max = 0.0;
  double tran = 0.0;
  double tran_max = 0.0;

  std::array<double, 4> to_array() const { return {gen, gen_max, tran, tran_max}; }
  static Observation from_array(std::span<const double> v) { return {v[0], v[1], v[2], v[3]}; }
  bool operator==(const Observation&) const = default;
};

// Componentwise mean over the 1-hop neighbors of node i; the node's own
// observation when it has no neighbors.
Observation mean_field_obs(std::span<const Observation> observations, const Topology& topology,
                           int i);

struct QosCounters {
  std::uint64_t generated = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  double total_delay = 0.0;    // s, summed over delivered packets
  double delivered_bits = 0.0;

  QosCounters& operator+=(const QosCounters& o);
};

struct NodeState {
  std::deque<Packet> gen_queue;   // locally generated, awaiting first hop
  std::deque<Packet> tran_queue;  // relayed packets cached for forwarding
  double next_arrival = 0.0;      // absolute time of the next local arrival
};

struct SimState {
  std::int64_t clock = 0;  // frame index
  std::vector<NodeState> nodes;
  QosCounters totals;
  std::uint64_t next_packet_id = 0;
  Rng traffic_rng;
  std::vector<Observation> last_observations;

  std::uint64_t queued() const;
};

// Static description of one network instance.
struct Environment {
  Topology topology;
  FrameGrid grid;
  double packet_size = 1000.0;  // bits

  int size() const { return topology.size(); }
  int packets_per_block() const;
};

SimState initial_state(const Environment& env, std::uint64_t seed);

// Poisson arrivals for the window of frame state.clock. Draws destinations
// uniformly among the other nodes and advances each node's next-arrival time.
// Queue admission happens at the arrival instant inside step_frame.
std::vector<Packet> generate_traffic(const Environment& env, SimState& state);

// Drop-tail admission into a node's generation queue.
bool admit_generated(const Environment& env, SimState& state, Packet packet);

struct FrameResult {
  std::vector<Observation> observations;
  std::vector<double> rewards;
  std::vector<double> delivered_bits;  // per destination node
  QosCounters delta;
};

// Runs one frame: arrivals and slot-end transmissions in time order. Each
// block carries packets_per_block() head-of-line packets (older of the two
// queue heads first). Delivered packets complete at the frame end.
FrameResult step_frame(const Environment& env, SimState& state, const Allocation& allocation);

// Same, with an explicit arrival list (used by tests and replay).
FrameResult step_frame(const Environment& env, SimState& state, const Allocation& allocation,
                       std::vector<Packet> arrivals);

}  // namespace macdmp::netsim
