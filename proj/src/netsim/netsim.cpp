#include "macdmp/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <queue>
#include <sstream>
#include <string>

#include "macdmp/errors.hpp"

namespace macdmp::netsim {

void RadioParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw DomainError(std::string("radio.") + name + " must be positive and finite");
    }
  };
  positive(transmit_power, "transmit_power");
  positive(gain_tx, "gain_tx");
  positive(gain_rx, "gain_rx");
  positive(carrier_freq, "carrier_freq");
  positive(rx_sensitivity, "rx_sensitivity");
}

double path_loss(double distance, double carrier_freq) {
  if (!(distance > 0.0) || !(carrier_freq > 0.0)) {
    throw DomainError("path_loss: distance and carrier frequency must be positive");
  }
  const double wavelength = kSpeedOfLight / carrier_freq;
  const double ratio = wavelength / (4.0 * std::numbers::pi * distance);
  return ratio * ratio;
}

double received_power(const RadioParams& radio, double distance) {
  return radio.transmit_power * radio.gain_tx * radio.gain_rx *
         path_loss(distance, radio.carrier_freq);
}

double radio_range(const RadioParams& radio) {
  radio.validate();
  const double wavelength = kSpeedOfLight / radio.carrier_freq;
  const double gain = radio.transmit_power * radio.gain_tx * radio.gain_rx;
  return wavelength / (4.0 * std::numbers::pi) * std::sqrt(gain / radio.rx_sensitivity);
}

double sensitivity_for_range(const RadioParams& radio, double range) {
  return received_power(radio, range);
}

double distance(const Position& a, const Position& b) { return std::hypot(a.x - b.x, a.y - b.y); }

Topology build_topology(std::vector<NodeSpec> nodes, const RadioParams& radio) {
  radio.validate();
  const int n = static_cast<int>(nodes.size());
  if (n < 2) throw DomainError("build_topology: need at least 2 nodes");
  for (int i = 0; i < n; ++i) {
    if (nodes[i].id != i) throw DomainError("build_topology: node ids must be 0..n-1 in order");
    if (nodes[i].queue_capacity < 1) throw DomainError("queue_capacity must be >= 1");
    if (!(nodes[i].mean_interarrival > 0.0)) throw DomainError("mean_interarrival must be > 0");
    for (int j = 0; j < i; ++j) {
      if (distance(nodes[i].position, nodes[j].position) == 0.0) {
        throw DomainError("build_topology: nodes " + std::to_string(j) + " and " +
                          std::to_string(i) + " share a position");
      }
    }
  }

  Topology topo;
  topo.nodes = std::move(nodes);
  topo.adjacency.assign(static_cast<std::size_t>(n) * n, 0);
  topo.neighbors.assign(n, {});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = distance(topo.nodes[i].position, topo.nodes[j].position);
      if (received_power(radio, d) >= radio.rx_sensitivity) {
        topo.adjacency[i * n + j] = 1;
        topo.neighbors[i].push_back(j);
      }
    }
  }

  // BFS from every destination; the first-hop toward dst is the neighbor of
  // src with the smallest hop count to dst, lowest id on ties.
  topo.next_hop.assign(static_cast<std::size_t>(n) * n, -1);
  std::vector<std::pair<int, int>> unreachable;
  std::vector<int> dist(n);
  for (int dst = 0; dst < n; ++dst) {
    std::fill(dist.begin(), dist.end(), -1);
    std::queue<int> frontier;
    dist[dst] = 0;
    frontier.push(dst);
    while (!frontier.empty()) {
      const int u = frontier.front();
      frontier.pop();
      for (int v : topo.neighbors[u]) {
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          frontier.push(v);
        }
      }
    }
    for (int src = 0; src < n; ++src) {
      if (src == dst) continue;
      if (dist[src] < 0) {
        unreachable.emplace_back(src, dst);
        continue;
      }
      for (int v : topo.neighbors[src]) {
        if (dist[v] == dist[src] - 1) {
          topo.next_hop[src * n + dst] = v;
          break;
        }
      }
    }
  }
  if (!unreachable.empty()) {
    std::ostringstream msg;
    msg << "topology is disconnected; unreachable pairs:";
    for (auto [s, d] : unreachable) msg << " (" << s << "->" << d << ")";
    throw TopologyError(msg.str());
  }
  return topo;
}

void FrameGrid::validate() const {
  if (slots < 1 || channels < 1) throw DomainError("frame grid needs slots >= 1 and channels >= 1");
  if (!(frame_duration > 0.0) || !(data_rate > 0.0)) {
    throw DomainError("frame duration and data rate must be positive");
  }
}

std::vector<int> rb_counts(std::span<const double> demands, int total) {
  if (demands.empty()) throw DomainError("rb_counts: no demands");
  double sum = 0.0;
  for (double d : demands) {
    if (!(d >= 0.0) || !std::isfinite(d)) throw DomainError("rb_counts: demand must be finite and >= 0");
    sum += d;
  }
  const std::size_t n = demands.size();
  std::vector<double> quota(n);
  for (std::size_t i = 0; i < n; ++i) {
    quota[i] = sum > 0.0 ? static_cast<double>(total) * demands[i] / sum
                         : static_cast<double>(total) / static_cast<double>(n);
  }
  std::vector<int> counts(n);
  int assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    counts[i] = static_cast<int>(std::floor(quota[i]));
    assigned += counts[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Remainders are compared on a 1e-9 grid so that exact ties, which float
  // division can split by an ulp, fall back to the lower node id.
  std::vector<long long> rem(n);
  for (std::size_t i = 0; i < n; ++i) rem[i] = std::llround((quota[i] - std::floor(quota[i])) * 1e9);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  // Rounding in the quotas can leave the floor sum a block off either way.
  for (std::size_t r = 0; assigned < total; r = (r + 1) % n) {
    ++counts[order[r]];
    ++assigned;
  }
  for (std::size_t r = n; assigned > total; --r) {
    auto& c = counts[order[(r - 1) % n]];
    if (c > 0) {
      --c;
      --assigned;
    }
  }
  return counts;
}

Allocation allocate_rbs(std::span<const double> demands, const FrameGrid& grid, Rng& rng) {
  grid.validate();
  const auto counts = rb_counts(demands, grid.blocks());
  std::vector<ResourceBlock> cells;
  cells.reserve(grid.blocks());
  for (int m = 0; m < grid.slots; ++m) {
    for (int l = 0; l < grid.channels; ++l) cells.push_back({m, l});
  }
  std::shuffle(cells.begin(), cells.end(), rng);
  Allocation out(demands.size());
  std::size_t next = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out[i].assign(cells.begin() + next, cells.begin() + next + counts[i]);
    std::sort(out[i].begin(), out[i].end());
    next += counts[i];
  }
  return out;
}

Observation mean_field_obs(std::span<const Observation> observations, const Topology& topology,
                           int i) {
  if (i < 0 || i >= topology.size()) throw DomainError("mean_field_obs: node index out of range");
  const auto& nbrs = topology.neighbors[i];
  if (nbrs.empty()) return observations[i];
  std::array<double, 4> acc{};
  for (int j : nbrs) {
    const auto o = observations[j].to_array();
    for (int c = 0; c < 4; ++c) acc[c] += o[c];
  }
  for (auto& v : acc) v /= static_cast<double>(nbrs.size());
  return Observation::from_array(acc);
}

QosCounters& QosCounters::operator+=(const QosCounters& o) {
  generated += o.generated;
  delivered += o.delivered;
  dropped += o.dropped;
  total_delay += o.total_delay;
  delivered_bits += o.delivered_bits;
  return *this;
}

std::uint64_t SimState::queued() const {
  std::uint64_t q = 0;
  for (const auto& n : nodes) q += n.gen_queue.size() + n.tran_queue.size();
  return q;
}

int Environment::packets_per_block() const {
  const int k = static_cast<int>(std::floor(grid.slot_capacity() / packet_size + 1e-9));
  if (k < 1) throw DomainError("packet size exceeds the capacity of one resource block");
  return k;
}

namespace {

double draw_interarrival(double mean, Rng& rng) {
  if (std::isinf(mean)) return std::numeric_limits<double>::infinity();
  return std::exponential_distribution<double>(1.0 / mean)(rng);
}

}  // namespace

SimState initial_state(const Environment& env, std::uint64_t seed) {
  SimState s;
  s.traffic_rng = make_rng(seed, streams::kTraffic);
  s.nodes.resize(env.size());
  for (int i = 0; i < env.size(); ++i) {
    s.nodes[i].next_arrival = draw_interarrival(env.topology.nodes[i].mean_interarrival, s.traffic_rng);
  }
  s.last_observations.assign(env.size(), Observation{});
  return s;
}

std::vector<Packet> generate_traffic(const Environment& env, SimState& state) {
  const int n = env.size();
  const double window_end = static_cast<double>(state.clock + 1) * env.grid.frame_duration;
  std::vector<Packet> out;
  for (int i = 0; i < n; ++i) {
    auto& node = state.nodes[i];
    const double mean = env.topology.nodes[i].mean_interarrival;
    while (node.next_arrival < window_end) {
      Packet p;
      p.id = state.next_packet_id++;
      p.src = i;
      int dst = std::uniform_int_distribution<int>(0, n - 2)(state.traffic_rng);
      if (dst >= i) ++dst;
      p.dst = dst;
      p.size = env.packet_size;
      p.created_at = node.next_arrival;
      out.push_back(p);
      node.next_arrival += draw_interarrival(mean, state.traffic_rng);
    }
  }
  return out;
}

bool admit_generated(const Environment& env, SimState& state, Packet packet) {
  auto& node = state.nodes[packet.src];
  ++state.totals.generated;
  if (static_cast<int>(node.gen_queue.size()) >= env.topology.nodes[packet.src].queue_capacity) {
    ++state.totals.dropped;
    return false;
  }
  node.gen_queue.push_back(std::move(packet));
  return true;
}

FrameResult step_frame(const Environment& env, SimState& state, const Allocation& allocation) {
  auto arrivals = generate_traffic(env, state);
  return step_frame(env, state, allocation, std::move(arrivals));
}

FrameResult step_frame(const Environment& env, SimState& state, const Allocation& allocation,
                       std::vector<Packet> arrivals) {
  const int n = env.size();
  const auto& grid = env.grid;
  if (static_cast<int>(allocation.size()) != n) {
    throw ProtocolError("allocation has " + std::to_string(allocation.size()) + " entries for " +
                        std::to_string(n) + " nodes");
  }
  std::vector<int> owner(grid.blocks(), -1);
  for (int i = 0; i < n; ++i) {
    for (const auto& rb : allocation[i]) {
      if (rb.slot < 0 || rb.slot >= grid.slots || rb.channel < 0 || rb.channel >= grid.channels) {
        throw ProtocolError("resource block outside the frame grid");
      }
      auto& cell = owner[rb.slot * grid.channels + rb.channel];
      if (cell != -1) {
        throw ProtocolError("resource block (" + std::to_string(rb.slot) + "," +
                            std::to_string(rb.channel) + ") assigned to nodes " +
                            std::to_string(cell) + " and " + std::to_string(i));
      }
      cell = i;
    }
  }
  if (std::find(owner.begin(), owner.end(), -1) != owner.end()) {
    throw ProtocolError("allocation does not cover every resource block");
  }

  const QosCounters before = state.totals;
  const double t0 = static_cast<double>(state.clock) * grid.frame_duration;
  const double frame_end = t0 + grid.frame_duration;
  const int per_block = env.packets_per_block();

  std::vector<double> gen_max(n), tran_max(n), delay_sum(n, 0.0);
  std::vector<int> delay_count(n, 0);
  std::vector<double> bits_to(n, 0.0);
  for (int i = 0; i < n; ++i) {
    gen_max[i] = static_cast<double>(state.nodes[i].gen_queue.size());
    tran_max[i] = static_cast<double>(state.nodes[i].tran_queue.size());
  }

  std::stable_sort(arrivals.begin(), arrivals.end(),
                   [](const Packet& a, const Packet& b) { return a.created_at < b.created_at; });

  double frame_delay = 0.0;
  double frame_bits = 0.0;
  std::size_t next_arrival = 0;
  std::vector<std::pair<int, Packet>> in_flight;
  for (int m = 0; m < grid.slots; ++m) {
    const double slot_end = t0 + (m + 1) * grid.slot_duration();
    const bool last_slot = m + 1 == grid.slots;
    while (next_arrival < arrivals.size() &&
           (last_slot || arrivals[next_arrival].created_at <= slot_end)) {
      const int src = arrivals[next_arrival].src;
      admit_generated(env, state, std::move(arrivals[next_arrival]));
      gen_max[src] = std::max(gen_max[src], static_cast<double>(state.nodes[src].gen_queue.size()));
      ++next_arrival;
    }

    in_flight.clear();
    for (int l = 0; l < grid.channels; ++l) {
      const int tx = owner[m * grid.channels + l];
      auto& node = state.nodes[tx];
      for (int k = 0; k < per_block; ++k) {
        std::deque<Packet>* q = nullptr;
        if (!node.tran_queue.empty() &&
            (node.gen_queue.empty() ||
             node.tran_queue.front().created_at <= node.gen_queue.front().created_at)) {
          q = &node.tran_queue;
        } else if (!node.gen_queue.empty()) {
          q = &node.gen_queue;
        } else {
          break;
        }
        Packet p = std::move(q->front());
        q->pop_front();
        const int hop = env.topology.route(tx, p.dst);
        if (hop == p.dst) {
          p.delivered_at = frame_end;
          const double delay = frame_end - p.created_at;
          ++state.totals.delivered;
          frame_delay += delay;
          frame_bits += p.size;
          delay_sum[p.dst] += delay;
          bits_to[p.dst] += p.size;
          ++delay_count[p.dst];
        } else {
          in_flight.emplace_back(hop, std::move(p));
        }
      }
    }
    // Relayed packets land after the slot, so they can only move on in a later slot.
    for (auto& [hop, p] : in_flight) {
      auto& relay = state.nodes[hop];
      if (static_cast<int>(relay.tran_queue.size()) >= env.topology.nodes[hop].queue_capacity) {
        ++state.totals.dropped;
        continue;
      }
      relay.tran_queue.push_back(std::move(p));
      tran_max[hop] = std::max(tran_max[hop], static_cast<double>(relay.tran_queue.size()));
    }
  }

  FrameResult result;
  result.observations.resize(n);
  result.rewards.resize(n);
  for (int i = 0; i < n; ++i) {
    result.observations[i] = {static_cast<double>(state.nodes[i].gen_queue.size()), gen_max[i],
                              static_cast<double>(state.nodes[i].tran_queue.size()), tran_max[i]};
    result.rewards[i] = delay_count[i] > 0 ? -delay_sum[i] / delay_count[i] : 0.0;
  }
  result.delivered_bits = std::move(bits_to);
  result.delta.generated = state.totals.generated - before.generated;
  result.delta.delivered = state.totals.delivered - before.delivered;
  result.delta.dropped = state.totals.dropped - before.dropped;
  result.delta.total_delay = frame_delay;
  result.delta.delivered_bits = frame_bits;
  state.totals.total_delay += frame_delay;
  state.totals.delivered_bits += frame_bits;
  state.last_observations = result.observations;
  ++state.clock;
  return result;
}

}  // namespace macdmp::netsim
