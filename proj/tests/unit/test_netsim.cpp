#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "macdmp/errors.hpp"
#include "macdmp/netsim.hpp"
#include "macdmp/scenario.hpp"

using namespace macdmp;
using namespace macdmp::netsim;

namespace {

double lambda_of(double f) { return kSpeedOfLight / f; }

RadioParams radio_with_range(double range) {
  RadioParams r;
  r.rx_sensitivity = sensitivity_for_range(r, range);
  return r;
}

Environment line_env(int n, double spacing, double interarrival = INFINITY, int cap = 50) {
  std::vector<NodeSpec> nodes;
  for (int i = 0; i < n; ++i) {
    NodeSpec s;
    s.id = i;
    s.position = {i * spacing, 0.0};
    s.mean_interarrival = interarrival;
    s.queue_capacity = cap;
    nodes.push_back(s);
  }
  Environment env;
  env.topology = build_topology(nodes, radio_with_range(1.5 * spacing));
  return env;
}

Allocation all_to(int owner, int n, const FrameGrid& g) {
  Allocation a(n);
  for (int m = 0; m < g.slots; ++m)
    for (int l = 0; l < g.channels; ++l) a[owner].push_back({m, l});
  return a;
}

}  // namespace

TEST_CASE("path loss closed forms") {
  for (double f : {1e9, 2.4e9, 5.8e9}) {
    const double d = lambda_of(f) / (4.0 * std::numbers::pi);
    CHECK(path_loss(d, f) == doctest::Approx(1.0).epsilon(1e-12));
  }
  const double lam = kSpeedOfLight / 3e8;
  const double want = std::pow(lam / (4.0 * std::numbers::pi * 1000.0), 2);
  CHECK(path_loss(1000.0, 3e8) == doctest::Approx(want).epsilon(1e-14));
  for (double d : {1.0, 37.5, 3600.0}) {
    CHECK(path_loss(2 * d, 2.4e9) / path_loss(d, 2.4e9) == doctest::Approx(0.25).epsilon(1e-12));
  }
  CHECK_THROWS_AS(path_loss(0.0, 1e9), DomainError);
  CHECK_THROWS_AS(path_loss(1.0, -1.0), DomainError);
}

TEST_CASE("received power is multiplicative") {
  RadioParams r;
  const double d = lambda_of(r.carrier_freq) / (4.0 * std::numbers::pi);
  CHECK(received_power(r, d) == doctest::Approx(1.0).epsilon(1e-12));
  r.transmit_power = 2;
  r.gain_tx = 3;
  r.gain_rx = 4;
  CHECK(received_power(r, 500.0) == doctest::Approx(24.0 * path_loss(500.0, r.carrier_freq)).epsilon(1e-12));
  RadioParams hi = r;
  hi.carrier_freq *= 2;
  CHECK(received_power(hi, 500.0) == doctest::Approx(received_power(r, 500.0) / 4.0).epsilon(1e-12));
}

TEST_CASE("topology boundary, routing and radius equivalence") {
  RadioParams r;
  r.rx_sensitivity = received_power(r, 1000.0);
  std::vector<NodeSpec> two(2);
  two[1].id = 1;
  two[1].position = {1000.0, 0.0};
  const auto t2 = build_topology(two, r);
  CHECK(t2.adjacent(0, 1));

  const auto env = line_env(3, 1000.0);
  CHECK(!env.topology.adjacent(0, 2));
  CHECK(env.topology.route(0, 2) == 1);
  CHECK(env.topology.route(2, 0) == 1);

  std::vector<NodeSpec> apart(2);
  apart[1].id = 1;
  apart[1].position = {5000.0, 0.0};
  CHECK_THROWS_AS(build_topology(apart, radio_with_range(1000.0)), TopologyError);

  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto sc = load_scenario("s8_2v6");
    sc.layout_seed = seed;
    const auto e = make_environment(sc);
    const auto& t = e.topology;
    for (int i = 0; i < t.size(); ++i) {
      CHECK(!t.adjacent(i, i));
      for (int j = 0; j < t.size(); ++j) {
        CHECK(t.adjacent(i, j) == t.adjacent(j, i));
        if (i != j) {
          const double d = distance(t.nodes[i].position, t.nodes[j].position);
          CHECK(t.adjacent(i, j) == (d <= sc.range_m * (1 + 1e-12)));
          CHECK(t.adjacent(i, t.route(i, j)));
        }
      }
    }
  }
}

TEST_CASE("rb_counts examples") {
  CHECK(rb_counts(std::vector<double>{2, 3, 5}, 40) == std::vector<int>{8, 12, 20});
  CHECK(rb_counts(std::vector<double>{1, 1, 1}, 40) == std::vector<int>{14, 13, 13});
  CHECK(rb_counts(std::vector<double>{0, 0, 0}, 40) == std::vector<int>{14, 13, 13});
  CHECK_THROWS_AS(rb_counts(std::vector<double>{1, -1}, 40), DomainError);
  CHECK_THROWS_AS(rb_counts(std::vector<double>{1, NAN}, 40), DomainError);
}

// Independent largest-remainder oracle in exact integer arithmetic for
// integer demands.
TEST_CASE("rb_counts matches a largest-remainder oracle") {
  Rng rng = make_rng(5, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 9;
    std::vector<double> d(n);
    long sum = 0;
    for (auto& v : d) {
      v = static_cast<double>(rng() % 50);
      sum += static_cast<long>(v);
    }
    const int total = 40;
    std::vector<int> want(n);
    if (sum == 0) {
      for (int i = 0; i < n; ++i) want[i] = total / n + (i < total % n);
    } else {
      std::vector<long> rem(n);
      int given = 0;
      for (int i = 0; i < n; ++i) {
        want[i] = static_cast<int>(static_cast<long>(d[i]) * total / sum);
        rem[i] = static_cast<long>(d[i]) * total % sum;
        given += want[i];
      }
      std::vector<int> order(n);
      for (int i = 0; i < n; ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
      for (int r = 0; given < total; ++r, ++given) ++want[order[r]];
    }
    const auto got = rb_counts(d, total);
    CHECK(got == want);
  }
}

TEST_CASE("allocate_rbs partitions the grid") {
  FrameGrid g;
  Rng rng = make_rng(9, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 12;
    std::vector<double> d(n);
    for (auto& v : d) v = (rng() % 4 == 0) ? 0.0 : uniform01(rng) * 10;
    const auto a = allocate_rbs(d, g, rng);
    std::set<ResourceBlock> seen;
    std::size_t total = 0;
    const auto counts = rb_counts(d, g.blocks());
    for (int i = 0; i < n; ++i) {
      CHECK(static_cast<int>(a[i].size()) == counts[i]);
      total += a[i].size();
      seen.insert(a[i].begin(), a[i].end());
    }
    CHECK(total == static_cast<std::size_t>(g.blocks()));
    CHECK(seen.size() == static_cast<std::size_t>(g.blocks()));
  }
}

TEST_CASE("mean field observation") {
  const auto env = line_env(3, 1000.0);
  std::vector<Observation> obs{{1, 2, 3, 4}, {9, 9, 9, 9}, {3, 4, 5, 6}};
  CHECK(mean_field_obs(obs, env.topology, 1) == Observation{2, 3, 4, 5});
  CHECK(mean_field_obs(obs, env.topology, 0) == obs[1]);
  Topology lonely;
  lonely.nodes.resize(1);
  lonely.neighbors.resize(1);
  lonely.adjacency.assign(1, 0);
  std::vector<Observation> one{{1, 2, 3, 4}};
  CHECK(mean_field_obs(one, lonely, 0) == one[0]);
}

TEST_CASE("empty network stays empty") {
  const auto env = line_env(4, 1000.0);
  auto st = initial_state(env, 1);
  Rng rng = make_rng(1, 1);
  for (int t = 0; t < 20; ++t) {
    const auto res = step_frame(env, st, allocate_rbs(std::vector<double>(4, 1.0), env.grid, rng));
    for (int i = 0; i < 4; ++i) {
      CHECK(res.observations[i] == Observation{});
      CHECK(res.rewards[i] == 0.0);
    }
  }
  CHECK(st.totals.generated == 0);
}

TEST_CASE("single packet to a neighbor") {
  const auto env = line_env(2, 1000.0);
  auto st = initial_state(env, 1);
  Packet p;
  p.src = 0;
  p.dst = 1;
  p.size = 1000;
  p.created_at = 1e-3;
  const auto res = step_frame(env, st, all_to(0, 2, env.grid), {p});
  CHECK(st.totals.delivered == 1);
  const double delay = env.grid.frame_duration - 1e-3;
  CHECK(res.rewards[1] == doctest::Approx(-delay).epsilon(1e-12));
  CHECK(res.rewards[0] == 0.0);
  CHECK(res.delivered_bits[1] == 1000.0);
  CHECK(st.totals.total_delay == doctest::Approx(delay));
}

TEST_CASE("relayed packets move one hop per slot") {
  const auto env = line_env(3, 1000.0);
  auto st = initial_state(env, 1);
  Packet p;
  p.src = 0;
  p.dst = 2;
  p.size = 1000;
  // Only node 0 holds blocks: the packet waits at the relay.
  step_frame(env, st, all_to(0, 3, env.grid), {p});
  CHECK(st.nodes[1].tran_queue.size() == 1);
  CHECK(st.totals.delivered == 0);
  const auto res = step_frame(env, st, all_to(1, 3, env.grid), {});
  CHECK(st.totals.delivered == 1);
  CHECK(res.rewards[2] == doctest::Approx(-2 * env.grid.frame_duration));
}

TEST_CASE("drop-tail admission") {
  const auto env = line_env(2, 1000.0, INFINITY, 3);
  auto st = initial_state(env, 1);
  Packet p;
  p.src = 0;
  p.dst = 1;
  for (int i = 0; i < 3; ++i) CHECK(admit_generated(env, st, p));
  CHECK(!admit_generated(env, st, p));
  CHECK(st.totals.dropped == 1);
  CHECK(st.nodes[0].gen_queue.size() == 3);
}

TEST_CASE("overlapping or incomplete allocation is a protocol error") {
  const auto env = line_env(2, 1000.0);
  auto st = initial_state(env, 1);
  auto a = all_to(0, 2, env.grid);
  a[1].push_back({0, 0});
  CHECK_THROWS_AS(step_frame(env, st, a, {}), ProtocolError);
  auto b = all_to(0, 2, env.grid);
  b[0].pop_back();
  CHECK_THROWS_AS(step_frame(env, st, b, {}), ProtocolError);
}

TEST_CASE("traffic count matches the Poisson mean") {
  const double mean_ia = 2e-3;
  const auto env = line_env(2, 1000.0, mean_ia);
  auto st = initial_state(env, 3);
  const int frames = 10000;
  std::uint64_t count = 0;
  for (int t = 0; t < frames; ++t) {
    count += generate_traffic(env, st).size();
    ++st.clock;
  }
  const double expect = 2.0 * frames * env.grid.frame_duration / mean_ia;
  CHECK(std::abs(static_cast<double>(count) - expect) <= 3.0 * std::sqrt(expect));
}

TEST_CASE("conservation and observation bounds on bundled scenarios") {
  for (const auto& name : bundled_scenario_names()) {
    auto sc = load_scenario(name);
    sc.queue_capacity = 5;  // force drops
    const auto env = make_environment(sc);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto st = initial_state(env, seed);
      Rng rng = make_rng(seed, 99);
      for (int t = 0; t < 300; ++t) {
        std::vector<double> d(env.size());
        for (auto& v : d) v = uniform01(rng);
        const auto res = step_frame(env, st, allocate_rbs(d, env.grid, rng));
        REQUIRE(st.totals.generated == st.totals.delivered + st.totals.dropped + st.queued());
        for (const auto& o : res.observations) {
          CHECK(o.gen <= o.gen_max);
          CHECK(o.tran <= o.tran_max);
          CHECK(o.gen_max <= sc.queue_capacity);
          CHECK(o.tran_max <= sc.queue_capacity);
        }
        for (double r : res.rewards) CHECK(r <= 0.0);
      }
    }
  }
}

TEST_CASE("same seed gives the same trajectory") {
  const auto env = make_environment(load_scenario("s9_4v5"));
  auto run = [&](std::uint64_t seed) {
    auto st = initial_state(env, seed);
    Rng rng = make_rng(seed, streams::kAllocation);
    std::vector<double> trace;
    for (int t = 0; t < 200; ++t) {
      const auto res = step_frame(env, st, allocate_rbs(std::vector<double>(env.size(), 1.0), env.grid, rng));
      for (int i = 0; i < env.size(); ++i) {
        trace.push_back(res.rewards[i]);
        for (double v : res.observations[i].to_array()) trace.push_back(v);
      }
    }
    return trace;
  };
  CHECK(run(4) == run(4));
  CHECK(run(4) != run(5));
}

TEST_CASE("scenario YAML round trip and config errors") {
  for (const auto& name : bundled_scenario_names()) {
    const auto sc = load_scenario(name);
    const auto back = parse_scenario_yaml(to_yaml(sc));
    CHECK(back.canonical() == sc.canonical());
    CHECK(back.hash() == sc.hash());
  }
  CHECK_THROWS_AS(load_scenario("no_such_scenario"), ConfigError);
  CHECK_THROWS_AS(make_environment(parse_scenario_yaml("nodes:\n  count: 1\n")), ConfigError);
}

TEST_CASE("frame grid derives slot capacity") {
  FrameGrid g;
  CHECK(g.slot_capacity() == doctest::Approx(1000.0));
  g.slots = 0;
  CHECK_THROWS(g.validate());
}
