#include "macdmp/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "macdmp/errors.hpp"

namespace macdmp::dataset {

double DatasetStats::normalize_return(double y) const {
  const double span = return_max - return_min;
  if (!(span > 0.0)) return 0.5;
  return (y - return_min) / span;
}

const char* policy_name(Policy p) {
  switch (p) {
    case Policy::kProportional:
      return "proportional";
    case Policy::kUniform:
      return "uniform";
    case Policy::kNoisyProportional:
      return "noisy";
  }
  return "proportional";
}

Policy parse_policy(const std::string& s) {
  if (s == "proportional") return Policy::kProportional;
  if (s == "uniform") return Policy::kUniform;
  if (s == "noisy" || s == "noisy-proportional") return Policy::kNoisyProportional;
  throw ConfigError("policy: unknown behavior policy '" + s + "'");
}

Policy mixture_policy(int index) {
  const int r = ((index % 10) + 10) % 10;
  if (r < 5) return Policy::kProportional;
  if (r < 8) return Policy::kNoisyProportional;
  return Policy::kUniform;
}

std::vector<double> behavior_demands(Policy policy, std::span<const Observation> obs,
                                     const netsim::FrameGrid& grid, double noise_sigma, Rng& rng) {
  const std::size_t n = obs.size();
  const double total = grid.blocks();
  std::vector<double> out(n, total / static_cast<double>(n));
  if (policy == Policy::kUniform) return out;

  double sum = 0.0;
  for (const auto& o : obs) sum += o.gen + o.tran;
  if (sum > 0.0) {
    for (std::size_t i = 0; i < n; ++i) out[i] = total * (obs[i].gen + obs[i].tran) / sum;
  }
  if (policy == Policy::kNoisyProportional) {
    for (auto& d : out) d *= std::exp(noise_sigma * standard_normal(rng));
  }
  return out;
}

RolloutResult run_behavior_policy(const netsim::Environment& env, Policy policy, int frames,
                                  std::uint64_t seed, double noise_sigma) {
  if (frames < 0) throw DomainError("run_behavior_policy: negative duration");
  const int n = env.size();
  auto state = netsim::initial_state(env, seed);
  Rng alloc_rng = make_rng(seed, streams::kAllocation);
  Rng policy_rng = make_rng(seed, streams::kPolicy);

  RolloutResult out;
  out.streams.assign(n, {});
  for (auto& s : out.streams) s.reserve(frames);
  for (int t = 0; t < frames; ++t) {
    const auto obs = state.last_observations;
    const auto demands = behavior_demands(policy, obs, env.grid, noise_sigma, policy_rng);
    const auto alloc = netsim::allocate_rbs(demands, env.grid, alloc_rng);
    const auto res = netsim::step_frame(env, state, alloc);
    for (int i = 0; i < n; ++i) {
      out.streams[i].push_back({t, i, obs[i], netsim::mean_field_obs(obs, env.topology, i),
                                demands[i], res.rewards[i]});
    }
  }
  out.totals = state.totals;
  return out;
}

double compute_return(std::span<const double> rewards, double gamma) {
  if (rewards.empty()) throw DomainError("compute_return: empty reward sequence");
  double acc = 0.0;
  double w = 1.0;
  for (double r : rewards) {
    acc += w * r;
    w *= gamma;
  }
  return acc;
}

std::vector<TrajectoryWindow> slice_windows(const RecordStream& records, int horizon, double gamma) {
  if (horizon < 1) throw DomainError("slice_windows: horizon must be >= 1");
  std::vector<TrajectoryWindow> out;
  if (static_cast<int>(records.size()) < horizon) return out;
  const std::size_t count = records.size() - horizon + 1;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    TrajectoryWindow w;
    w.horizon = horizon;
    w.start = records[s].t;
    w.node = records[s].node;
    w.x0.reserve(horizon * 4);
    w.xbar0.reserve(horizon * 4);
    for (int j = 0; j < horizon; ++j) {
      const auto& r = records[s + j];
      for (double v : r.obs.to_array()) w.x0.push_back(v);
      for (double v : r.mf_obs.to_array()) w.xbar0.push_back(v);
      w.actions.push_back(r.action);
      w.rewards.push_back(r.reward);
    }
    w.y = compute_return(w.rewards, gamma);
    out.push_back(std::move(w));
  }
  return out;
}

DatasetStats fit_stats(std::span<const RecordStream> streams,
                       std::span<const TrajectoryWindow> windows) {
  DatasetStats st;
  std::array<double, 4> sum{}, sq{};
  double n = 0.0, asum = 0.0, asq = 0.0, an = 0.0;
  for (const auto& s : streams) {
    for (const auto& r : s) {
      for (const auto& o : {r.obs, r.mf_obs}) {
        const auto v = o.to_array();
        for (int c = 0; c < 4; ++c) sum[c] += v[c];
      }
      n += 2.0;
      asum += r.action;
      an += 1.0;
    }
  }
  if (n > 0) {
    for (int c = 0; c < 4; ++c) st.obs_mean[c] = sum[c] / n;
    st.act_mean = asum / an;
    // Two-pass variance for accuracy.
    for (const auto& s : streams) {
      for (const auto& r : s) {
        for (const auto& o : {r.obs, r.mf_obs}) {
          const auto v = o.to_array();
          for (int c = 0; c < 4; ++c) sq[c] += (v[c] - st.obs_mean[c]) * (v[c] - st.obs_mean[c]);
        }
        asq += (r.action - st.act_mean) * (r.action - st.act_mean);
      }
    }
    for (int c = 0; c < 4; ++c) st.obs_std[c] = std::max(std::sqrt(sq[c] / n), kStdFloor);
    st.act_std = std::max(std::sqrt(asq / an), kStdFloor);
  }
  if (!windows.empty()) {
    st.return_min = st.return_max = windows.front().y;
    for (const auto& w : windows) {
      st.return_min = std::min(st.return_min, w.y);
      st.return_max = std::max(st.return_max, w.y);
    }
  }
  return st;
}

namespace {

void put_obs(io::ByteWriter& w, const Observation& o) { w.put_f64s(o.to_array()); }

Observation get_obs(io::ByteReader& r) {
  std::array<double, 4> v{};
  r.get_f64s(v);
  return Observation::from_array(v);
}

void put_vec(io::ByteWriter& w, const std::vector<double>& v) {
  w.put_u64(v.size());
  w.put_f64s(v);
}

std::vector<double> get_vec(io::ByteReader& r) {
  const auto n = r.get_u64();
  if (n > r.remaining() / 8) throw TruncatedFile("vector length exceeds block size");
  std::vector<double> v(n);
  r.get_f64s(v);
  return v;
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const Dataset& ds, io::FileKind kind) {
  io::ContainerWriter out(path, kind);
  {
    io::ByteWriter w;
    w.put_u32(kSchemaVersion);
    w.put_u32(ds.config_hash);
    w.put_string(ds.scenario);
    w.put_u32(static_cast<std::uint32_t>(ds.horizon));
    w.put_f64(ds.gamma);
    w.put_u64(ds.streams.size());
    w.put_u64(ds.windows.size());
    out.append("HEAD", w.bytes());
  }
  {
    io::ByteWriter w;
    w.put_f64s(ds.stats.obs_mean);
    w.put_f64s(ds.stats.obs_std);
    w.put_f64(ds.stats.act_mean);
    w.put_f64(ds.stats.act_std);
    w.put_f64(ds.stats.return_min);
    w.put_f64(ds.stats.return_max);
    out.append("STAT", w.bytes());
  }
  for (const auto& s : ds.streams) {
    io::ByteWriter w;
    w.put_u64(s.size());
    for (const auto& r : s) {
      w.put_i64(r.t);
      w.put_u32(static_cast<std::uint32_t>(r.node));
      put_obs(w, r.obs);
      put_obs(w, r.mf_obs);
      w.put_f64(r.action);
      w.put_f64(r.reward);
    }
    out.append("TRAJ", w.bytes());
  }
  for (const auto& win : ds.windows) {
    io::ByteWriter w;
    w.put_u32(static_cast<std::uint32_t>(win.horizon));
    w.put_i64(win.start);
    w.put_u32(static_cast<std::uint32_t>(win.node));
    w.put_f64(win.y);
    put_vec(w, win.x0);
    put_vec(w, win.xbar0);
    put_vec(w, win.actions);
    put_vec(w, win.rewards);
    out.append("WIND", w.bytes());
  }
  out.finish();
}

Dataset read_dataset(const std::filesystem::path& path, io::FileKind kind) {
  const auto blocks = io::read_container(path, kind);
  if (blocks.size() < 2 || blocks[0].tag != "HEAD" || blocks[1].tag != "STAT") {
    throw SchemaError(path.string() + ": missing HEAD/STAT blocks");
  }
  Dataset ds;
  std::uint64_t n_streams = 0, n_windows = 0;
  {
    io::ByteReader r(blocks[0].payload);
    const auto version = r.get_u32();
    if (version != kSchemaVersion) {
      throw VersionMismatch(path.string() + ": dataset schema version " + std::to_string(version) +
                            ", expected " + std::to_string(kSchemaVersion));
    }
    ds.config_hash = r.get_u32();
    ds.scenario = r.get_string();
    ds.horizon = static_cast<int>(r.get_u32());
    ds.gamma = r.get_f64();
    n_streams = r.get_u64();
    n_windows = r.get_u64();
  }
  {
    io::ByteReader r(blocks[1].payload);
    r.get_f64s(ds.stats.obs_mean);
    r.get_f64s(ds.stats.obs_std);
    ds.stats.act_mean = r.get_f64();
    ds.stats.act_std = r.get_f64();
    ds.stats.return_min = r.get_f64();
    ds.stats.return_max = r.get_f64();
  }
  for (std::size_t b = 2; b < blocks.size(); ++b) {
    io::ByteReader r(blocks[b].payload);
    if (blocks[b].tag == "TRAJ") {
      const auto n = r.get_u64();
      if (n > r.remaining() / 92) throw TruncatedFile("record count exceeds block size");
      RecordStream s(n);
      for (auto& rec : s) {
        rec.t = r.get_i64();
        rec.node = static_cast<int>(r.get_u32());
        rec.obs = get_obs(r);
        rec.mf_obs = get_obs(r);
        rec.action = r.get_f64();
        rec.reward = r.get_f64();
      }
      ds.streams.push_back(std::move(s));
    } else if (blocks[b].tag == "WIND") {
      TrajectoryWindow w;
      w.horizon = static_cast<int>(r.get_u32());
      w.start = r.get_i64();
      w.node = static_cast<int>(r.get_u32());
      w.y = r.get_f64();
      w.x0 = get_vec(r);
      w.xbar0 = get_vec(r);
      w.actions = get_vec(r);
      w.rewards = get_vec(r);
      ds.windows.push_back(std::move(w));
    } else {
      throw SchemaError(path.string() + ": unexpected block '" + blocks[b].tag + "'");
    }
    if (!r.at_end()) throw SchemaError(path.string() + ": trailing bytes in " + blocks[b].tag);
  }
  if (ds.streams.size() != n_streams || ds.windows.size() != n_windows) {
    throw SchemaError(path.string() + ": block counts disagree with header");
  }
  return ds;
}

}  // namespace macdmp::dataset
