#include "macdmp/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>

#include "macdmp/dataset.hpp"
#include "macdmp/errors.hpp"

namespace macdmp::planner {

using models::kObsDim;
using tensor::Tensor;

void PlannerConfig::validate(int K) const {
  if (horizon < 2) throw ConfigError("planner.horizon must be >= 2");
  if (replan_every < 1) throw ConfigError("planner.replan_every must be >= 1");
  guidance.validate(K);
}

MacdmpPlanner::MacdmpPlanner(models::ModelBundle& bundle, diffusion::NoiseSchedule schedule,
                             PlannerConfig cfg, std::uint64_t seed, int agents)
    : bundle_(bundle), schedule_(std::move(schedule)), cfg_(cfg) {
  cfg_.validate(schedule_.K);
  if (cfg_.horizon != bundle_.config.horizon) {
    throw ConfigError("planner.horizon " + std::to_string(cfg_.horizon) + " differs from the model horizon " +
                      std::to_string(bundle_.config.horizon));
  }
  if (schedule_.K != bundle_.config.diffusion_steps) {
    throw ConfigError("planner: schedule K differs from the model's diffusion steps");
  }
  const auto base = derive_seed(seed, streams::kPlanner);
  for (int i = 0; i < agents; ++i) rngs_.push_back(make_rng(base, static_cast<std::uint64_t>(i)));
}

std::vector<double> MacdmpPlanner::plan_actions(std::span<const netsim::Observation> observations,
                                                const netsim::Topology& topology) {
  const int n = static_cast<int>(observations.size());
  if (n != static_cast<int>(rngs_.size())) throw DomainError("plan_actions: agent count changed");
  const int H = cfg_.horizon;
  const auto& st = bundle_.stats;

  Tensor o(n, kObsDim);
  for (int i = 0; i < n; ++i) {
    const auto v = observations[i].to_array();
    for (int c = 0; c < kObsDim; ++c) o(i, c) = st.standardize_obs(v[c], c);
  }

  if (plan_.size() == 0 || offset_ >= cfg_.replan_every || offset_ + 1 >= H) {
    Tensor obar(n, kObsDim);
    for (int i = 0; i < n; ++i) {
      const auto v = bundle_.config.use_mf ? netsim::mean_field_obs(observations, topology, i).to_array()
                                           : observations[i].to_array();
      for (int c = 0; c < kObsDim; ++c) obar(i, c) = st.standardize_obs(v[c], c);
    }
    diffusion::NetNoise eps(bundle_.denoiser);
    diffusion::NetGuidance guide(bundle_.classifier);
    plan_ = diffusion::sample_plan({&o, &obar, H}, eps, &guide, schedule_, cfg_.guidance, rngs_);
    offset_ = 0;
    ++samples_;
  }

  Tensor pairs(n, 2 * kObsDim);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < kObsDim; ++c) {
      pairs(i, c) = o(i, c);
      pairs(i, kObsDim + c) = plan_(i, (offset_ + 1) * kObsDim + c);
    }
  }
  const Tensor a = bundle_.inverse.predict(pairs);
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    out[i] = std::max(cfg_.action_clamp_min, a[i] * st.act_std + st.act_mean);
  }
  ++offset_;
  return out;
}

Tensor MacdmpPlanner::last_plan() const {
  Tensor out = plan_;
  const int H = cfg_.horizon;
  for (int r = 0; r < out.rows(); ++r) {
    for (int j = 0; j < 2 * H; ++j) {
      for (int c = 0; c < kObsDim; ++c) {
        out(r, j * kObsDim + c) = bundle_.stats.destandardize_obs(out(r, j * kObsDim + c), c);
      }
    }
  }
  return out;
}

const char* policy_name(PolicyKind p) {
  switch (p) {
    case PolicyKind::kMacdmp:
      return "macdmp";
    case PolicyKind::kMacdmpNoMf:
      return "macdmp_no_mf";
    case PolicyKind::kUniform:
      return "uniform";
    case PolicyKind::kProportional:
      return "proportional";
  }
  return "uniform";
}

PolicyKind parse_policy(const std::string& s) {
  if (s == "macdmp") return PolicyKind::kMacdmp;
  if (s == "macdmp_no_mf") return PolicyKind::kMacdmpNoMf;
  if (s == "uniform") return PolicyKind::kUniform;
  if (s == "proportional") return PolicyKind::kProportional;
  throw ConfigError("policy: unknown policy '" + s + "' (macdmp|macdmp_no_mf|uniform|proportional)");
}

bool is_learned(PolicyKind p) { return p == PolicyKind::kMacdmp || p == PolicyKind::kMacdmpNoMf; }

EpisodeMetrics run_episode(const netsim::Environment& env, PolicyKind policy, models::ModelBundle* bundle,
                           const diffusion::NoiseSchedule* schedule, const EvalOptions& opts,
                           std::uint64_t seed) {
  const int n = env.size();
  std::unique_ptr<MacdmpPlanner> planner;
  if (is_learned(policy)) {
    if (!bundle || !schedule) throw MissingArtifact(std::string(policy_name(policy)) + " needs a model checkpoint");
    if (bundle->config.use_mf != (policy == PolicyKind::kMacdmp)) {
      throw ConfigError(std::string("policy ") + policy_name(policy) +
                        " does not match the checkpoint's mean-field setting");
    }
    planner = std::make_unique<MacdmpPlanner>(*bundle, *schedule, opts.planner, seed, n);
  }
  auto state = netsim::initial_state(env, seed);
  Rng alloc_rng = make_rng(seed, streams::kAllocation);
  Rng unused = make_rng(seed, streams::kPolicy);

  EpisodeMetrics m;
  m.seed = seed;
  m.node_delivered_bits.assign(n, 0.0);
  double reward_sum = 0.0;
  for (int t = 0; t < opts.frames; ++t) {
    const auto obs = state.last_observations;
    std::vector<double> demands;
    switch (policy) {
      case PolicyKind::kUniform:
        demands = dataset::behavior_demands(dataset::Policy::kUniform, obs, env.grid, 0.0, unused);
        break;
      case PolicyKind::kProportional:
        demands = dataset::behavior_demands(dataset::Policy::kProportional, obs, env.grid, 0.0, unused);
        break;
      default:
        demands = planner->plan_actions(obs, env.topology);
    }
    const auto alloc = netsim::allocate_rbs(demands, env.grid, alloc_rng);
    std::size_t cells = 0;
    for (const auto& a : alloc) cells += a.size();
    if (cells != static_cast<std::size_t>(env.grid.blocks())) {
      throw ProtocolError("executed allocation does not cover M*L blocks");
    }
    const auto res = netsim::step_frame(env, state, alloc);
    for (int i = 0; i < n; ++i) {
      reward_sum += res.rewards[i];
      m.node_delivered_bits[i] += res.delivered_bits[i];
    }
  }
  m.totals = state.totals;
  const double duration = opts.frames * env.grid.frame_duration;
  m.avg_reward = opts.frames > 0 ? reward_sum / (static_cast<double>(opts.frames) * n) : 0.0;
  m.avg_throughput = duration > 0 ? m.totals.delivered_bits / duration / n : 0.0;
  m.avg_delay = m.totals.delivered ? m.totals.total_delay / static_cast<double>(m.totals.delivered) : 0.0;
  m.packet_loss_rate =
      m.totals.generated ? static_cast<double>(m.totals.dropped) / static_cast<double>(m.totals.generated) : 0.0;
  return m;
}

EvalReport evaluate(PolicyKind policy, const netsim::ScenarioConfig& scenario,
                    std::span<const std::uint64_t> seeds, models::ModelBundle* bundle,
                    const diffusion::NoiseSchedule* schedule, const EvalOptions& opts) {
  const auto env = netsim::make_environment(scenario);
  EvalReport r;
  r.policy = policy_name(policy);
  r.scenario = scenario.name;
  r.config_hash = scenario.hash_hex();
  for (auto s : seeds) r.per_seed.push_back(run_episode(env, policy, bundle, schedule, opts, s));
  return r;
}

namespace {

template <typename F>
double mean_of(const std::vector<EpisodeMetrics>& v, F f) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (const auto& m : v) s += f(m);
  return s / static_cast<double>(v.size());
}

template <typename F>
double std_of(const std::vector<EpisodeMetrics>& v, F f) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v, f);
  double s = 0.0;
  for (const auto& m : v) s += (f(m) - mu) * (f(m) - mu);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double EvalReport::mean_reward() const { return mean_of(per_seed, [](auto& m) { return m.avg_reward; }); }
double EvalReport::std_reward() const { return std_of(per_seed, [](auto& m) { return m.avg_reward; }); }
double EvalReport::mean_throughput() const {
  return mean_of(per_seed, [](auto& m) { return m.avg_throughput; });
}
double EvalReport::mean_delay() const { return mean_of(per_seed, [](auto& m) { return m.avg_delay; }); }
double EvalReport::mean_loss() const { return mean_of(per_seed, [](auto& m) { return m.packet_loss_rate; }); }

void write_csv_header(std::ostream& out, const std::vector<std::string>& extra) {
  out << "policy,scenario,config_hash,seed";
  for (const auto& e : extra) out << ',' << e;
  out << ",avg_reward,avg_throughput_bps,avg_delay_s,packet_loss_rate,generated,delivered,dropped\n";
}

void write_csv_rows(std::ostream& out, const EvalReport& report, const std::vector<std::string>& extra) {
  for (const auto& m : report.per_seed) {
    out << report.policy << ',' << report.scenario << ',' << report.config_hash << ',' << m.seed;
    for (const auto& e : extra) out << ',' << e;
    out << ',' << fmt(m.avg_reward) << ',' << fmt(m.avg_throughput) << ',' << fmt(m.avg_delay) << ','
        << fmt(m.packet_loss_rate) << ',' << m.totals.generated << ',' << m.totals.delivered << ','
        << m.totals.dropped << '\n';
  }
}

void write_summary(std::ostream& out, const EvalReport& r) {
  auto line = [&](const char* name, auto f) {
    out << "  " << name << ": mean " << fmt(mean_of(r.per_seed, f)) << "  std " << fmt(std_of(r.per_seed, f))
        << '\n';
  };
  out << r.policy << " on " << r.scenario << " (config " << r.config_hash << ", " << r.per_seed.size()
      << " seeds)\n";
  line("avg_reward", [](auto& m) { return m.avg_reward; });
  line("avg_throughput_bps", [](auto& m) { return m.avg_throughput; });
  line("avg_delay_s", [](auto& m) { return m.avg_delay; });
  line("packet_loss_rate", [](auto& m) { return m.packet_loss_rate; });
}

}  // namespace macdmp::planner
