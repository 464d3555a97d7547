#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "macdmp/diffusion.hpp"
#include "macdmp/models.hpp"
#include "macdmp/netsim.hpp"
#include "macdmp/scenario.hpp"

namespace macdmp::planner {

struct PlannerConfig {
  int horizon = 8;
  diffusion::GuidanceConfig guidance;
  int replan_every = 1;
  double action_clamp_min = 0.0;

  void validate(int K) const;
};

// Receding-horizon controller for every agent of one network. All agents
// share the models; each samples with its own RNG stream.
class MacdmpPlanner {
 public:
  MacdmpPlanner(models::ModelBundle& bundle, diffusion::NoiseSchedule schedule, PlannerConfig cfg,
                std::uint64_t seed, int agents);

  // Nonnegative raw demands for the current frame.
  std::vector<double> plan_actions(std::span<const netsim::Observation> observations,
                                   const netsim::Topology& topology);

  // Most recent plan in observation units, batch x (2 * H * 4).
  tensor::Tensor last_plan() const;
  std::int64_t samples_drawn() const { return samples_; }

 private:
  models::ModelBundle& bundle_;
  diffusion::NoiseSchedule schedule_;
  PlannerConfig cfg_;
  std::vector<Rng> rngs_;
  tensor::Tensor plan_;  // standardized
  int offset_ = 0;
  std::int64_t samples_ = 0;
};

enum class PolicyKind { kMacdmp, kMacdmpNoMf, kUniform, kProportional };

const char* policy_name(PolicyKind p);
PolicyKind parse_policy(const std::string& s);
bool is_learned(PolicyKind p);

struct EpisodeMetrics {
  std::uint64_t seed = 0;
  double avg_reward = 0.0;      // mean over agents and frames
  double avg_throughput = 0.0;  // delivered bits per second per node
  double avg_delay = 0.0;       // s per delivered packet
  double packet_loss_rate = 0.0;
  netsim::QosCounters totals;
  std::vector<double> node_delivered_bits;  // bits delivered to each destination
};

struct EvalReport {
  std::string policy;
  std::string scenario;
  std::string config_hash;
  std::vector<EpisodeMetrics> per_seed;

  double mean_reward() const;
  double std_reward() const;
  double mean_throughput() const;
  double mean_delay() const;
  double mean_loss() const;
};

struct EvalOptions {
  int frames = 1000;  // 5 s at 5 ms per frame
  PlannerConfig planner;
};

// One episode with traffic, allocation and planner streams derived from
// `seed`. Learned policies need `bundle` and `schedule`.
EpisodeMetrics run_episode(const netsim::Environment& env, PolicyKind policy,
                           models::ModelBundle* bundle, const diffusion::NoiseSchedule* schedule,
                           const EvalOptions& opts, std::uint64_t seed);

EvalReport evaluate(PolicyKind policy, const netsim::ScenarioConfig& scenario,
                    std::span<const std::uint64_t> seeds, models::ModelBundle* bundle,
                    const diffusion::NoiseSchedule* schedule, const EvalOptions& opts);

// One row per (policy, scenario, seed); `extra` columns are appended as given.
void write_csv_header(std::ostream& out, const std::vector<std::string>& extra = {});
void write_csv_rows(std::ostream& out, const EvalReport& report,
                    const std::vector<std::string>& extra = {});
void write_summary(std::ostream& out, const EvalReport& report);

}  // namespace macdmp::planner
