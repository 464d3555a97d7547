#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "macdmp/container.hpp"
#include "macdmp/netsim.hpp"

namespace macdmp::dataset {

using netsim::Observation;

// One agent, one frame: the observation the agent acted on, its neighborhood
// mean at that moment, the raw demand it submitted and the reward it earned.
struct TransitionRecord {
  std::int64_t t = 0;
  int node = 0;
  Observation obs;
  Observation mf_obs;
  double action = 0.0;  // RB demand before normalization
  double reward = 0.0;

  bool operator==(const TransitionRecord&) const = default;
};

// Consecutive records of a single node.
using RecordStream = std::vector<TransitionRecord>;

struct TrajectoryWindow {
  int horizon = 0;
  std::vector<double> x0;     // horizon x 4, row-major
  std::vector<double> xbar0;  // horizon x 4
  std::vector<double> actions;  // horizon
  std::vector<double> rewards;  // horizon
  double y = 0.0;
  std::int64_t start = 0;
  int node = 0;

  bool operator==(const TrajectoryWindow&) const = default;
};

inline constexpr double kStdFloor = 1e-6;

struct DatasetStats {
  std::array<double, 4> obs_mean{0, 0, 0, 0};
  std::array<double, 4> obs_std{1, 1, 1, 1};
  double act_mean = 0.0;
  double act_std = 1.0;
  double return_min = 0.0;
  double return_max = 1.0;

  double normalize_return(double y) const;
  double standardize_obs(double v, int component) const {
    return (v - obs_mean[component]) / obs_std[component];
  }
  double destandardize_obs(double v, int component) const {
    return v * obs_std[component] + obs_mean[component];
  }
  bool operator==(const DatasetStats&) const = default;
};

enum class Policy { kProportional, kUniform, kNoisyProportional };

const char* policy_name(Policy p);
Policy parse_policy(const std::string& s);

// Policy used for trajectory `index` of a generated dataset: indices 0-4 of
// every ten are proportional, 5-7 noisy-proportional, 8-9 uniform.
Policy mixture_policy(int index);

// Raw demands in RB units. Proportional splits M*L by gen + tran (evenly when
// every queue is empty); uniform asks M*L/N each; noisy multiplies the
// proportional demand by exp(sigma * z) with z drawn from `rng`.
std::vector<double> behavior_demands(Policy policy, std::span<const Observation> obs,
                                     const netsim::FrameGrid& grid, double noise_sigma, Rng& rng);

struct RolloutResult {
  std::vector<RecordStream> streams;  // one per node
  netsim::QosCounters totals;
};

RolloutResult run_behavior_policy(const netsim::Environment& env, Policy policy, int frames,
                                  std::uint64_t seed, double noise_sigma = 0.3);

// sum_j gamma^j r_j.
double compute_return(std::span<const double> rewards, double gamma);

// Stride-1 windows of length H; empty when the stream is shorter than H.
std::vector<TrajectoryWindow> slice_windows(const RecordStream& records, int horizon, double gamma);

// Observation stats over every record (own and mean-field), action stats and
// the return range over `windows`.
DatasetStats fit_stats(std::span<const RecordStream> streams,
                       std::span<const TrajectoryWindow> windows);

struct Dataset {
  std::uint32_t config_hash = 0;
  std::string scenario;
  int horizon = 8;
  double gamma = 0.99;
  DatasetStats stats;
  std::vector<RecordStream> streams;
  std::vector<TrajectoryWindow> windows;

  bool operator==(const Dataset&) const = default;
};

inline constexpr std::uint32_t kSchemaVersion = 1;

// Traces use the same layout under FileKind::kTrace.
void write_dataset(const std::filesystem::path& path, const Dataset& ds,
                   io::FileKind kind = io::FileKind::kDataset);
Dataset read_dataset(const std::filesystem::path& path,
                     io::FileKind kind = io::FileKind::kDataset);

}  // namespace macdmp::dataset
