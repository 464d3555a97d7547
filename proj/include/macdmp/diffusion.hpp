#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "macdmp/dataset.hpp"
#include "macdmp/models.hpp"
#include "macdmp/rng.hpp"
#include "macdmp/tensor.hpp"

namespace macdmp::diffusion {

using tensor::Tensor;

enum class ScheduleKind { kLinear, kCosine };

// Arrays are indexed 0..K; index 0 holds alpha_bar = 1 and is otherwise unused.
struct NoiseSchedule {
  int K = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma2;  // ((1 - abar_{k-1}) / (1 - abar_k)) beta_k; 0 at k = 1
};

// Linear: beta interpolates beta_start..beta_end. Cosine: betas derived from
// abar(t) = cos^2(((t/K) + s) / (1 + s) * pi/2) with s = 0.008, clipped to
// [beta_start, beta_end]. Throws DomainError on any violated invariant.
NoiseSchedule make_schedule(int K, double beta_start, double beta_end, ScheduleKind kind);

// Cosine, K = 100, betas clipped to [1e-4, 0.5].
NoiseSchedule default_schedule(int K = 100);

const char* schedule_name(ScheduleKind kind);

enum class Sampler { kAncestral, kDpm1 };

struct GuidanceConfig {
  double zeta = 1.2;
  int k_sample = 100;
  Sampler sampler = Sampler::kAncestral;

  void validate(int K) const;
};

// Trajectory rows are [x (H x 4) | xbar (H x 4)], flattened.
Tensor pack_pair(std::span<const double> x, std::span<const double> xbar);

// sqrt(abar_k) z0 + sqrt(1 - abar_k) eps, rowwise with per-row k.
Tensor forward_noise(const Tensor& z0, std::span<const int> ks, const Tensor& eps,
                     const NoiseSchedule& schedule);
// Single-pair form.
std::pair<std::vector<double>, std::vector<double>> forward_noise(std::span<const double> x0,
                                                                  std::span<const double> xbar0, int k,
                                                                  std::span<const double> eps,
                                                                  const NoiseSchedule& schedule);

// Pluggable epsilon predictor and guidance gradient, so analytic models can
// stand in for the networks.
class NoiseModel {
 public:
  virtual ~NoiseModel() = default;
  virtual Tensor predict(const Tensor& z, std::span<const int> ks) = 0;
};

class GuidanceModel {
 public:
  virtual ~GuidanceModel() = default;
  virtual Tensor gradient(const Tensor& z, std::span<const int> ks) = 0;
};

class NetNoise : public NoiseModel {
 public:
  explicit NetNoise(models::DenoiserNet& net) : net_(net) {}
  Tensor predict(const Tensor& z, std::span<const int> ks) override { return net_.predict(z, ks); }

 private:
  models::DenoiserNet& net_;
};

class NetGuidance : public GuidanceModel {
 public:
  explicit NetGuidance(models::ClassifierNet& net) : net_(net) {}
  Tensor gradient(const Tensor& z, std::span<const int> ks) override { return net_.input_grad(z, ks); }

 private:
  models::ClassifierNet& net_;
};

// One guided ancestral step from k to k-1 for every row:
//   mu = (z - (1 - alpha_k)/sqrt(1 - abar_k) eps_hat) / sqrt(alpha_k) + zeta sigma2_k grad J(z)
// plus sqrt(sigma2_k) n for k > 1. The guidance model is not queried when zeta == 0.
// `rngs` holds one stream per row.
Tensor denoise_step(const Tensor& z, int k, NoiseModel& eps, GuidanceModel* guide,
                    const NoiseSchedule& schedule, double zeta, std::span<Rng> rngs);

// Overwrites row 0 of x and row 0 of xbar in every trajectory.
void apply_consistency(Tensor& z, const Tensor& o, const Tensor& obar, int horizon);

struct SampleInputs {
  const Tensor* o = nullptr;     // batch x 4, standardized
  const Tensor* obar = nullptr;  // batch x 4, standardized
  int horizon = 8;
};

// Ancestral or dpm1 sampling per guidance.sampler, starting from standard
// normal noise and enforcing the consistency rows after every step.
Tensor sample_plan(const SampleInputs& in, NoiseModel& eps, GuidanceModel* guide,
                   const NoiseSchedule& schedule, const GuidanceConfig& guidance, std::span<Rng> rngs);

// Strictly decreasing indices K = t_0 > t_1 > ... > t_n = 0, n <= k_sample,
// spaced uniformly in log abar.
std::vector<int> dpm1_grid(const NoiseSchedule& schedule, int k_sample);

// Deterministic first-order exponential-integrator sampler on dpm1_grid.
Tensor dpm1_sample(const SampleInputs& in, NoiseModel& eps, GuidanceModel* guide,
                   const NoiseSchedule& schedule, double zeta, int k_sample, std::span<Rng> rngs);

// ---- training ----

struct TrainingBatch {
  Tensor z_k;       // batch x traj_dim
  Tensor eps;       // batch x traj_dim
  std::vector<int> ks;
  Tensor y;         // batch x 1, normalized return
  Tensor pairs;     // (batch * (H-1)) x 8, standardized (o_t, o_{t+1})
  Tensor actions;   // (batch * (H-1)) x 1, standardized
};

// Standardizes windows with `stats`, draws k ~ U{1..K} and eps ~ N(0, I)
// per window and applies forward_noise jointly to (x0 || xbar0).
TrainingBatch make_batch(std::span<const dataset::TrajectoryWindow* const> windows,
                         const dataset::DatasetStats& stats, const NoiseSchedule& schedule,
                         bool use_mf, Rng& rng);

struct LossTerms {
  double total = 0.0;
  double inverse = 0.0;
  double noise = 0.0;
  double classifier = 0.0;
};

// MSE(a, f_phi) + MSE(eps, eps_theta) + MSE(y, J_psi) from raw predictions.
LossTerms loss_from_predictions(const Tensor& eps_hat, const Tensor& y_hat, const Tensor& a_hat,
                                const TrainingBatch& batch);

// Builds the joint loss on `tape` (parameters tracked) and returns its root.
tensor::Var joint_loss(tensor::Tape& tape, models::ModelBundle& bundle, const TrainingBatch& batch,
                       LossTerms* terms = nullptr);

struct TrainConfig {
  int epochs = 100;
  int steps_per_epoch = 1000;
  int batch_size = 64;
  double lr = 2e-4;
  std::uint64_t seed = 0;
};

struct TrainLog {
  std::vector<LossTerms> epoch_mean;  // mean loss per epoch
};

// Adam on the joint loss over windows sampled uniformly with replacement.
TrainLog train(models::ModelBundle& bundle, std::span<const dataset::TrajectoryWindow> windows,
               const NoiseSchedule& schedule, const TrainConfig& cfg);

}  // namespace macdmp::diffusion
