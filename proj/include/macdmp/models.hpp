#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "macdmp/dataset.hpp"
#include "macdmp/rng.hpp"
#include "macdmp/tensor.hpp"

namespace macdmp::models {

using tensor::Parameter;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

inline constexpr int kObsDim = 4;

struct ModelConfig {
  int horizon = 8;
  int diffusion_steps = 100;  // K; valid k are 1..K
  int emb_dim = 32;
  int width = 256;
  int blocks = 4;
  int cls_width = 128;
  int cls_blocks = 2;
  int inv_width = 128;
  // false: the mean-field half of every trajectory is replaced by the agent's
  // own sequence, at training and at planning time.
  bool use_mf = true;

  int traj_dim() const { return 2 * horizon * kObsDim; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Sinusoidal embedding of integer steps: [sin(k f_j), cos(k f_j)],
// f_j = 10000^(-j / (dim/2)).
Tensor timestep_embedding(std::span<const int> ks, int dim);

struct Linear {
  Parameter w;  // in x out
  Parameter b;  // 1 x out

  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng, bool zero_init = false);
  Var operator()(Tape& tape, Var x);
  void collect(std::vector<Parameter*>& out);
};

// h + W2 silu(W1 silu(LN(h)))
struct ResidualBlock {
  Linear l1;
  Linear l2;

  ResidualBlock() = default;
  ResidualBlock(const std::string& name, int width, Rng& rng);
  Var operator()(Tape& tape, Var h);
  void collect(std::vector<Parameter*>& out);
};

// Residual MLP trunk over (trajectory || k-embedding).
class ResidualMlp {
 public:
  ResidualMlp() = default;
  ResidualMlp(const std::string& name, int in, int width, int blocks, int out, bool zero_last,
              Rng& rng);
  Var operator()(Tape& tape, Var x);
  void collect(std::vector<Parameter*>& out);

 private:
  Linear in_;
  std::vector<ResidualBlock> blocks_;
  Linear out_;
};

// eps_theta(z_k, k): z is batch x traj_dim, rows [x (H x 4) | xbar (H x 4)].
class DenoiserNet {
 public:
  DenoiserNet() = default;
  DenoiserNet(const ModelConfig& cfg, Rng& rng);
  Var forward(Tape& tape, Var z, std::span<const int> ks);
  Tensor predict(const Tensor& z, std::span<const int> ks);
  void collect(std::vector<Parameter*>& out) { net_.collect(out); }

 private:
  ModelConfig cfg_;
  ResidualMlp net_;
};

// J_psi(z_k, k): scalar normalized-return estimate per row.
class ClassifierNet {
 public:
  ClassifierNet() = default;
  ClassifierNet(const ModelConfig& cfg, Rng& rng);
  Var forward(Tape& tape, Var z, std::span<const int> ks);
  Tensor predict(const Tensor& z, std::span<const int> ks);
  // d J / d z for every row (rows are independent).
  Tensor input_grad(const Tensor& z, std::span<const int> ks);
  void collect(std::vector<Parameter*>& out) { net_.collect(out); }

 private:
  ModelConfig cfg_;
  ResidualMlp net_;
};

// f_phi(o_t || o_{t+1}) -> standardized action.
class InverseDynamicsNet {
 public:
  InverseDynamicsNet() = default;
  InverseDynamicsNet(const ModelConfig& cfg, Rng& rng);
  Var forward(Tape& tape, Var pairs);  // batch x 8
  Tensor predict(const Tensor& pairs);
  void collect(std::vector<Parameter*>& out);

 private:
  Linear l1_, l2_, l3_;
};

// Parameters shared by every agent, plus the normalization they were trained with.
class ModelBundle {
 public:
  ModelBundle() = default;
  ModelBundle(const ModelConfig& cfg, std::uint64_t seed);
  ModelBundle(ModelBundle&&) = default;
  ModelBundle& operator=(ModelBundle&&) = default;
  ModelBundle(const ModelBundle&) = delete;
  ModelBundle& operator=(const ModelBundle&) = delete;

  ModelConfig config;
  dataset::DatasetStats stats;
  DenoiserNet denoiser;
  ClassifierNet classifier;
  InverseDynamicsNet inverse;

  std::vector<Parameter*> parameters();
  void save(const std::filesystem::path& path, const std::string& extra_meta = "{}") const;
  static ModelBundle load(const std::filesystem::path& path);
};

// Validates 1 <= k <= K.
void check_steps(std::span<const int> ks, int K);

}  // namespace macdmp::models
