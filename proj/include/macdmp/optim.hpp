#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "macdmp/tensor.hpp"

namespace macdmp::tensor {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg = {});

  // Bias-corrected update from each parameter's accumulated grad.
  void step();
  void zero_grad();

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long t_ = 0;
};

// One PARM block per parameter (name, shape, values) after a META block
// carrying caller-defined text.
void save_checkpoint(const std::filesystem::path& path, const std::vector<const Parameter*>& params,
                     const std::string& meta);

struct CheckpointData {
  std::string meta;
  std::vector<Parameter> params;
};

CheckpointData load_checkpoint(const std::filesystem::path& path);

// Copies values by name; missing names or shape differences raise SchemaError.
void assign_parameters(const CheckpointData& ckpt, const std::vector<Parameter*>& params);

}  // namespace macdmp::tensor
