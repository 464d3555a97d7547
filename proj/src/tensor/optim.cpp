#include "macdmp/optim.hpp"

#include <cmath>
#include <map>

#include "macdmp/container.hpp"
#include "macdmp/errors.hpp"

namespace macdmp::tensor {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (auto* p : params_) {
    m_.push_back(Tensor::zeros_like(p->value));
    v_.push_back(Tensor::zeros_like(p->value));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    if (p.grad.size() != p.value.size()) {
      throw DomainError("adam: gradient shape " + p.grad.shape_str() + " vs parameter " +
                        p.value.shape_str() + " for " + p.name);
    }
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      if (m[j] == 0.0) continue;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.value[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<const Parameter*>& params,
                     const std::string& meta) {
  io::ContainerWriter out(path, io::FileKind::kCheckpoint);
  {
    io::ByteWriter w;
    w.put_string(meta);
    w.put_u64(params.size());
    out.append("META", w.bytes());
  }
  for (const auto* p : params) {
    io::ByteWriter w;
    w.put_string(p->name);
    w.put_u32(static_cast<std::uint32_t>(p->value.rows()));
    w.put_u32(static_cast<std::uint32_t>(p->value.cols()));
    w.put_f64s(p->value.values());
    out.append("PARM", w.bytes());
  }
  out.finish();
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  const auto blocks = io::read_container(path, io::FileKind::kCheckpoint);
  if (blocks.empty() || blocks[0].tag != "META") throw SchemaError(path.string() + ": missing META block");
  CheckpointData out;
  io::ByteReader meta(blocks[0].payload);
  out.meta = meta.get_string();
  const auto count = meta.get_u64();
  if (count != blocks.size() - 1) throw SchemaError(path.string() + ": parameter count mismatch");
  for (std::size_t b = 1; b < blocks.size(); ++b) {
    if (blocks[b].tag != "PARM") throw SchemaError(path.string() + ": unexpected block " + blocks[b].tag);
    io::ByteReader r(blocks[b].payload);
    auto name = r.get_string();
    const int rows = static_cast<int>(r.get_u32());
    const int cols = static_cast<int>(r.get_u32());
    if (static_cast<std::size_t>(rows) * cols * 8 != r.remaining()) {
      throw SchemaError(path.string() + ": parameter " + name + " size mismatch");
    }
    std::vector<double> data(static_cast<std::size_t>(rows) * cols);
    r.get_f64s(data);
    out.params.emplace_back(std::move(name), Tensor(rows, cols, std::move(data)));
  }
  return out;
}

void assign_parameters(const CheckpointData& ckpt, const std::vector<Parameter*>& params) {
  std::map<std::string, const Parameter*> by_name;
  for (const auto& p : ckpt.params) by_name[p.name] = &p;
  for (auto* p : params) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end()) throw SchemaError("checkpoint lacks parameter " + p->name);
    const auto& src = it->second->value;
    if (src.rows() != p->value.rows() || src.cols() != p->value.cols()) {
      throw SchemaError("checkpoint parameter " + p->name + " has shape " + src.shape_str() +
                        ", model expects " + p->value.shape_str());
    }
    p->value = src;
    p->zero_grad();
  }
}

}  // namespace macdmp::tensor
