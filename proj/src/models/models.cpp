#include "macdmp/models.hpp"

#include <cmath>
#include <json.hpp>

#include "macdmp/errors.hpp"
#include "macdmp/optim.hpp"

namespace macdmp::models {

void ModelConfig::validate() const {
  if (horizon < 2) throw ConfigError("model.horizon must be >= 2");
  if (diffusion_steps < 1) throw ConfigError("model.diffusion_steps must be >= 1");
  if (emb_dim < 2 || emb_dim % 2) throw ConfigError("model.emb_dim must be even and >= 2");
  if (width < 1 || cls_width < 1 || inv_width < 1) throw ConfigError("model widths must be >= 1");
  if (blocks < 0 || cls_blocks < 0) throw ConfigError("model block counts must be >= 0");
}

void check_steps(std::span<const int> ks, int K) {
  for (int k : ks) {
    if (k < 1 || k > K) {
      throw DomainError("diffusion step " + std::to_string(k) + " outside [1, " + std::to_string(K) + "]");
    }
  }
}

Tensor timestep_embedding(std::span<const int> ks, int dim) {
  const int half = dim / 2;
  Tensor out(static_cast<int>(ks.size()), dim);
  for (std::size_t r = 0; r < ks.size(); ++r) {
    for (int j = 0; j < half; ++j) {
      const double f = std::exp(-std::log(10000.0) * static_cast<double>(j) / half);
      out(static_cast<int>(r), j) = std::sin(ks[r] * f);
      out(static_cast<int>(r), half + j) = std::cos(ks[r] * f);
    }
  }
  return out;
}

Linear::Linear(const std::string& name, int in, int out, Rng& rng, bool zero_init) {
  Tensor wv(in, out);
  Tensor bv(1, out);
  if (!zero_init) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : wv.values()) v = u(rng);
    for (auto& v : bv.values()) v = u(rng);
  }
  w = Parameter(name + ".w", std::move(wv));
  b = Parameter(name + ".b", std::move(bv));
}

Var Linear::operator()(Tape& tape, Var x) { return tensor::affine(x, tape.param(w), tape.param(b)); }

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

ResidualBlock::ResidualBlock(const std::string& name, int width, Rng& rng)
    : l1(name + ".l1", width, width, rng), l2(name + ".l2", width, width, rng) {}

Var ResidualBlock::operator()(Tape& tape, Var h) {
  auto u = tensor::silu(tensor::layer_norm(h));
  u = tensor::silu(l1(tape, u));
  return tensor::add(h, l2(tape, u));
}

void ResidualBlock::collect(std::vector<Parameter*>& out) {
  l1.collect(out);
  l2.collect(out);
}

ResidualMlp::ResidualMlp(const std::string& name, int in, int width, int blocks, int out,
                         bool zero_last, Rng& rng)
    : in_(name + ".in", in, width, rng) {
  for (int i = 0; i < blocks; ++i) blocks_.emplace_back(name + ".block" + std::to_string(i), width, rng);
  out_ = Linear(name + ".out", width, out, rng, zero_last);
}

Var ResidualMlp::operator()(Tape& tape, Var x) {
  auto h = in_(tape, x);
  for (auto& b : blocks_) h = b(tape, h);
  return out_(tape, tensor::silu(h));
}

void ResidualMlp::collect(std::vector<Parameter*>& out) {
  in_.collect(out);
  for (auto& b : blocks_) b.collect(out);
  out_.collect(out);
}

namespace {

Var with_embedding(Tape& tape, Var z, std::span<const int> ks, const ModelConfig& cfg) {
  if (z.cols() != cfg.traj_dim() || z.rows() != static_cast<int>(ks.size())) {
    throw DomainError("trajectory input " + z.value().shape_str() + " does not match horizon " +
                      std::to_string(cfg.horizon) + " and " + std::to_string(ks.size()) + " steps");
  }
  check_steps(ks, cfg.diffusion_steps);
  return tensor::concat({z, tape.constant(timestep_embedding(ks, cfg.emb_dim))});
}

}  // namespace

DenoiserNet::DenoiserNet(const ModelConfig& cfg, Rng& rng)
    : cfg_(cfg),
      net_("denoiser", cfg.traj_dim() + cfg.emb_dim, cfg.width, cfg.blocks, cfg.traj_dim(), true, rng) {}

Var DenoiserNet::forward(Tape& tape, Var z, std::span<const int> ks) {
  return net_(tape, with_embedding(tape, z, ks, cfg_));
}

Tensor DenoiserNet::predict(const Tensor& z, std::span<const int> ks) {
  Tape tape(false);
  return forward(tape, tape.constant(z), ks).value();
}

ClassifierNet::ClassifierNet(const ModelConfig& cfg, Rng& rng)
    : cfg_(cfg),
      net_("classifier", cfg.traj_dim() + cfg.emb_dim, cfg.cls_width, cfg.cls_blocks, 1, false, rng) {}

Var ClassifierNet::forward(Tape& tape, Var z, std::span<const int> ks) {
  return net_(tape, with_embedding(tape, z, ks, cfg_));
}

Tensor ClassifierNet::predict(const Tensor& z, std::span<const int> ks) {
  Tape tape(false);
  return forward(tape, tape.constant(z), ks).value();
}

Tensor ClassifierNet::input_grad(const Tensor& z, std::span<const int> ks) {
  Tape tape(false);
  auto in = tape.input(z, true);
  tape.backward(tensor::sum(forward(tape, in, ks)));
  const Tensor& g = tape.grad(in);
  return g.size() ? g : Tensor::zeros_like(z);
}

InverseDynamicsNet::InverseDynamicsNet(const ModelConfig& cfg, Rng& rng)
    : l1_("inverse.l1", 2 * kObsDim, cfg.inv_width, rng),
      l2_("inverse.l2", cfg.inv_width, cfg.inv_width, rng),
      l3_("inverse.l3", cfg.inv_width, 1, rng) {}

Var InverseDynamicsNet::forward(Tape& tape, Var pairs) {
  if (pairs.cols() != 2 * kObsDim) {
    throw DomainError("inverse dynamics input must have 8 columns, got " + pairs.value().shape_str());
  }
  auto h = tensor::silu(l1_(tape, pairs));
  h = tensor::silu(l2_(tape, h));
  return l3_(tape, h);
}

Tensor InverseDynamicsNet::predict(const Tensor& pairs) {
  Tape tape(false);
  return forward(tape, tape.constant(pairs)).value();
}

void InverseDynamicsNet::collect(std::vector<Parameter*>& out) {
  l1_.collect(out);
  l2_.collect(out);
  l3_.collect(out);
}

ModelBundle::ModelBundle(const ModelConfig& cfg, std::uint64_t seed) : config(cfg) {
  cfg.validate();
  Rng rng = make_rng(seed, streams::kInit);
  denoiser = DenoiserNet(cfg, rng);
  classifier = ClassifierNet(cfg, rng);
  inverse = InverseDynamicsNet(cfg, rng);
}

std::vector<Parameter*> ModelBundle::parameters() {
  std::vector<Parameter*> out;
  denoiser.collect(out);
  classifier.collect(out);
  inverse.collect(out);
  return out;
}

namespace {

nlohmann::json config_json(const ModelConfig& c) {
  return {{"horizon", c.horizon},   {"diffusion_steps", c.diffusion_steps},
          {"emb_dim", c.emb_dim},   {"width", c.width},
          {"blocks", c.blocks},     {"cls_width", c.cls_width},
          {"cls_blocks", c.cls_blocks}, {"inv_width", c.inv_width},
          {"use_mf", c.use_mf}};
}

nlohmann::json stats_json(const dataset::DatasetStats& s) {
  return {{"obs_mean", s.obs_mean},     {"obs_std", s.obs_std},       {"act_mean", s.act_mean},
          {"act_std", s.act_std},       {"return_min", s.return_min}, {"return_max", s.return_max}};
}

}  // namespace

void ModelBundle::save(const std::filesystem::path& path, const std::string& extra_meta) const {
  nlohmann::json meta;
  meta["model"] = config_json(config);
  meta["stats"] = stats_json(stats);
  meta["extra"] = nlohmann::json::parse(extra_meta);
  auto params = const_cast<ModelBundle*>(this)->parameters();
  tensor::save_checkpoint(path, {params.begin(), params.end()}, meta.dump());
}

ModelBundle ModelBundle::load(const std::filesystem::path& path) {
  const auto ckpt = tensor::load_checkpoint(path);
  ModelConfig cfg;
  dataset::DatasetStats st;
  try {
    const auto meta = nlohmann::json::parse(ckpt.meta);
    const auto& m = meta.at("model");
    cfg.horizon = m.at("horizon");
    cfg.diffusion_steps = m.at("diffusion_steps");
    cfg.emb_dim = m.at("emb_dim");
    cfg.width = m.at("width");
    cfg.blocks = m.at("blocks");
    cfg.cls_width = m.at("cls_width");
    cfg.cls_blocks = m.at("cls_blocks");
    cfg.inv_width = m.at("inv_width");
    cfg.use_mf = m.at("use_mf");
    const auto& s = meta.at("stats");
    st.obs_mean = s.at("obs_mean");
    st.obs_std = s.at("obs_std");
    st.act_mean = s.at("act_mean");
    st.act_std = s.at("act_std");
    st.return_min = s.at("return_min");
    st.return_max = s.at("return_max");
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": bad checkpoint metadata: " + e.what());
  }
  ModelBundle bundle(cfg, 0);
  bundle.stats = st;
  tensor::assign_parameters(ckpt, bundle.parameters());
  return bundle;
}

}  // namespace macdmp::models
