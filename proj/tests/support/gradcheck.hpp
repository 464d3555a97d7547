#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "macdmp/models.hpp"
#include "macdmp/rng.hpp"

namespace macdmp::testing {

enum class Net { kDenoiser, kClassifier, kInverse };

struct GradCheck {
  double rel_err = 0.0;   // |fd - ad| / max(|fd|, |ad|) over the sampled coordinates
  double max_abs = 0.0;   // largest |fd - ad|
  int coords = 0;
};

// One random point: jittered parameters, random inputs and a random linear
// read-out of the outputs. Compares tape gradients of sampled parameter and
// input coordinates with central differences (step 1e-5).
inline GradCheck check_net_gradients(models::ModelBundle& bundle, Net net, Rng& rng, int param_coords = 24,
                                     int input_coords = 12) {
  using namespace tensor;
  const auto& cfg = bundle.config;
  std::vector<Parameter*> params;
  switch (net) {
    case Net::kDenoiser:
      bundle.denoiser.collect(params);
      break;
    case Net::kClassifier:
      bundle.classifier.collect(params);
      break;
    case Net::kInverse:
      bundle.inverse.collect(params);
      break;
  }
  std::normal_distribution<double> nd(0.0, 0.05);
  for (auto* p : params) {
    for (auto& v : p->value.values()) v += nd(rng);
    p->zero_grad();
  }

  const int batch = 3;
  const int in_cols = net == Net::kInverse ? 2 * models::kObsDim : cfg.traj_dim();
  Tensor x(batch, in_cols);
  for (auto& v : x.values()) v = standard_normal(rng);
  std::vector<int> ks(batch);
  for (auto& k : ks) k = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.diffusion_steps));
  const int out_cols = net == Net::kDenoiser ? cfg.traj_dim() : 1;
  Tensor w(batch, out_cols);
  for (auto& v : w.values()) v = standard_normal(rng);

  auto loss = [&](Tape& tape, Var in) {
    Var out;
    switch (net) {
      case Net::kDenoiser:
        out = bundle.denoiser.forward(tape, in, ks);
        break;
      case Net::kClassifier:
        out = bundle.classifier.forward(tape, in, ks);
        break;
      case Net::kInverse:
        out = bundle.inverse.forward(tape, in);
        break;
    }
    return sum(mul(out, tape.constant(w)));
  };
  auto eval = [&](const Tensor& xin) {
    Tape tape(false);
    return loss(tape, tape.constant(xin)).value()[0];
  };

  Tape tape;
  Var in = tape.input(x, true);
  tape.backward(loss(tape, in));
  const Tensor gx = tape.grad(in);

  std::vector<double> ad, fd;
  const double h = 1e-5;
  for (int c = 0; c < param_coords; ++c) {
    Parameter* p = params[rng() % params.size()];
    const std::size_t i = rng() % p->value.size();
    const double v0 = p->value[i];
    p->value[i] = v0 + h;
    const double fp = eval(x);
    p->value[i] = v0 - h;
    const double fm = eval(x);
    p->value[i] = v0;
    ad.push_back(p->grad[i]);
    fd.push_back((fp - fm) / (2 * h));
  }
  for (int c = 0; c < input_coords; ++c) {
    const std::size_t i = rng() % x.size();
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    ad.push_back(gx[i]);
    fd.push_back((eval(xp) - eval(xm)) / (2 * h));
  }
  double diff = 0.0, na = 0.0, nf = 0.0;
  GradCheck out;
  for (std::size_t i = 0; i < ad.size(); ++i) {
    diff += (ad[i] - fd[i]) * (ad[i] - fd[i]);
    na += ad[i] * ad[i];
    nf += fd[i] * fd[i];
    out.max_abs = std::max(out.max_abs, std::abs(ad[i] - fd[i]));
  }
  out.rel_err = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nf), 1e-300});
  out.coords = static_cast<int>(ad.size());
  for (auto* p : params) p->zero_grad();
  return out;
}

}  // namespace macdmp::testing
