#include "macdmp/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "macdmp/errors.hpp"
#include "macdmp/optim.hpp"

namespace macdmp::diffusion {

using models::kObsDim;

const char* schedule_name(ScheduleKind kind) { return kind == ScheduleKind::kLinear ? "linear" : "cosine"; }

NoiseSchedule make_schedule(int K, double beta_start, double beta_end, ScheduleKind kind) {
  if (K < 1) throw DomainError("make_schedule: K must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw DomainError("make_schedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.K = K;
  s.beta.assign(K + 1, 0.0);
  s.alpha.assign(K + 1, 1.0);
  s.alpha_bar.assign(K + 1, 1.0);
  s.sigma2.assign(K + 1, 0.0);
  if (kind == ScheduleKind::kLinear) {
    for (int k = 1; k <= K; ++k) {
      s.beta[k] = K == 1 ? beta_start : beta_start + (beta_end - beta_start) * (k - 1) / (K - 1);
    }
  } else {
    constexpr double kOffset = 0.008;
    auto f = [&](int k) {
      const double c = std::cos((static_cast<double>(k) / K + kOffset) / (1.0 + kOffset) * std::numbers::pi / 2);
      return c * c;
    };
    for (int k = 1; k <= K; ++k) {
      s.beta[k] = std::clamp(1.0 - f(k) / f(k - 1), beta_start, beta_end);
    }
  }
  for (int k = 1; k <= K; ++k) {
    s.alpha[k] = 1.0 - s.beta[k];
    s.alpha_bar[k] = s.alpha_bar[k - 1] * s.alpha[k];
    s.sigma2[k] = (1.0 - s.alpha_bar[k - 1]) / (1.0 - s.alpha_bar[k]) * s.beta[k];
  }
  for (int k = 1; k <= K; ++k) {
    if (!(s.beta[k] > 0.0 && s.beta[k] < 1.0)) throw DomainError("make_schedule: beta outside (0,1)");
    if (k > 1 && s.beta[k] < s.beta[k - 1]) throw DomainError("make_schedule: beta not monotone");
    if (!(s.alpha_bar[k] < s.alpha_bar[k - 1])) throw DomainError("make_schedule: alpha_bar not decreasing");
  }
  return s;
}

NoiseSchedule default_schedule(int K) { return make_schedule(K, 1e-4, 0.5, ScheduleKind::kCosine); }

void GuidanceConfig::validate(int K) const {
  if (!(zeta >= 0.0)) throw ConfigError("guidance.zeta must be >= 0");
  if (k_sample < 1 || k_sample > K) {
    throw ConfigError("guidance.k_sample must lie in [1, " + std::to_string(K) + "]");
  }
}

Tensor pack_pair(std::span<const double> x, std::span<const double> xbar) {
  if (x.size() != xbar.size()) throw DomainError("pack_pair: x and xbar differ in length");
  Tensor z(1, static_cast<int>(x.size() + xbar.size()));
  std::copy(x.begin(), x.end(), z.values().begin());
  std::copy(xbar.begin(), xbar.end(), z.values().begin() + x.size());
  return z;
}

Tensor forward_noise(const Tensor& z0, std::span<const int> ks, const Tensor& eps,
                     const NoiseSchedule& schedule) {
  if (z0.rows() != eps.rows() || z0.cols() != eps.cols()) {
    throw DomainError("forward_noise: eps shape " + eps.shape_str() + " vs " + z0.shape_str());
  }
  if (static_cast<int>(ks.size()) != z0.rows()) throw DomainError("forward_noise: one k per row required");
  models::check_steps(ks, schedule.K);
  Tensor out(z0.rows(), z0.cols());
  for (int r = 0; r < z0.rows(); ++r) {
    const double a = std::sqrt(schedule.alpha_bar[ks[r]]);
    const double b = std::sqrt(1.0 - schedule.alpha_bar[ks[r]]);
    for (int c = 0; c < z0.cols(); ++c) out(r, c) = a * z0(r, c) + b * eps(r, c);
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> forward_noise(std::span<const double> x0,
                                                                  std::span<const double> xbar0, int k,
                                                                  std::span<const double> eps,
                                                                  const NoiseSchedule& schedule) {
  const Tensor z0 = pack_pair(x0, xbar0);
  if (eps.size() != z0.size()) throw DomainError("forward_noise: eps must match (x0 || xbar0)");
  const int ks[1] = {k};
  const Tensor zk = forward_noise(z0, ks, Tensor(1, z0.cols(), {eps.begin(), eps.end()}), schedule);
  const auto& v = zk.values();
  return {{v.begin(), v.begin() + x0.size()}, {v.begin() + x0.size(), v.end()}};
}

Tensor denoise_step(const Tensor& z, int k, NoiseModel& eps, GuidanceModel* guide,
                    const NoiseSchedule& schedule, double zeta, std::span<Rng> rngs) {
  if (k < 1 || k > schedule.K) {
    throw DomainError("denoise_step: k = " + std::to_string(k) + " outside [1, " + std::to_string(schedule.K) + "]");
  }
  if (static_cast<int>(rngs.size()) != z.rows()) throw DomainError("denoise_step: one rng per row required");
  const std::vector<int> ks(z.rows(), k);
  const Tensor e = eps.predict(z, ks);
  const double inv_sqrt_a = 1.0 / std::sqrt(schedule.alpha[k]);
  const double coef = (1.0 - schedule.alpha[k]) / std::sqrt(1.0 - schedule.alpha_bar[k]);
  Tensor out(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = inv_sqrt_a * (z[i] - coef * e[i]);
  if (zeta != 0.0 && guide != nullptr) {
    const Tensor g = guide->gradient(z, ks);
    const double w = zeta * schedule.sigma2[k];
    for (std::size_t i = 0; i < z.size(); ++i) out[i] += w * g[i];
  }
  if (k > 1) {
    const double sd = std::sqrt(schedule.sigma2[k]);
    for (int r = 0; r < z.rows(); ++r) {
      for (auto& v : out.row(r)) v += sd * standard_normal(rngs[r]);
    }
  }
  return out;
}

void apply_consistency(Tensor& z, const Tensor& o, const Tensor& obar, int horizon) {
  const int off = horizon * kObsDim;
  for (int r = 0; r < z.rows(); ++r) {
    for (int c = 0; c < kObsDim; ++c) {
      z(r, c) = o(r, c);
      z(r, off + c) = obar(r, c);
    }
  }
}

namespace {

Tensor initial_noise(int rows, int cols, std::span<Rng> rngs) {
  Tensor z(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (auto& v : z.row(r)) v = standard_normal(rngs[r]);
  }
  return z;
}

void check_inputs(const SampleInputs& in, std::span<Rng> rngs) {
  if (!in.o || !in.obar) throw DomainError("sample_plan: missing conditioning observations");
  if (in.o->cols() != kObsDim || in.obar->cols() != kObsDim || in.o->rows() != in.obar->rows()) {
    throw DomainError("sample_plan: conditioning must be batch x 4");
  }
  if (static_cast<int>(rngs.size()) != in.o->rows()) throw DomainError("sample_plan: one rng per row required");
  if (in.horizon < 1) throw DomainError("sample_plan: horizon must be >= 1");
}

}  // namespace

Tensor sample_plan(const SampleInputs& in, NoiseModel& eps, GuidanceModel* guide,
                   const NoiseSchedule& schedule, const GuidanceConfig& guidance, std::span<Rng> rngs) {
  guidance.validate(schedule.K);
  if (guidance.sampler == Sampler::kDpm1) {
    return dpm1_sample(in, eps, guide, schedule, guidance.zeta, guidance.k_sample, rngs);
  }
  check_inputs(in, rngs);
  Tensor z = initial_noise(in.o->rows(), 2 * in.horizon * kObsDim, rngs);
  apply_consistency(z, *in.o, *in.obar, in.horizon);
  for (int k = schedule.K; k >= 1; --k) {
    z = denoise_step(z, k, eps, guide, schedule, guidance.zeta, rngs);
    apply_consistency(z, *in.o, *in.obar, in.horizon);
  }
  return z;
}

std::vector<int> dpm1_grid(const NoiseSchedule& schedule, int k_sample) {
  const int K = schedule.K;
  if (k_sample < 1 || k_sample > K) throw DomainError("dpm1: k_sample must lie in [1, K]");
  const double end = std::log(schedule.alpha_bar[K]);
  std::vector<int> grid(k_sample + 1);
  grid[0] = K;
  for (int j = 1; j <= k_sample; ++j) {
    const double target = end * (1.0 - static_cast<double>(j) / k_sample);
    int best = 0;
    double best_d = std::abs(target);
    for (int k = 1; k <= K; ++k) {
      const double d = std::abs(std::log(schedule.alpha_bar[k]) - target);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    grid[j] = std::min(std::max(best, k_sample - j), grid[j - 1] - 1);
  }
  grid[k_sample] = 0;
  return grid;
}

Tensor dpm1_sample(const SampleInputs& in, NoiseModel& eps, GuidanceModel* guide,
                   const NoiseSchedule& schedule, double zeta, int k_sample, std::span<Rng> rngs) {
  check_inputs(in, rngs);
  const auto grid = dpm1_grid(schedule, k_sample);
  Tensor z = initial_noise(in.o->rows(), 2 * in.horizon * kObsDim, rngs);
  apply_consistency(z, *in.o, *in.obar, in.horizon);
  for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
    const int s = grid[j];
    const int t = grid[j + 1];
    const std::vector<int> ks(z.rows(), s);
    Tensor e = eps.predict(z, ks);
    const double sig_s = std::sqrt(1.0 - schedule.alpha_bar[s]);
    if (zeta != 0.0 && guide != nullptr) {
      const Tensor g = guide->gradient(z, ks);
      for (std::size_t i = 0; i < e.size(); ++i) e[i] -= zeta * sig_s * g[i];
    }
    const double a_s = std::sqrt(schedule.alpha_bar[s]);
    const double a_t = std::sqrt(schedule.alpha_bar[t]);
    const double sig_t = std::sqrt(1.0 - schedule.alpha_bar[t]);
    const double cx = a_t / a_s;
    const double ce = a_t * sig_s / a_s - sig_t;
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = cx * z[i] - ce * e[i];
    apply_consistency(z, *in.o, *in.obar, in.horizon);
  }
  return z;
}

TrainingBatch make_batch(std::span<const dataset::TrajectoryWindow* const> windows,
                         const dataset::DatasetStats& stats, const NoiseSchedule& schedule, bool use_mf,
                         Rng& rng) {
  if (windows.empty()) throw DomainError("training batch is empty");
  const int B = static_cast<int>(windows.size());
  const int H = windows[0]->horizon;
  const int D = 2 * H * kObsDim;
  TrainingBatch b;
  Tensor z0(B, D);
  b.eps = Tensor(B, D);
  b.ks.resize(B);
  b.y = Tensor(B, 1);
  b.pairs = Tensor(B * (H - 1), 2 * kObsDim);
  b.actions = Tensor(B * (H - 1), 1);
  std::uniform_int_distribution<int> kdist(1, schedule.K);
  for (int r = 0; r < B; ++r) {
    const auto& w = *windows[r];
    if (w.horizon != H) throw DomainError("training batch mixes horizons");
    const auto& xbar = use_mf ? w.xbar0 : w.x0;
    for (int j = 0; j < H; ++j) {
      for (int c = 0; c < kObsDim; ++c) {
        z0(r, j * kObsDim + c) = stats.standardize_obs(w.x0[j * kObsDim + c], c);
        z0(r, H * kObsDim + j * kObsDim + c) = stats.standardize_obs(xbar[j * kObsDim + c], c);
      }
    }
    b.ks[r] = kdist(rng);
    for (auto& v : b.eps.row(r)) v = standard_normal(rng);
    b.y(r, 0) = stats.normalize_return(w.y);
    for (int j = 0; j + 1 < H; ++j) {
      const int row = r * (H - 1) + j;
      for (int c = 0; c < 2 * kObsDim; ++c) b.pairs(row, c) = z0(r, j * kObsDim + c);
      b.actions(row, 0) = (w.actions[j] - stats.act_mean) / stats.act_std;
    }
  }
  b.z_k = forward_noise(z0, b.ks, b.eps, schedule);
  return b;
}

namespace {

double mse_value(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DomainError("loss: prediction " + a.shape_str() + " vs target " + b.shape_str());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace

LossTerms loss_from_predictions(const Tensor& eps_hat, const Tensor& y_hat, const Tensor& a_hat,
                                const TrainingBatch& batch) {
  LossTerms t;
  t.inverse = mse_value(a_hat, batch.actions);
  t.noise = mse_value(eps_hat, batch.eps);
  t.classifier = mse_value(y_hat, batch.y);
  t.total = t.inverse + t.noise + t.classifier;
  return t;
}

tensor::Var joint_loss(tensor::Tape& tape, models::ModelBundle& bundle, const TrainingBatch& batch,
                       LossTerms* terms) {
  auto z = tape.constant(batch.z_k);
  auto l_inv = tensor::mse(bundle.inverse.forward(tape, tape.constant(batch.pairs)), tape.constant(batch.actions));
  auto l_eps = tensor::mse(bundle.denoiser.forward(tape, z, batch.ks), tape.constant(batch.eps));
  auto l_cls = tensor::mse(bundle.classifier.forward(tape, z, batch.ks), tape.constant(batch.y));
  auto total = tensor::add(tensor::add(l_inv, l_eps), l_cls);
  if (terms) {
    terms->inverse = l_inv.value()[0];
    terms->noise = l_eps.value()[0];
    terms->classifier = l_cls.value()[0];
    terms->total = total.value()[0];
  }
  return total;
}

TrainLog train(models::ModelBundle& bundle, std::span<const dataset::TrajectoryWindow> windows,
               const NoiseSchedule& schedule, const TrainConfig& cfg) {
  if (windows.empty()) throw DomainError("train: no training windows");
  if (windows[0].horizon != bundle.config.horizon) {
    throw SchemaError("train: dataset horizon " + std::to_string(windows[0].horizon) +
                      " differs from model horizon " + std::to_string(bundle.config.horizon));
  }
  if (schedule.K != bundle.config.diffusion_steps) throw ConfigError("train: schedule K differs from model K");
  Rng rng = make_rng(cfg.seed, streams::kTraining);
  tensor::Adam opt(bundle.parameters(), {.lr = cfg.lr});
  std::uniform_int_distribution<std::size_t> pick(0, windows.size() - 1);
  std::vector<const dataset::TrajectoryWindow*> batch(cfg.batch_size);
  TrainLog log;
  for (int e = 0; e < cfg.epochs; ++e) {
    LossTerms acc;
    for (int s = 0; s < cfg.steps_per_epoch; ++s) {
      for (auto& w : batch) w = &windows[pick(rng)];
      const auto b = make_batch(batch, bundle.stats, schedule, bundle.config.use_mf, rng);
      opt.zero_grad();
      tensor::Tape tape;
      LossTerms t;
      tape.backward(joint_loss(tape, bundle, b, &t));
      opt.step();
      acc.total += t.total;
      acc.inverse += t.inverse;
      acc.noise += t.noise;
      acc.classifier += t.classifier;
    }
    const double n = std::max(1, cfg.steps_per_epoch);
    log.epoch_mean.push_back({acc.total / n, acc.inverse / n, acc.noise / n, acc.classifier / n});
  }
  return log;
}

}  // namespace macdmp::diffusion
