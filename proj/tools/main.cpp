#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "macdmp/container.hpp"
#include "macdmp/dataset.hpp"
#include "macdmp/diffusion.hpp"
#include "macdmp/errors.hpp"
#include "macdmp/models.hpp"
#include "macdmp/planner.hpp"
#include "macdmp/scenario.hpp"
#include "macdmp/theory.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace macdmp;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kConfig = 2, kMissing = 3, kSchema = 4, kAssertion = 5 };

// A check inside a subcommand did not hold; maps to the assertion exit code.
class AssertionFailed : public Error {
 public:
  using Error::Error;
};

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MissingArtifact("cannot open: " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t file_crc(const fs::path& p) {
  const auto bytes = read_file(p);
  return io::crc32(bytes);
}

std::uint32_t text_crc(const std::string& s) { return io::crc32(std::span<const char>(s.data(), s.size())); }

std::vector<double> parse_doubles(const std::string& s, const char* field) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string(field) + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw ConfigError(std::string(field) + ": empty list");
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (double v : parse_doubles(s, "seed")) {
    if (v < 0 || v != std::floor(v)) throw ConfigError("seed: values must be nonnegative integers");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

std::string seed_tag(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? "-" : "") + std::to_string(seeds[i]);
  return s;
}

// Everything a subcommand produced, recorded in the manifest.
struct RunRecord {
  std::string subcommand;
  std::string config_hash;
  std::string seed;
  fs::path out_dir;
  std::vector<fs::path> outputs;
  std::vector<fs::path> inputs;

  fs::path output(const std::string& ext) {
    auto p = out_dir / (subcommand + "_" + config_hash + "_" + seed + ext);
    outputs.push_back(p);
    return p;
  }
};

void write_manifest(const RunRecord& rec, const std::vector<std::string>& args, double elapsed) {
  json m;
  m["tool"] = "macdmp";
  m["version"] = kVersion;
  m["compiler"] = __VERSION__;
  m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  m["container_format"] = io::kFormatVersion;
  m["subcommand"] = rec.subcommand;
  m["config_hash"] = rec.config_hash;
  m["seed"] = rec.seed;
  m["args"] = args;
  m["cwd"] = fs::current_path().string();
  json outs = json::array();
  for (const auto& p : rec.outputs) {
    outs.push_back({{"file", p.filename().string()}, {"bytes", fs::file_size(p)}, {"crc32", hex32(file_crc(p))}});
  }
  m["outputs"] = outs;
  json ins = json::array();
  for (const auto& p : rec.inputs) ins.push_back({{"file", p.string()}, {"crc32", hex32(file_crc(p))}});
  m["inputs"] = ins;
  m["wall_clock"] = {{"finished_unix", static_cast<long long>(std::time(nullptr))}, {"elapsed_s", elapsed}};
  const auto path = rec.out_dir / (rec.subcommand + "_" + rec.config_hash + "_" + rec.seed + ".manifest.json");
  std::ofstream(path) << m.dump(2) << '\n';
  std::cout << "manifest: " << path.string() << '\n';
}

// ---- shared option groups ----

struct PlanOpts {
  double zeta = 1.2;
  int k_sample = 0;  // 0: the model's K
  std::string sampler = "ancestral";
  int replan_every = 1;
  int frames = 1000;

  void add(CLI::App* app) {
    app->add_option("--zeta", zeta, "guidance scale");
    app->add_option("--k-sample", k_sample, "sampling steps (dpm1)");
    app->add_option("--sampler", sampler, "ancestral|dpm1")->check(CLI::IsMember({"ancestral", "dpm1"}));
    app->add_option("--replan-every", replan_every, "frames between replans");
    app->add_option("--frames", frames, "frames per episode");
  }

  std::string canonical() const {
    return "zeta=" + g17(zeta) + ";k_sample=" + std::to_string(k_sample) + ";sampler=" + sampler +
           ";replan=" + std::to_string(replan_every) + ";frames=" + std::to_string(frames);
  }

  planner::EvalOptions options(const models::ModelBundle* bundle) const {
    if (frames < 1) throw ConfigError("frames must be >= 1");
    planner::EvalOptions o;
    o.frames = frames;
    o.planner.replan_every = replan_every;
    o.planner.guidance.zeta = zeta;
    o.planner.guidance.sampler =
        sampler == "dpm1" ? diffusion::Sampler::kDpm1 : diffusion::Sampler::kAncestral;
    if (bundle) {
      o.planner.horizon = bundle->config.horizon;
      o.planner.guidance.k_sample = k_sample > 0 ? k_sample : bundle->config.diffusion_steps;
    }
    return o;
  }
};

struct LoadedModel {
  models::ModelBundle bundle;
  diffusion::NoiseSchedule schedule;
};

std::optional<LoadedModel> load_model(const std::string& path, RunRecord& rec) {
  if (path.empty()) return std::nullopt;
  if (!fs::exists(path)) throw MissingArtifact("checkpoint not found: " + path);
  rec.inputs.push_back(path);
  LoadedModel m{models::ModelBundle::load(path), {}};
  m.schedule = diffusion::default_schedule(m.bundle.config.diffusion_steps);
  return m;
}

// ---- subcommands ----

struct SimulateArgs {
  std::string config;
  std::string seed;
  int frames = 6000;
  std::string policy = "proportional";
  double noise = 0.3;
};

void run_simulate(const SimulateArgs& a, RunRecord& rec) {
  if (a.seed.empty()) throw ConfigError("seed: --seed is required for simulate");
  if (a.frames < 1) throw ConfigError("frames must be >= 1");
  const auto seeds = parse_seeds(a.seed);
  if (seeds.size() != 1) throw ConfigError("seed: simulate takes one seed");
  const auto sc = netsim::load_scenario(a.config);
  const auto policy = dataset::parse_policy(a.policy);
  const auto env = netsim::make_environment(sc);
  rec.config_hash = hex32(text_crc(sc.canonical() + "|simulate|policy=" + a.policy + ";frames=" +
                                   std::to_string(a.frames) + ";noise=" + g17(a.noise)));
  rec.seed = std::to_string(seeds[0]);

  const auto roll = dataset::run_behavior_policy(env, policy, a.frames, seeds[0], a.noise);
  dataset::Dataset trace;
  trace.config_hash = sc.hash();
  trace.scenario = sc.name;
  trace.streams = roll.streams;
  dataset::write_dataset(rec.output(".macd"), trace, io::FileKind::kTrace);

  std::ofstream csv(rec.output(".csv"));
  csv << "scenario,policy,seed,frames,generated,delivered,dropped,delivered_bits\n";
  csv << sc.name << ',' << a.policy << ',' << seeds[0] << ',' << a.frames << ',' << roll.totals.generated << ','
      << roll.totals.delivered << ',' << roll.totals.dropped << ',' << g17(roll.totals.delivered_bits) << '\n';
  std::cout << "simulated " << a.frames << " frames of " << sc.name << " (" << env.size() << " nodes)\n";
}

struct CollectArgs {
  std::string config = "s8_2v6";
  std::string seed;
  int trajectories = 250;
  int frames = 100;
  int horizon = 8;
  double gamma = 0.99;
  double noise = 0.3;
};

void run_collect(const CollectArgs& a, RunRecord& rec) {
  if (a.seed.empty()) throw ConfigError("seed: --seed is required for collect");
  const auto seeds = parse_seeds(a.seed);
  if (seeds.size() != 1) throw ConfigError("seed: collect takes one seed");
  if (a.trajectories < 1) throw ConfigError("trajectories must be >= 1");
  if (a.horizon < 2) throw ConfigError("horizon must be >= 2");
  if (a.frames < a.horizon) throw ConfigError("frames must be >= horizon");
  if (!(a.gamma > 0.0 && a.gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
  const auto sc = netsim::load_scenario(a.config);
  const auto env = netsim::make_environment(sc);
  rec.config_hash = hex32(text_crc(sc.canonical() + "|collect|traj=" + std::to_string(a.trajectories) +
                                   ";frames=" + std::to_string(a.frames) + ";H=" + std::to_string(a.horizon) +
                                   ";gamma=" + g17(a.gamma) + ";noise=" + g17(a.noise)));
  rec.seed = std::to_string(seeds[0]);

  dataset::Dataset ds;
  ds.config_hash = sc.hash();
  ds.scenario = sc.name;
  ds.horizon = a.horizon;
  ds.gamma = a.gamma;
  std::map<std::string, int> mix;
  for (int i = 0; i < a.trajectories; ++i) {
    const auto policy = dataset::mixture_policy(i);
    ++mix[dataset::policy_name(policy)];
    auto roll = dataset::run_behavior_policy(env, policy, a.frames, derive_seed(seeds[0], 1000 + i), a.noise);
    for (auto& s : roll.streams) {
      auto w = dataset::slice_windows(s, a.horizon, a.gamma);
      ds.windows.insert(ds.windows.end(), w.begin(), w.end());
      ds.streams.push_back(std::move(s));
    }
  }
  ds.stats = dataset::fit_stats(ds.streams, ds.windows);
  dataset::write_dataset(rec.output(".macd"), ds);
  std::cout << "collected " << ds.streams.size() << " streams, " << ds.windows.size() << " windows (";
  for (const auto& [k, v] : mix) std::cout << k << ' ' << v << ' ';
  std::cout << "trajectories)\n";
}

struct TrainArgs {
  std::string dataset;
  std::string seed;
  int epochs = 100;
  int steps = 1000;
  int batch = 64;
  double lr = 2e-4;
  bool no_mf = false;
  int horizon = 0;
  int K = 100;
  int width = 256;
  int blocks = 4;
};

void run_train(const TrainArgs& a, RunRecord& rec) {
  if (a.seed.empty()) throw ConfigError("seed: --seed is required for train");
  const auto seeds = parse_seeds(a.seed);
  if (seeds.size() != 1) throw ConfigError("seed: train takes one seed");
  if (a.epochs < 1 || a.steps < 1 || a.batch < 1) throw ConfigError("epochs, steps and batch must be >= 1");
  if (!(a.lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!fs::exists(a.dataset)) throw MissingArtifact("dataset not found: " + a.dataset);
  rec.inputs.push_back(a.dataset);
  const auto ds = dataset::read_dataset(a.dataset);
  if (a.horizon != 0 && a.horizon != ds.horizon) {
    throw SchemaError("dataset horizon " + std::to_string(ds.horizon) + " differs from --horizon " +
                      std::to_string(a.horizon));
  }

  models::ModelConfig mc;
  mc.horizon = ds.horizon;
  mc.diffusion_steps = a.K;
  mc.width = a.width;
  mc.blocks = a.blocks;
  mc.use_mf = !a.no_mf;
  try {
    mc.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  diffusion::TrainConfig tc{.epochs = a.epochs, .steps_per_epoch = a.steps, .batch_size = a.batch, .lr = a.lr,
                            .seed = seeds[0]};
  rec.config_hash = hex32(text_crc(hex32(file_crc(a.dataset)) + "|train|epochs=" + std::to_string(a.epochs) +
                                   ";steps=" + std::to_string(a.steps) + ";batch=" + std::to_string(a.batch) +
                                   ";lr=" + g17(a.lr) + ";mf=" + std::to_string(mc.use_mf) +
                                   ";K=" + std::to_string(a.K) + ";width=" + std::to_string(a.width) +
                                   ";blocks=" + std::to_string(a.blocks)));
  rec.seed = std::to_string(seeds[0]);

  models::ModelBundle bundle(mc, seeds[0]);
  bundle.stats = ds.stats;
  const auto schedule = diffusion::default_schedule(a.K);
  const auto log = diffusion::train(bundle, ds.windows, schedule, tc);

  json meta;
  meta["dataset"] = fs::path(a.dataset).filename().string();
  meta["scenario"] = ds.scenario;
  meta["schedule"] = "cosine";
  meta["seed"] = seeds[0];
  meta["epochs"] = a.epochs;
  meta["steps_per_epoch"] = a.steps;
  json losses = json::array();
  for (const auto& l : log.epoch_mean) losses.push_back(l.total);
  meta["epoch_loss"] = losses;
  bundle.save(rec.output(".ckpt"), meta.dump());

  std::ofstream csv(rec.output(".csv"));
  csv << "epoch,total,inverse,noise,classifier\n";
  for (std::size_t e = 0; e < log.epoch_mean.size(); ++e) {
    const auto& l = log.epoch_mean[e];
    csv << e + 1 << ',' << g17(l.total) << ',' << g17(l.inverse) << ',' << g17(l.noise) << ','
        << g17(l.classifier) << '\n';
  }
  std::cout << "trained " << a.epochs << " x " << a.steps << " steps; loss " << g17(log.epoch_mean.front().total)
            << " -> " << g17(log.epoch_mean.back().total) << '\n';
}

struct EvalArgs {
  std::vector<std::string> configs{"s8_2v6"};
  std::string seed;
  std::string policies = "macdmp";
  std::string checkpoint;
  PlanOpts plan;
};

void run_eval(const EvalArgs& a, RunRecord& rec) {
  if (a.seed.empty()) throw ConfigError("seed: --seed is required for eval");
  const auto seeds = parse_seeds(a.seed);
  std::vector<planner::PolicyKind> policies;
  {
    std::stringstream ss(a.policies);
    std::string p;
    while (std::getline(ss, p, ',')) policies.push_back(planner::parse_policy(p));
  }
  auto model = load_model(a.checkpoint, rec);
  std::string canon = "eval|policies=" + a.policies + ";" + a.plan.canonical();
  for (const auto& c : a.configs) canon += "|" + netsim::load_scenario(c).canonical();
  if (model) canon += "|ckpt=" + hex32(file_crc(a.checkpoint));
  rec.config_hash = hex32(text_crc(canon));
  rec.seed = seed_tag(seeds);

  const auto opts = a.plan.options(model ? &model->bundle : nullptr);
  std::ofstream csv(rec.output(".csv"));
  planner::write_csv_header(csv);
  for (const auto& c : a.configs) {
    const auto sc = netsim::load_scenario(c);
    for (auto p : policies) {
      const auto report = planner::evaluate(p, sc, seeds, model ? &model->bundle : nullptr,
                                            model ? &model->schedule : nullptr, opts);
      planner::write_csv_rows(csv, report);
      planner::write_summary(std::cout, report);
    }
  }
}

struct AblateArgs {
  std::vector<std::string> configs{"s8_2v6"};
  std::string seed = "1,2,3";
  std::string param;
  std::string values;
  std::vector<std::string> checkpoints;
  std::string checkpoint_no_mf;
  PlanOpts plan;
};

void run_ablate(const AblateArgs& a, RunRecord& rec) {
  const auto seeds = parse_seeds(a.seed);
  if (a.values.empty()) throw ConfigError("values: --values is required");
  std::vector<std::string> labels;
  {
    std::stringstream ss(a.values);
    std::string v;
    while (std::getline(ss, v, ',')) labels.push_back(v);
  }
  if (a.checkpoints.empty()) throw ConfigError("checkpoint: ablate needs --checkpoint");

  std::vector<LoadedModel> models_by_value;
  std::vector<std::size_t> model_index(labels.size(), 0);
  std::vector<PlanOpts> opts_by_value(labels.size(), a.plan);
  std::string canon = "ablate|param=" + a.param + ";values=" + a.values + ";" + a.plan.canonical();

  auto add_model = [&](const std::string& path) {
    models_by_value.push_back(std::move(*load_model(path, rec)));
    canon += "|ckpt=" + hex32(file_crc(path));
    return models_by_value.size() - 1;
  };

  if (a.param == "zeta" || a.param == "k_sample") {
    if (a.checkpoints.size() != 1) throw ConfigError("checkpoint: " + a.param + " ablation takes one checkpoint");
    add_model(a.checkpoints[0]);
    const auto vals = parse_doubles(a.values, "values");
    const int K = models_by_value[0].bundle.config.diffusion_steps;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (a.param == "zeta") {
        opts_by_value[i].zeta = vals[i];
      } else {
        const int k = static_cast<int>(vals[i]);
        if (k != vals[i] || k < 1 || k > K) throw ConfigError("values: k_sample must be an integer in [1, K]");
        // K steps is the full ancestral chain; fewer steps use dpm1.
        opts_by_value[i].k_sample = k;
        opts_by_value[i].sampler = k == K ? "ancestral" : "dpm1";
      }
    }
  } else if (a.param == "horizon") {
    const auto vals = parse_doubles(a.values, "values");
    if (a.checkpoints.size() != vals.size()) {
      throw ConfigError("checkpoint: horizon ablation takes one checkpoint per value");
    }
    for (std::size_t i = 0; i < vals.size(); ++i) {
      model_index[i] = add_model(a.checkpoints[i]);
      if (models_by_value[model_index[i]].bundle.config.horizon != static_cast<int>(vals[i])) {
        throw SchemaError("checkpoint " + a.checkpoints[i] + " was trained with a different horizon");
      }
    }
  } else if (a.param == "mf") {
    if (a.checkpoint_no_mf.empty()) throw ConfigError("checkpoint-no-mf: mf ablation needs both checkpoints");
    const auto on = add_model(a.checkpoints[0]);
    const auto off = add_model(a.checkpoint_no_mf);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == "on" || labels[i] == "1") {
        model_index[i] = on;
      } else if (labels[i] == "off" || labels[i] == "0") {
        model_index[i] = off;
      } else {
        throw ConfigError("values: mf values are on|off");
      }
    }
  } else {
    throw ConfigError("param: unknown ablation '" + a.param + "' (zeta|horizon|k_sample|mf)");
  }
  for (const auto& c : a.configs) canon += "|" + netsim::load_scenario(c).canonical();
  rec.config_hash = hex32(text_crc(canon));
  rec.seed = seed_tag(seeds);

  std::ofstream csv(rec.output(".csv"));
  planner::write_csv_header(csv, {"param", "value"});
  for (const auto& c : a.configs) {
    const auto sc = netsim::load_scenario(c);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto& m = models_by_value[model_index[i]];
      const auto policy = m.bundle.config.use_mf ? planner::PolicyKind::kMacdmp : planner::PolicyKind::kMacdmpNoMf;
      const auto report =
          planner::evaluate(policy, sc, seeds, &m.bundle, &m.schedule, opts_by_value[i].options(&m.bundle));
      planner::write_csv_rows(csv, report, {a.param, labels[i]});
      std::cout << a.param << '=' << labels[i] << ": ";
      planner::write_summary(std::cout, report);
    }
  }
}

struct TheoryArgs {
  std::uint64_t seed = 1;
  int paths = 100000;
  int steps = 10000;
};

void run_verify_theory(const TheoryArgs& a, RunRecord& rec) {
  using namespace theory;
  rec.config_hash =
      hex32(text_crc("verify-theory|paths=" + std::to_string(a.paths) + ";steps=" + std::to_string(a.steps)));
  rec.seed = std::to_string(a.seed);
  std::ofstream csv(rec.output(".csv"));
  csv << "check,case,param,measured,bound,slack,pass\n";
  bool ok = true;
  auto row = [&](const std::string& check, const std::string& cs, double param, double measured, double bound,
                 double slack, bool pass) {
    csv << check << ',' << cs << ',' << g17(param) << ',' << g17(measured) << ',' << g17(bound) << ',' << g17(slack)
        << ',' << pass << '\n';
    ok = ok && pass;
  };

  // Forward convergence: Gaussian data in 1, 2 and 4 dimensions, 20 horizons.
  std::vector<double> Ts;
  for (int i = 0; i < 20; ++i) Ts.push_back(2.5 + 0.5 * i);
  const ScalarFn beta_const = [](double) { return 1.0; };
  const ScalarFn beta_lin = [](double t) { return 0.5 + 0.1 * t; };
  int fails2 = 0;
  for (int d : {1, 2, 4}) {
    GaussianDist x0{Eigen::VectorXd::LinSpaced(d, 1.0, -1.0), 0.5 * Eigen::MatrixXd::Identity(d, d)};
    for (const auto& [name, beta] : {std::pair{"const", beta_const}, std::pair{"linear", beta_lin}}) {
      std::vector<double> grid = Ts;
      if (std::string(name) == "linear") {
        for (auto& t : grid) t += 2.0;
      }
      for (const auto& r : lemma2_check(x0, beta, grid).rows) {
        row("lemma2", "d" + std::to_string(d) + "_" + name, r.T, r.kl, r.bound, r.slack, r.pass);
        fails2 += !r.pass;
      }
    }
  }

  // KL evolution: five pairs of linear SDEs with shared diffusion.
  struct Pair {
    const char* name;
    LinearSde p, q;
  };
  const ScalarFn g1 = [](double) { return 1.0; };
  const ScalarFn g_t = [](double t) { return 0.5 + 0.5 * t; };
  const std::vector<Pair> pairs{
      {"a-0.5_vs_a-1", {[](double) { return -0.5; }, g1, 1.0, 0.5}, {[](double) { return -1.0; }, g1, 0.0, 1.0}},
      {"shared_drift", {[](double) { return -0.5; }, g1, 2.0, 0.3}, {[](double) { return -0.5; }, g1, -1.0, 2.0}},
      {"time_varying",
       {[](double t) { return -0.2 - 0.3 * t; }, g_t, 0.5, 1.5},
       {[](double t) { return -0.8 + 0.1 * t; }, g_t, -0.5, 0.7}},
      {"expanding", {[](double) { return 0.3; }, g1, 0.0, 1.0}, {[](double) { return -0.4; }, g1, 1.0, 1.0}},
      {"oscillating",
       {[](double t) { return -0.5 + 0.4 * std::sin(3.0 * t); }, g_t, 1.0, 0.2},
       {[](double t) { return -0.5 - 0.4 * std::cos(2.0 * t); }, g_t, 0.0, 1.0}},
  };
  std::vector<double> taus;
  for (int i = 1; i <= 20; ++i) taus.push_back(0.1 * i);
  for (const auto& pr : pairs) {
    for (const auto& r : lemma3_check(pr.p, pr.q, taus).rows) {
      row("lemma3", pr.name, r.tau, r.lhs, r.rhs, r.rel_err, r.pass);
    }
  }

  // Mean-field drift error.
  for (std::uint64_t s = 0; s < 3; ++s) {
    Lemma1Config cfg;
    cfg.seed = derive_seed(a.seed, 10 + s);
    cfg.neighbors = 2 + 2 * static_cast<int>(s);
    const auto rep = lemma1_empirical(cfg);
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
      row("lemma1", "n" + std::to_string(cfg.neighbors), static_cast<double>(i), rep.rows[i].measured,
          rep.rows[i].bound, 0.0, rep.rows[i].pass);
    }
  }

  // End-to-end bound with a perturbed score.
  int inconclusive = 0;
  int k = 0;
  for (double T : {5.0, 10.0}) {
    for (double delta : {0.0, 0.05, 0.1, 0.2, 0.4}) {
      Theorem1Config cfg;
      cfg.T = T;
      cfg.delta = delta;
      cfg.paths = a.paths;
      cfg.steps = a.steps;
      cfg.seed = derive_seed(a.seed, 100 + k++);
      const auto r = theorem1_check(cfg);
      if (!r.gaussian_fit_ok) {
        ++inconclusive;
        csv << "theorem1_inconclusive,T" << g17(T) << ',' << g17(delta) << ',' << g17(r.kl) << ','
            << g17(r.bound) << ',' << g17(r.allowance) << ",0\n";
        continue;
      }
      row("theorem1", "T" + g17(T), delta, r.kl, r.bound, r.allowance, r.pass);
    }
  }
  std::cout << "theory checks " << (ok ? "passed" : "FAILED") << " (" << inconclusive
            << " inconclusive theorem rows)\n";
  if (!ok) throw AssertionFailed("verify-theory: at least one bound check failed, see " + rec.outputs[0].string());
}

std::vector<std::string> strip_out_dir(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--out-dir") {
      ++i;
      continue;
    }
    if (args[i].rfind("--out-dir=", 0) == 0) continue;
    out.push_back(args[i]);
  }
  return out;
}

int dispatch(std::vector<std::string> args);

int rerun(const std::string& manifest_path, const std::string& out_dir, bool verify) {
  if (!fs::exists(manifest_path)) throw MissingArtifact("manifest not found: " + manifest_path);
  json m;
  try {
    m = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("manifest: ") + e.what());
  }
  if (!m.contains("args") || !m.contains("cwd")) throw SchemaError("manifest: missing args or cwd");
  const fs::path target = out_dir.empty() ? fs::path(manifest_path).parent_path() : fs::absolute(out_dir);
  auto args = m["args"].get<std::vector<std::string>>();
  args.push_back("--out-dir");
  args.push_back(fs::absolute(target).string());
  const auto here = fs::current_path();
  fs::current_path(m["cwd"].get<std::string>());
  const int code = dispatch(args);
  fs::current_path(here);
  if (code != 0 || !verify) return code;
  int mismatches = 0;
  for (const auto& o : m["outputs"]) {
    const auto p = target / o["file"].get<std::string>();
    const auto crc = fs::exists(p) ? hex32(file_crc(p)) : std::string("missing");
    if (crc != o["crc32"].get<std::string>()) {
      std::cerr << "mismatch: " << p.string() << " (" << crc << " vs " << o["crc32"].get<std::string>() << ")\n";
      ++mismatches;
    }
  }
  if (mismatches) throw AssertionFailed("rerun: " + std::to_string(mismatches) + " outputs differ");
  std::cout << "rerun reproduced " << m["outputs"].size() << " outputs bit-identically\n";
  return 0;
}

int dispatch(std::vector<std::string> args) {
  CLI::App app{"Mean-field conditional diffusion planning for MF-TDMA networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  std::string out_dir = ".";

  auto with_out = [&](CLI::App* sub) { sub->add_option("--out-dir", out_dir, "output directory"); };

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "scripted-policy simulation trace");
  s_sim->add_option("--config", sim.config, "bundled scenario name or YAML file")->required();
  s_sim->add_option("--seed", sim.seed, "seed");
  s_sim->add_option("--frames", sim.frames, "frames");
  s_sim->add_option("--policy", sim.policy, "proportional|uniform|noisy");
  s_sim->add_option("--noise", sim.noise, "noisy-policy sigma");
  with_out(s_sim);

  CollectArgs col;
  auto* s_col = app.add_subcommand("collect", "offline dataset from the behavior-policy mixture");
  s_col->add_option("--config", col.config, "bundled scenario name or YAML file");
  s_col->add_option("--seed", col.seed, "seed");
  s_col->add_option("--trajectories", col.trajectories, "rollouts");
  s_col->add_option("--frames", col.frames, "frames per rollout");
  s_col->add_option("--horizon", col.horizon, "window length H");
  s_col->add_option("--gamma", col.gamma, "discount");
  s_col->add_option("--noise", col.noise, "noisy-policy sigma");
  with_out(s_col);

  TrainArgs tr;
  auto* s_tr = app.add_subcommand("train", "joint training of denoiser, classifier and inverse dynamics");
  s_tr->add_option("--dataset", tr.dataset, "dataset file")->required();
  s_tr->add_option("--seed", tr.seed, "seed");
  s_tr->add_option("--epochs", tr.epochs, "epochs");
  s_tr->add_option("--steps", tr.steps, "optimizer steps per epoch");
  s_tr->add_option("--batch", tr.batch, "windows per step");
  s_tr->add_option("--lr", tr.lr, "Adam learning rate");
  s_tr->add_flag("--no-mf", tr.no_mf, "own observations in place of the mean field");
  s_tr->add_option("--horizon", tr.horizon, "expected dataset horizon");
  s_tr->add_option("--diffusion-steps", tr.K, "K");
  s_tr->add_option("--width", tr.width, "denoiser width");
  s_tr->add_option("--blocks", tr.blocks, "denoiser residual blocks");
  with_out(s_tr);

  EvalArgs ev;
  auto* s_ev = app.add_subcommand("eval", "episode evaluation");
  s_ev->add_option("--config", ev.configs, "scenario(s)");
  s_ev->add_option("--seed", ev.seed, "seed or comma list");
  s_ev->add_option("--policy", ev.policies, "comma list of macdmp|macdmp_no_mf|uniform|proportional");
  s_ev->add_option("--checkpoint", ev.checkpoint, "model checkpoint");
  ev.plan.add(s_ev);
  with_out(s_ev);

  AblateArgs ab;
  auto* s_ab = app.add_subcommand("ablate", "parameter sweep of the learned planner");
  s_ab->add_option("--config", ab.configs, "scenario(s)");
  s_ab->add_option("--seed", ab.seed, "comma list of seeds");
  s_ab->add_option("--param", ab.param, "zeta|horizon|k_sample|mf")->required();
  s_ab->add_option("--values", ab.values, "comma list")->required();
  s_ab->add_option("--checkpoint", ab.checkpoints, "checkpoint (one per value for horizon)");
  s_ab->add_option("--checkpoint-no-mf", ab.checkpoint_no_mf, "checkpoint trained without the mean field");
  ab.plan.add(s_ab);
  with_out(s_ab);

  TheoryArgs th;
  auto* s_th = app.add_subcommand("verify-theory", "numerical checks of the error bounds");
  s_th->add_option("--seed", th.seed, "seed");
  s_th->add_option("--paths", th.paths, "reverse-SDE sample paths");
  s_th->add_option("--steps", th.steps, "Euler-Maruyama steps");
  with_out(s_th);

  std::string manifest;
  std::string rerun_out;
  bool verify = false;
  auto* s_re = app.add_subcommand("rerun", "repeat a run from its manifest");
  s_re->add_option("--manifest", manifest, "manifest JSON")->required();
  s_re->add_option("--out-dir", rerun_out, "output directory (default: next to the manifest)");
  s_re->add_flag("--verify", verify, "compare outputs with the recorded checksums");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  if (s_re->parsed()) return rerun(manifest, rerun_out, verify);

  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.out_dir = out_dir;
  fs::create_directories(rec.out_dir);
  if (s_sim->parsed()) {
    rec.subcommand = "simulate";
    run_simulate(sim, rec);
  } else if (s_col->parsed()) {
    rec.subcommand = "collect";
    run_collect(col, rec);
  } else if (s_tr->parsed()) {
    rec.subcommand = "train";
    run_train(tr, rec);
  } else if (s_ev->parsed()) {
    rec.subcommand = "eval";
    run_eval(ev, rec);
  } else if (s_ab->parsed()) {
    rec.subcommand = "ablate";
    run_ablate(ab, rec);
  } else if (s_th->parsed()) {
    rec.subcommand = "verify-theory";
    try {
      run_verify_theory(th, rec);
    } catch (const AssertionFailed&) {
      write_manifest(rec, strip_out_dir(args), 0.0);
      throw;
    }
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(rec, strip_out_dir(args), elapsed);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return dispatch(args);
  } catch (const AssertionFailed& e) {
    std::cerr << "assertion failed: " << e.what() << '\n';
    return kAssertion;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << '\n';
    return kMissing;
  } catch (const FormatError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kSchema;
  } catch (const ProtocolError& e) {
    std::cerr << "assertion failed: " << e.what() << '\n';
    return kAssertion;
  } catch (const TopologyError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
