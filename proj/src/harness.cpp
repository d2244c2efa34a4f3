#include "mbmf/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mbmf/direct.hpp"

namespace mbmf::harness {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double standard_normal(std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  return dist(rng);
}

// Substream indices per trial; keep these distinct.
enum : std::uint64_t {
  kInitThetaStream = 1,
  kInitNoiseStream = 5,
  kIterNoiseStream = 6,
  kSurfaceFitStream = 1000,   // + iteration
  kDynamicsFitStream = 2000,  // + epoch (MBMF) or iteration (MB)
  kMcStream = 3000,           // + epoch or iteration
};

std::uint64_t trial_seed_of(const ExperimentConfig& cfg, int trial) {
  return cfg.base_seed ^ static_cast<std::uint64_t>(trial);
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::MBMF: return "MBMF";
    case Method::MB: return "MB";
    case Method::MF: return "MF";
    case Method::MB_MF_SWITCH: return "MB_MF_SWITCH";
  }
  throw std::logic_error("unreachable method");
}

Method method_from_name(const std::string& name) {
  if (name == "MBMF") return Method::MBMF;
  if (name == "MB") return Method::MB;
  if (name == "MF") return Method::MF;
  if (name == "MB_MF_SWITCH") return Method::MB_MF_SWITCH;
  throw ConfigError("unknown method: " + name);
}

void ExperimentConfig::validate() const {
  if (F < 1) throw ConfigError("F must be >= 1");
  if (method == Method::MB_MF_SWITCH && !(K >= 1 && K < n_iters))
    throw ConfigError("K must satisfy 1 <= K < n_iters");
  if (n_init < 1) throw ConfigError("n_init must be >= 1");
  if (n_iters < 1) throw ConfigError("n_iters must be >= 1");
  if (n_trials < 1) throw ConfigError("n_trials must be >= 1");
  if (mc.n_particles < 1) throw ConfigError("mc.n_particles must be >= 1");
  if (!(mc.caps.sanity_bound > 0)) throw ConfigError("mc.sanity_bound must be positive");
  if (direct.acq_budget < 0 || direct.mb_budget < 0)
    throw ConfigError("DIRECT budgets must be non-negative");
  if (!(direct.epsilon >= 0)) throw ConfigError("direct.epsilon must be >= 0");
  if (gp.surface.restarts < 1 || gp.dynamics.restarts < 1)
    throw ConfigError("gp restarts must be >= 1");
  if (obs_noise_sigma < 0) throw ConfigError("obs_noise_sigma must be >= 0");
  if (!(theta_lower < theta_upper))
    throw ConfigError("theta bounds require lower < upper");
  env.validate();
}

std::string ExperimentConfig::method_label() const {
  switch (method) {
    case Method::MBMF: return "MBMF(F=" + std::to_string(F) + ")";
    case Method::MB_MF_SWITCH:
      return "MB_MF_SWITCH(K=" + std::to_string(K) + ")";
    default: return method_name(method);
  }
}

int ExperimentConfig::acq_budget() const {
  return direct.acq_budget > 0 ? direct.acq_budget
                               : 200 * static_cast<int>(env.policy_dim());
}

int ExperimentConfig::mb_budget() const {
  return direct.mb_budget > 0 ? direct.mb_budget
                              : 500 * static_cast<int>(env.policy_dim());
}

direct_opt::SearchBox ExperimentConfig::theta_box() const {
  direct_opt::SearchBox box;
  box.lower = Vec::Constant(env.policy_dim(), theta_lower);
  box.upper = Vec::Constant(env.policy_dim(), theta_upper);
  return box;
}

// ---------------------------------------------------------------- config io

namespace {

void expect_keys(const json& j, std::initializer_list<const char*> allowed,
                 const std::string& context) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (item.key() == k) { ok = true; break; }
    if (!ok)
      throw ConfigError("unknown key '" + item.key() + "' in " + context);
  }
}

Vec vec_from(const json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json vec_to(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

env::EnvSpec env_from_json(const json& j) {
  expect_keys(j,
              {"kind", "dt", "horizon", "action_lower", "action_upper",
               "start_state", "goal", "cost", "obstacles", "drag",
               "link_lengths", "joint_lower", "joint_upper", "ee_radius",
               "object_radius"},
              "env");
  std::string kind = j.value("kind", std::string("pointmass"));
  env::EnvSpec s;
  if (kind == "pointmass") s = env::reference_pointmass();
  else if (kind == "pusher") s = env::reference_pusher();
  else throw ConfigError("unknown env kind: " + kind);

  if (j.contains("dt")) s.dt = j["dt"].get<double>();
  if (j.contains("horizon")) s.horizon = j["horizon"].get<int>();
  if (j.contains("action_lower")) s.action_lower = vec_from(j["action_lower"]);
  if (j.contains("action_upper")) s.action_upper = vec_from(j["action_upper"]);
  if (j.contains("start_state")) s.start_state = vec_from(j["start_state"]);
  if (j.contains("goal")) {
    Vec g = vec_from(j["goal"]);
    if (g.size() != 2) throw ConfigError("goal must have two components");
    s.goal = g.head<2>();
  }
  if (j.contains("cost")) {
    const json& c = j["cost"];
    expect_keys(c, {"running", "terminal", "action"}, "env.cost");
    s.cost.running = c.value("running", s.cost.running);
    s.cost.terminal = c.value("terminal", s.cost.terminal);
    s.cost.action = c.value("action", s.cost.action);
  }
  if (j.contains("obstacles")) {
    s.obstacles.clear();
    for (const json& ob : j["obstacles"]) {
      auto v = ob.get<std::vector<double>>();
      if (v.size() != 3)
        throw ConfigError("obstacle entries are [cx, cy, radius]");
      s.obstacles.push_back({{v[0], v[1]}, v[2]});
    }
  }
  if (j.contains("drag")) s.drag = j["drag"].get<double>();
  if (j.contains("link_lengths")) {
    Vec l = vec_from(j["link_lengths"]);
    if (l.size() != 3) throw ConfigError("link_lengths must have 3 entries");
    s.link_lengths = l.head<3>();
  }
  if (j.contains("joint_lower")) {
    Vec l = vec_from(j["joint_lower"]);
    if (l.size() != 3) throw ConfigError("joint_lower must have 3 entries");
    s.joint_lower = l.head<3>();
  }
  if (j.contains("joint_upper")) {
    Vec l = vec_from(j["joint_upper"]);
    if (l.size() != 3) throw ConfigError("joint_upper must have 3 entries");
    s.joint_upper = l.head<3>();
  }
  if (j.contains("ee_radius")) s.ee_radius = j["ee_radius"].get<double>();
  if (j.contains("object_radius"))
    s.object_radius = j["object_radius"].get<double>();
  return s;
}

json env_to_json(const env::EnvSpec& s) {
  json j;
  j["kind"] = s.kind == env::EnvKind::PointMass ? "pointmass" : "pusher";
  j["dt"] = s.dt;
  j["horizon"] = s.horizon;
  j["action_lower"] = vec_to(s.action_lower);
  j["action_upper"] = vec_to(s.action_upper);
  j["start_state"] = vec_to(s.start_state);
  j["goal"] = std::vector<double>{s.goal[0], s.goal[1]};
  j["cost"] = {{"running", s.cost.running},
               {"terminal", s.cost.terminal},
               {"action", s.cost.action}};
  if (s.kind == env::EnvKind::PointMass) {
    json obs = json::array();
    for (const env::Obstacle& ob : s.obstacles)
      obs.push_back({ob.center[0], ob.center[1], ob.radius});
    j["obstacles"] = obs;
    j["drag"] = s.drag;
  } else {
    j["link_lengths"] =
        std::vector<double>{s.link_lengths[0], s.link_lengths[1], s.link_lengths[2]};
    j["joint_lower"] =
        std::vector<double>{s.joint_lower[0], s.joint_lower[1], s.joint_lower[2]};
    j["joint_upper"] =
        std::vector<double>{s.joint_upper[0], s.joint_upper[1], s.joint_upper[2]};
    j["ee_radius"] = s.ee_radius;
    j["object_radius"] = s.object_radius;
  }
  return j;
}

gp::FitConfig fitcfg_from_json(const json& j, const std::string& context) {
  expect_keys(j, {"restarts", "max_ascent_iters", "max_points"}, context);
  gp::FitConfig c;
  c.restarts = j.value("restarts", c.restarts);
  c.max_ascent_iters = j.value("max_ascent_iters", c.max_ascent_iters);
  c.max_points = j.value("max_points", c.max_points);
  return c;
}

json fitcfg_to_json(const gp::FitConfig& c) {
  return {{"restarts", c.restarts},
          {"max_ascent_iters", c.max_ascent_iters},
          {"max_points", c.max_points}};
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  try {
    expect_keys(j,
                {"method", "F", "K", "n_init", "n_iters", "n_trials",
                 "base_seed", "env", "mc", "direct", "gp", "obs_noise_sigma",
                 "record_wall_time", "theta_lower", "theta_upper"},
                "config");
    ExperimentConfig c;
    if (j.contains("method"))
      c.method = method_from_name(j["method"].get<std::string>());
    c.F = j.value("F", c.F);
    c.K = j.value("K", c.K);
    c.n_init = j.value("n_init", c.n_init);
    c.n_iters = j.value("n_iters", c.n_iters);
    c.n_trials = j.value("n_trials", c.n_trials);
    c.base_seed = j.value("base_seed", c.base_seed);
    if (j.contains("env")) c.env = env_from_json(j["env"]);
    if (j.contains("mc")) {
      expect_keys(j["mc"], {"n_particles", "sanity_bound"}, "mc");
      c.mc.n_particles = j["mc"].value("n_particles", c.mc.n_particles);
      c.mc.caps.sanity_bound =
          j["mc"].value("sanity_bound", c.mc.caps.sanity_bound);
    }
    if (j.contains("direct")) {
      expect_keys(j["direct"], {"acq_budget", "mb_budget", "epsilon"}, "direct");
      c.direct.acq_budget = j["direct"].value("acq_budget", c.direct.acq_budget);
      c.direct.mb_budget = j["direct"].value("mb_budget", c.direct.mb_budget);
      c.direct.epsilon = j["direct"].value("epsilon", c.direct.epsilon);
    }
    if (j.contains("gp")) {
      expect_keys(j["gp"], {"surface", "dynamics"}, "gp");
      if (j["gp"].contains("surface"))
        c.gp.surface = fitcfg_from_json(j["gp"]["surface"], "gp.surface");
      if (j["gp"].contains("dynamics"))
        c.gp.dynamics = fitcfg_from_json(j["gp"]["dynamics"], "gp.dynamics");
    }
    c.obs_noise_sigma = j.value("obs_noise_sigma", c.obs_noise_sigma);
    c.record_wall_time = j.value("record_wall_time", c.record_wall_time);
    c.theta_lower = j.value("theta_lower", c.theta_lower);
    c.theta_upper = j.value("theta_upper", c.theta_upper);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError("config field error in " + path + ": " + e.what());
  }
}

void save_config(const ExperimentConfig& c, const std::string& path) {
  json j;
  j["method"] = method_name(c.method);
  j["F"] = c.F;
  j["K"] = c.K;
  j["n_init"] = c.n_init;
  j["n_iters"] = c.n_iters;
  j["n_trials"] = c.n_trials;
  j["base_seed"] = c.base_seed;
  j["env"] = env_to_json(c.env);
  j["mc"] = {{"n_particles", c.mc.n_particles},
             {"sanity_bound", c.mc.caps.sanity_bound}};
  j["direct"] = {{"acq_budget", c.direct.acq_budget},
                 {"mb_budget", c.direct.mb_budget},
                 {"epsilon", c.direct.epsilon}};
  j["gp"] = {{"surface", fitcfg_to_json(c.gp.surface)},
             {"dynamics", fitcfg_to_json(c.gp.dynamics)}};
  j["obs_noise_sigma"] = c.obs_noise_sigma;
  j["record_wall_time"] = c.record_wall_time;
  j["theta_lower"] = c.theta_lower;
  j["theta_upper"] = c.theta_upper;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file: " + path);
  out << j.dump(2) << '\n';
}

// ------------------------------------------------------------------ trials

TrialData init_trial(const ExperimentConfig& config, int trial) {
  const std::uint64_t seed = trial_seed_of(config, trial);
  std::mt19937_64 theta_rng(substream_seed(seed, kInitThetaStream));
  std::mt19937_64 noise_rng(substream_seed(seed, kInitNoiseStream));

  TrialData data;
  data.d1 = dyn::TransitionDataset(config.env.state_dim, config.env.action_dim);
  const Eigen::Index pd = config.env.policy_dim();
  for (int i = 0; i < config.n_init; ++i) {
    Vec theta(pd);
    for (Eigen::Index k = 0; k < pd; ++k) theta[k] = standard_normal(theta_rng);
    env::Trajectory traj = env::rollout_real(config.env, theta);
    data.d1.append_trajectory(traj);
    double observed = traj.realized_cost;
    if (config.obs_noise_sigma > 0)
      observed += config.obs_noise_sigma * standard_normal(noise_rng);
    data.d2.append(theta, observed);
  }
  return data;
}

namespace {

// Mutable per-trial bookkeeping shared by all method loops.
struct TrialCtx {
  const ExperimentConfig& cfg;
  int trial;
  std::uint64_t seed;
  std::string label;
  std::mt19937_64 noise_rng;
  std::vector<IterationRecord>* records;
  double incumbent = std::numeric_limits<double>::infinity();
  double worst_cost = 0.0;  // over all observed costs, for the penalty cap

  TrialCtx(const ExperimentConfig& c, int t,
           std::vector<IterationRecord>* recs)
      : cfg(c),
        trial(t),
        seed(trial_seed_of(c, t)),
        label(c.method_label()),
        noise_rng(substream_seed(trial_seed_of(c, t), kIterNoiseStream)),
        records(recs) {}

  void note_cost(double c) { worst_cost = std::max(worst_cost, c); }

  double penalty() const { return std::max(10.0 * worst_cost, 1.0); }

  // Evaluate theta on the real system, record the iteration, return the
  // trajectory so callers can grow D1/D2.
  env::Trajectory evaluate(int iteration, const Vec& theta,
                           Clock::time_point t0) {
    env::Trajectory traj = env::rollout_real(cfg.env, theta);
    double observed = traj.realized_cost;
    if (cfg.obs_noise_sigma > 0)
      observed += cfg.obs_noise_sigma * standard_normal(noise_rng);
    note_cost(observed);
    incumbent = std::min(incumbent, observed);
    IterationRecord rec;
    rec.method = label;
    rec.trial = trial;
    rec.iteration = iteration;
    rec.proposed_theta = theta;
    rec.observed_cost = observed;
    rec.incumbent_cost = incumbent;
    rec.wall_time = seconds_since(t0);
    records->push_back(std::move(rec));
    return traj;
  }

  dyn::McConfig mc_config(std::uint64_t epoch) const {
    dyn::McConfig mc = cfg.mc;
    mc.base_seed = substream_seed(seed ^ cfg.mc.base_seed, kMcStream + epoch);
    mc.caps.penalty = penalty();
    return mc;
  }

  gp::FitConfig surface_cfg(int iteration) const {
    gp::FitConfig c = cfg.gp.surface;
    c.seed = substream_seed(seed, kSurfaceFitStream +
                                      static_cast<std::uint64_t>(iteration));
    return c;
  }

  gp::FitConfig dynamics_cfg(std::uint64_t epoch) const {
    gp::FitConfig c = cfg.gp.dynamics;
    c.seed = substream_seed(seed, kDynamicsFitStream + epoch);
    return c;
  }
};

// C_L as a memoising prior mean; keeps the epoch's dynamics model alive.
gp::PriorMean make_prior(std::shared_ptr<const dyn::DynamicsModel> model,
                         const env::EnvSpec& env_spec,
                         const dyn::McConfig& mc) {
  return gp::PriorMean([model = std::move(model), env_spec, mc](const Vec& theta) {
    return dyn::expected_cost(*model, env_spec, theta, mc);
  });
}

// One BO iteration block shared by MF, MBMF and the MF phase of the switch
// baseline: fit surface on D2, propose by EI/DIRECT, evaluate, append.
env::Trajectory bo_iteration(TrialCtx& ctx, TrialData& data,
                             const gp::PriorMean& prior, int iteration) {
  auto t0 = Clock::now();
  bo::ResponseSurface surface = bo::build_response_surface(
      data.d2, prior, ctx.surface_cfg(iteration));
  bo::ProposeConfig pc;
  pc.budget = ctx.cfg.acq_budget();
  pc.epsilon = ctx.cfg.direct.epsilon;
  Vec theta = bo::propose_next(surface, ctx.cfg.theta_box(), pc);
  env::Trajectory traj = ctx.evaluate(iteration, theta, t0);
  data.d2.append(theta, ctx.records->back().observed_cost);
  return traj;
}

// One MB iteration: retrain dynamics on D1, minimize C_L directly, evaluate.
env::Trajectory mb_iteration(TrialCtx& ctx, TrialData& data, int iteration) {
  auto t0 = Clock::now();
  dyn::DynamicsModel model =
      dyn::train_dynamics(data.d1, ctx.dynamics_cfg(
                                       static_cast<std::uint64_t>(iteration)));
  dyn::McConfig mc = ctx.mc_config(static_cast<std::uint64_t>(iteration));
  auto objective = [&](const Vec& theta) {
    return dyn::expected_cost(model, ctx.cfg.env, theta, mc);
  };
  direct_opt::DirectResult r = direct_opt::direct_minimize(
      objective, ctx.cfg.theta_box(), ctx.cfg.mb_budget(),
      ctx.cfg.direct.epsilon);
  env::Trajectory traj = ctx.evaluate(iteration, r.best_point, t0);
  data.d1.append_trajectory(traj);
  return traj;
}

void seed_worst_cost(TrialCtx& ctx, const TrialData& data) {
  for (Eigen::Index i = 0; i < data.d2.size(); ++i)
    ctx.note_cost(data.d2.costs[i]);
}

TrialResult finish(TrialResult res) {
  double best = std::numeric_limits<double>::infinity();
  for (const IterationRecord& r : res.records)
    if (r.observed_cost < best) {
      best = r.observed_cost;
      res.final_theta = r.proposed_theta;
    }
  if (res.records.empty() && res.valid) {
    res.valid = false;
    res.error = "no iterations completed";
  }
  return res;
}

}  // namespace

TrialResult run_mbmf(const ExperimentConfig& config, int trial) {
  TrialResult res;
  TrialCtx ctx(config, trial, &res.records);
  try {
    TrialData data = init_trial(config, trial);
    seed_worst_cost(ctx, data);
    std::uint64_t epoch = 0;
    auto model = std::make_shared<const dyn::DynamicsModel>(
        dyn::train_dynamics(data.d1, ctx.dynamics_cfg(epoch)));
    gp::PriorMean prior = make_prior(model, config.env, ctx.mc_config(epoch));
    for (int i = 1; i <= config.n_iters; ++i) {
      dyn::TransitionDataset& d1 = data.d1;
      env::Trajectory traj = bo_iteration(ctx, data, prior, i);
      d1.append_trajectory(traj);
      if (i % config.F == 0) {
        ++epoch;  // Alg. 1 line 12: update f_L from D1, redefine C_L
        model = std::make_shared<const dyn::DynamicsModel>(
            dyn::train_dynamics(data.d1, ctx.dynamics_cfg(epoch)));
        prior = make_prior(model, config.env, ctx.mc_config(epoch));
      }
    }
  } catch (const std::exception& e) {
    res.valid = false;
    res.error = e.what();
  }
  return finish(std::move(res));
}

TrialResult run_mb(const ExperimentConfig& config, int trial) {
  TrialResult res;
  TrialCtx ctx(config, trial, &res.records);
  try {
    TrialData data = init_trial(config, trial);
    seed_worst_cost(ctx, data);
    for (int i = 1; i <= config.n_iters; ++i) mb_iteration(ctx, data, i);
  } catch (const std::exception& e) {
    res.valid = false;
    res.error = e.what();
  }
  return finish(std::move(res));
}

TrialResult run_mf(const ExperimentConfig& config, int trial) {
  TrialResult res;
  TrialCtx ctx(config, trial, &res.records);
  try {
    TrialData data = init_trial(config, trial);
    seed_worst_cost(ctx, data);
    gp::PriorMean zero = gp::PriorMean::zero();
    for (int i = 1; i <= config.n_iters; ++i)
      bo_iteration(ctx, data, zero, i);  // D1 ignored
  } catch (const std::exception& e) {
    res.valid = false;
    res.error = e.what();
  }
  return finish(std::move(res));
}

TrialResult run_mb_then_mf(const ExperimentConfig& config, int trial) {
  TrialResult res;
  TrialCtx ctx(config, trial, &res.records);
  try {
    TrialData data = init_trial(config, trial);
    seed_worst_cost(ctx, data);
    for (int i = 1; i <= config.K; ++i) {
      env::Trajectory traj = mb_iteration(ctx, data, i);
      // the MB phase's cost observations seed the BO phase's D2
      data.d2.append(res.records.back().proposed_theta,
                     res.records.back().observed_cost);
      (void)traj;
    }
    gp::PriorMean zero = gp::PriorMean::zero();
    for (int i = config.K + 1; i <= config.n_iters; ++i)
      bo_iteration(ctx, data, zero, i);
  } catch (const std::exception& e) {
    res.valid = false;
    res.error = e.what();
  }
  return finish(std::move(res));
}

TrialResult run_trial(const ExperimentConfig& config, int trial) {
  switch (config.method) {
    case Method::MBMF: return run_mbmf(config, trial);
    case Method::MB: return run_mb(config, trial);
    case Method::MF: return run_mf(config, trial);
    case Method::MB_MF_SWITCH: return run_mb_then_mf(config, trial);
  }
  throw std::logic_error("unreachable method");
}

// -------------------------------------------------------------- aggregation

AggregateResult aggregate(const std::vector<IterationRecord>& records) {
  if (records.empty()) throw std::invalid_argument("no records to aggregate");

  std::vector<std::string> label_order;
  std::map<std::string, std::map<int, std::vector<const IterationRecord*>>>
      by_label_trial;
  for (const IterationRecord& r : records) {
    if (!by_label_trial.count(r.method)) label_order.push_back(r.method);
    by_label_trial[r.method][r.trial].push_back(&r);
  }

  AggregateResult out;
  for (const std::string& label : label_order) {
    auto& trials = by_label_trial[label];
    int max_iter = 0;
    for (auto& [trial, recs] : trials)
      for (const IterationRecord* r : recs)
        max_iter = std::max(max_iter, r->iteration);

    // Complete trials only: one record per iteration 1..max_iter.
    std::vector<std::vector<double>> incumbents;  // [trial][iter-1]
    for (auto& [trial, recs] : trials) {
      if (static_cast<int>(recs.size()) != max_iter) continue;
      std::vector<double> inc(max_iter,
                              std::numeric_limits<double>::quiet_NaN());
      bool ok = true;
      for (const IterationRecord* r : recs) {
        if (r->iteration < 1 || r->iteration > max_iter) { ok = false; break; }
        inc[r->iteration - 1] = r->incumbent_cost;
      }
      for (double v : inc)
        if (std::isnan(v)) ok = false;
      if (ok) incumbents.push_back(std::move(inc));
    }

    const int n = static_cast<int>(incumbents.size());
    std::vector<CurvePoint> curve;
    curve.reserve(max_iter);
    for (int it = 0; it < max_iter; ++it) {
      CurvePoint p;
      p.iteration = it + 1;
      p.n = n;
      if (n > 0) {
        double sum = 0;
        for (const auto& inc : incumbents) sum += inc[it];
        p.mean = sum / n;
        if (n > 1) {
          double ss = 0;
          for (const auto& inc : incumbents) {
            double d = inc[it] - p.mean;
            ss += d * d;
          }
          p.std = std::sqrt(ss / (n - 1));
        }
      }
      curve.push_back(p);
    }

    FinalRow row;
    row.method = label;
    if (auto pos = label.find("(F="); pos != std::string::npos)
      row.F = std::stoi(label.substr(pos + 3));
    if (auto pos = label.find("(K="); pos != std::string::npos)
      row.K = std::stoi(label.substr(pos + 3));
    if (!curve.empty()) {
      row.mean = curve.back().mean;
      row.std = curve.back().std;
    }
    row.n_valid_trials = n;
    out.finals.push_back(row);
    out.curves[label] = std::move(curve);
  }
  return out;
}

// ------------------------------------------------------------------- csv io

namespace {

std::string theta_field(const Vec& theta) {
  std::string s;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (i) s += ';';
    s += format_double(theta[i]);
  }
  return s;
}

Vec theta_from_field(const std::string& field) {
  std::vector<double> vals;
  std::stringstream ss(field);
  std::string part;
  while (std::getline(ss, part, ';'))
    if (!part.empty()) vals.push_back(std::stod(part));
  return Eigen::Map<const Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace

void write_records_csv(const std::vector<IterationRecord>& records,
                       const std::string& path, bool record_wall_time) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open records file: " + path);
  out << "method,trial,iteration,proposed_theta,observed_cost,incumbent_cost,"
         "wall_time\n";
  for (const IterationRecord& r : records) {
    out << r.method << ',' << r.trial << ',' << r.iteration << ','
        << theta_field(r.proposed_theta) << ','
        << format_double(r.observed_cost) << ','
        << format_double(r.incumbent_cost) << ','
        << (record_wall_time ? format_double(r.wall_time) : "0") << '\n';
  }
  if (!out) throw std::runtime_error("failed writing records file: " + path);
}

std::vector<IterationRecord> read_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open records file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty records file: " + path);
  std::vector<IterationRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    IterationRecord r;
    auto next = [&]() {
      if (!std::getline(ss, cell, ','))
        throw std::runtime_error("short row in records file: " + path);
      return cell;
    };
    r.method = next();
    r.trial = std::stoi(next());
    r.iteration = std::stoi(next());
    r.proposed_theta = theta_from_field(next());
    r.observed_cost = std::stod(next());
    r.incumbent_cost = std::stod(next());
    r.wall_time = std::stod(next());
    records.push_back(std::move(r));
  }
  return records;
}

void write_summary_csv(const AggregateResult& agg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open summary file: " + path);
  out << "method,F,K,mean,std,n_valid_trials\n";
  for (const FinalRow& row : agg.finals) {
    out << row.method << ',' << row.F << ',' << row.K << ','
        << format_double(row.mean) << ',' << format_double(row.std) << ','
        << row.n_valid_trials << '\n';
  }
  if (!out) throw std::runtime_error("failed writing summary file: " + path);
}

// -------------------------------------------------------------- experiment

ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::string& out_dir) {
  config.validate();
  ExperimentResult result;
  for (int trial = 0; trial < config.n_trials; ++trial) {
    TrialResult tr = run_trial(config, trial);
    if (tr.valid) ++result.n_valid;
    else
      std::fprintf(stderr, "trial %d failed: %s\n", trial, tr.error.c_str());
    result.trials.push_back(std::move(tr));
  }
  for (const TrialResult& tr : result.trials)
    result.records.insert(result.records.end(), tr.records.begin(),
                          tr.records.end());
  std::stable_sort(result.records.begin(), result.records.end(),
                   [](const IterationRecord& a, const IterationRecord& b) {
                     return std::tie(a.method, a.trial, a.iteration) <
                            std::tie(b.method, b.trial, b.iteration);
                   });

  // Aggregate over valid trials only; invalid ones still land in records.csv.
  std::vector<IterationRecord> valid_records;
  for (const TrialResult& tr : result.trials)
    if (tr.valid)
      valid_records.insert(valid_records.end(), tr.records.begin(),
                           tr.records.end());
  if (!valid_records.empty()) result.agg = aggregate(valid_records);

  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "trajectories");
    write_records_csv(result.records, (fs::path(out_dir) / "records.csv").string(),
                      config.record_wall_time);
    if (!valid_records.empty())
      write_summary_csv(result.agg,
                        (fs::path(out_dir) / "summary.csv").string());
    for (int trial = 0; trial < config.n_trials; ++trial) {
      const TrialResult& tr = result.trials[trial];
      if (!tr.valid || tr.final_theta.size() == 0) continue;
      env::Trajectory traj = env::rollout_real(config.env, tr.final_theta);
      std::string name = method_name(config.method) + "_" +
                         std::to_string(trial) + ".csv";
      env::save_trajectory_csv(
          traj, config.env,
          (fs::path(out_dir) / "trajectories" / name).string());
    }
  }
  return result;
}

}  // namespace mbmf::harness
