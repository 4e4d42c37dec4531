#include "colf/exp/experiment.hpp"

#include "colf/env/scenario_io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace colf::exp {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Method m) {
  switch (m) {
    case Method::mappo: return "mappo";
    case Method::mappo_aac: return "mappo_aac";
    case Method::colf: return "colf";
    case Method::colf_no_aac: return "colf_no_aac";
    case Method::colf_no_ce: return "colf_no_ce";
  }
  return "unknown";
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> m{Method::mappo, Method::mappo_aac, Method::colf, Method::colf_no_aac,
                                     Method::colf_no_ce};
  return m;
}

Method parse_method(const std::string& s) {
  for (Method m : all_methods())
    if (to_string(m) == s) return m;
  throw ContractViolation("unknown method '" + s + "' (mappo, mappo_aac, colf, colf_no_aac, colf_no_ce)");
}

MethodWiring method_wiring(Method m) {
  MethodWiring w;
  const bool colf = m == Method::colf || m == Method::colf_no_aac || m == Method::colf_no_ce;
  if (colf) {
    w.follower_kind = policy::ActorKind::goal_blind_aux;
    w.follower_input = env::kFollowerObsDim;
  }
  w.aac = m == Method::mappo_aac || m == Method::colf || m == Method::colf_no_ce;
  w.ce_coef = (m == Method::colf || m == Method::colf_no_aac) ? 0.03 : 0.0;
  return w;
}

void apply_method(Method m, mappo::TrainConfig& cfg) {
  const MethodWiring w = method_wiring(m);
  cfg.follower_kind = w.follower_kind;
  cfg.aac = w.aac;
  cfg.ce_coef = w.ce_coef;
}

std::string to_string(Perception p) { return p == Perception::vector ? "vector" : "grounded"; }

Perception parse_perception(const std::string& s) {
  if (s == "vector") return Perception::vector;
  if (s == "grounded") return Perception::grounded;
  throw ContractViolation("unknown perception mode '" + s + "' (vector, grounded)");
}

// ---------------------------------------------------------------------------
// Logging

LogLevel log_level() {
  const char* v = std::getenv("COLF_LOG");
  if (!v) return LogLevel::info;
  const std::string s(v);
  if (s == "error") return LogLevel::error;
  if (s == "warn") return LogLevel::warn;
  if (s == "debug") return LogLevel::debug;
  return LogLevel::info;
}

void log(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static std::mutex mu;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[colf " << names[static_cast<int>(level)] << "] " << msg << "\n";
}

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::validate() const {
  scenario.validate();
  mappo::TrainConfig t = train;
  apply_method(method, t);
  t.validate();
  require(iterations >= 0, "RunConfig: iterations must be >= 0");
  require(checkpoint_every >= 0, "RunConfig: checkpoint_every must be >= 0");
  require(eval_trials >= 0, "RunConfig: eval trials must be >= 0");
  require(!out_dir.empty(), "RunConfig: output directory is empty");
}

namespace {

template <typename T>
T get_or(const toml::node_view<const toml::node>& v, T fallback) {
  if (!v) return fallback;
  if constexpr (std::is_same_v<T, double>) {
    if (auto d = v.value<double>()) return *d;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (auto b = v.value<bool>()) return *b;
  } else if constexpr (std::is_integral_v<T>) {
    if (auto i = v.value<std::int64_t>()) return static_cast<T>(*i);
  } else {
    if (auto s = v.value<std::string>()) return *s;
  }
  throw ContractViolation("config: wrong type for a key");
}

const char* kMethodOwned[] = {"ce_coef", "aac", "follower_kind"};

}  // namespace

RunConfig run_config_from_toml(const toml::table& t) {
  const toml::node_view<const toml::node> v{t};
  RunConfig c;
  if (auto m = v["method"].value<std::string>()) c.method = parse_method(*m);
  if (v["scenario"].is_string()) {
    c.scenario = env::load_scenario(*v["scenario"].value<std::string>());
  } else if (const toml::table* s = v["scenario"].as_table()) {
    c.scenario = env::scenario_from_toml(*s);
  }
  c.iterations = get_or(v["iterations"], c.iterations);
  c.checkpoint_every = get_or(v["checkpoint_every"], c.checkpoint_every);
  if (auto p = v["perception"].value<std::string>()) c.perception = parse_perception(*p);
  if (auto o = v["out_dir"].value<std::string>()) c.out_dir = *o;

  if (const toml::table* tr = v["train"].as_table()) {
    for (const char* k : kMethodOwned)
      require(!tr->contains(k), std::string("config: train.") + k + " is set by the method, not the config");
    const toml::node_view<const toml::node> x{*tr};
    mappo::TrainConfig& a = c.train;
    a.gamma = get_or(x["gamma"], a.gamma);
    a.gae_lambda = get_or(x["gae_lambda"], a.gae_lambda);
    a.clip_eps = get_or(x["clip_eps"], a.clip_eps);
    a.epochs = get_or(x["epochs"], a.epochs);
    a.minibatches = get_or(x["minibatches"], a.minibatches);
    a.rollout_length = get_or(x["rollout_length"], a.rollout_length);
    a.num_envs = get_or(x["num_envs"], a.num_envs);
    a.actor_lr = get_or(x["actor_lr"], a.actor_lr);
    a.critic_lr = get_or(x["critic_lr"], a.critic_lr);
    a.entropy_coef = get_or(x["entropy_coef"], a.entropy_coef);
    a.max_grad_norm = get_or(x["max_grad_norm"], a.max_grad_norm);
    a.value_norm = get_or(x["value_norm"], a.value_norm);
    a.initial_log_std = get_or(x["initial_log_std"], a.initial_log_std);
    a.seed = get_or(x["seed"], a.seed);
    if (const toml::array* h = x["hidden_dims"].as_array()) {
      a.hidden_dims.clear();
      for (const auto& n : *h) a.hidden_dims.push_back(static_cast<int>(n.value<std::int64_t>().value()));
    }
  }
  if (const toml::table* ev = v["eval"].as_table()) {
    const toml::node_view<const toml::node> x{*ev};
    c.eval_trials = get_or(x["trials"], c.eval_trials);
    if (const toml::array* s = x["seeds"].as_array()) {
      c.eval_seeds.clear();
      for (const auto& n : *s) c.eval_seeds.push_back(static_cast<std::uint64_t>(n.value<std::int64_t>().value()));
    }
  }
  apply_method(c.method, c.train);
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& p) {
  toml::table t;
  try {
    t = toml::parse_file(p.string());
  } catch (const toml::parse_error& e) {
    throw ContractViolation("config " + p.string() + ": " + std::string(e.description()));
  }
  return run_config_from_toml(t);
}

std::string run_config_to_toml(const RunConfig& c) {
  toml::table t = toml::parse(env::scenario_to_toml(c.scenario));
  t.insert("method", to_string(c.method));
  t.insert("iterations", c.iterations);
  t.insert("checkpoint_every", c.checkpoint_every);
  t.insert("perception", to_string(c.perception));
  t.insert("out_dir", c.out_dir.string());
  const mappo::TrainConfig& a = c.train;
  toml::array hidden;
  for (int h : a.hidden_dims) hidden.push_back(h);
  t.insert("train", toml::table{{"gamma", a.gamma},
                                {"gae_lambda", a.gae_lambda},
                                {"clip_eps", a.clip_eps},
                                {"epochs", a.epochs},
                                {"minibatches", a.minibatches},
                                {"rollout_length", a.rollout_length},
                                {"num_envs", a.num_envs},
                                {"actor_lr", a.actor_lr},
                                {"critic_lr", a.critic_lr},
                                {"entropy_coef", a.entropy_coef},
                                {"max_grad_norm", a.max_grad_norm},
                                {"value_norm", a.value_norm},
                                {"initial_log_std", a.initial_log_std},
                                {"seed", static_cast<std::int64_t>(a.seed)},
                                {"hidden_dims", hidden}});
  toml::array seeds;
  for (auto s : c.eval_seeds) seeds.push_back(static_cast<std::int64_t>(s));
  t.insert("eval", toml::table{{"trials", c.eval_trials}, {"seeds", seeds}});
  std::ostringstream os;
  os << t;
  return os.str();
}

// ---------------------------------------------------------------------------
// Training

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols{
      "iteration",        "object_reward_mean", "leader_return",          "follower_return",
      "episodes",         "leader_loss",        "leader_surrogate",       "leader_entropy",
      "leader_clip_frac", "follower_loss",      "follower_surrogate",     "follower_entropy",
      "follower_clip_frac", "ce_loss",          "critic_loss",            "mi_diagnostic",
      "excluded"};
  return cols;
}

namespace {

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string metrics_row(const mappo::IterationStats& s) {
  const mappo::LossReport& l = s.losses;
  const std::vector<std::string> f{std::to_string(s.iteration), num(s.object_reward_mean), num(s.leader_return),
                                   num(s.follower_return), std::to_string(s.episodes), num(l.leader_total),
                                   num(l.leader_surrogate), num(l.leader_entropy), num(l.leader_clip_fraction),
                                   num(l.follower_total), num(l.follower_surrogate), num(l.follower_entropy),
                                   num(l.follower_clip_fraction), num(l.ce), num(l.critic), num(l.mi_diagnostic),
                                   std::to_string(l.excluded)};
  std::string row;
  for (std::size_t i = 0; i < f.size(); ++i) row += (i ? "," : "") + f[i];
  return row;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + p.string());
}

}  // namespace

TrainResult cmd_train(const RunConfig& config, const IterationHook& hook) {
  config.validate();
  mappo::TrainConfig tc = config.train;
  apply_method(config.method, tc);

  fs::create_directories(config.out_dir / "checkpoints");
  write_text(config.out_dir / "config.toml", run_config_to_toml(config));

  TrainResult res;
  res.metrics_csv = config.out_dir / "metrics.csv";
  std::ofstream csv(res.metrics_csv, std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write " + res.metrics_csv.string());
  const auto& cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) csv << (i ? "," : "") << cols[i];
  csv << "\n";

  const json meta{{"method", to_string(config.method)}, {"scenario", config.scenario.name}};
  mappo::Trainer trainer(tc, config.scenario);
  log(LogLevel::info, "train " + to_string(config.method) + " seed " + std::to_string(tc.seed) + " for " +
                          std::to_string(config.iterations) + " iterations -> " + config.out_dir.string());

  for (int i = 0; i < config.iterations; ++i) {
    mappo::IterationStats st;
    try {
      st = trainer.iterate();
    } catch (const NonFiniteError& e) {
      log(LogLevel::error, std::string(e.what()) + "; writing last good state");
      res.aborted = true;
      res.final_checkpoint = config.out_dir / "last_good.ckpt";
      nn::save_checkpoint(res.final_checkpoint, trainer.checkpoint(meta));
      return res;
    }
    csv << metrics_row(st) << "\n";
    csv.flush();
    if (!csv) throw std::runtime_error("write failed: " + res.metrics_csv.string());
    res.history.push_back(st);
    if (i % 10 == 0)
      log(LogLevel::debug, "iter " + std::to_string(i) + " r_obj " + num(st.object_reward_mean));
    if (config.checkpoint_every > 0 && (i + 1) % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "iter_%06d.ckpt", i + 1);
      nn::save_checkpoint(config.out_dir / "checkpoints" / name, trainer.checkpoint(meta));
    }
    if (hook && !hook(st)) break;
  }
  res.final_checkpoint = config.out_dir / "final.ckpt";
  json final_meta = meta;
  final_meta["final"] = true;
  nn::save_checkpoint(res.final_checkpoint, trainer.checkpoint(final_meta));
  return res;
}

// ---------------------------------------------------------------------------
// Evaluation

double minimum_ogd(const env::ScenarioConfig& c) {
  if (c.goal_mode != env::GoalMode::cylinder) return 0.0;
  return c.goal_radius + std::min(c.object_half_extents.x(), c.object_half_extents.y());
}

Aggregate aggregate(const std::vector<double>& values) {
  if (values.empty()) return {kUndefined, kUndefined};
  double mean = 0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return {mean, std::sqrt(var)};
}

SeedReport summarize_seed(std::uint64_t seed, std::vector<TrialResult> trials, double min_ogd) {
  SeedReport r;
  r.seed = seed;
  r.trials = static_cast<int>(trials.size());
  if (trials.empty()) {
    r.sr_strict = r.sr_loose = r.sr_real = r.mean_ogd = kUndefined;
    return r;
  }
  int strict = 0, loose = 0, real = 0;
  double ogd = 0;
  for (const auto& t : trials) {
    strict += t.ogd < kDeltaStrict;
    loose += t.ogd < kDeltaLoose;
    real += t.ogd <= min_ogd + kRealMargin;
    ogd += t.ogd;
  }
  const double n = static_cast<double>(trials.size());
  r.sr_strict = strict / n;
  r.sr_loose = loose / n;
  r.sr_real = real / n;
  r.mean_ogd = ogd / n;
  r.trial_results = std::move(trials);
  return r;
}

EvalReport assemble_report(std::vector<SeedReport> seeds) {
  EvalReport rep;
  rep.trials_per_seed = seeds.empty() ? 0 : seeds.front().trials;
  for (const auto& s : seeds) require(s.trials == rep.trials_per_seed, "assemble_report: unequal trial counts");
  rep.seeds = std::move(seeds);
  if (!rep.defined()) {
    rep.sr_strict = rep.sr_loose = rep.sr_real = rep.mean_ogd = {kUndefined, kUndefined};
    return rep;
  }
  std::vector<double> a, b, c, d;
  for (const auto& s : rep.seeds) {
    a.push_back(s.sr_strict);
    b.push_back(s.sr_loose);
    c.push_back(s.sr_real);
    d.push_back(s.mean_ogd);
  }
  rep.sr_strict = aggregate(a);
  rep.sr_loose = aggregate(b);
  rep.sr_real = aggregate(c);
  rep.mean_ogd = aggregate(d);
  return rep;
}

namespace {

json agg_json(const Aggregate& a) {
  auto j = [](double x) { return std::isnan(x) ? json(nullptr) : json(x); };
  return {{"mean", j(a.mean)}, {"std", j(a.std)}};
}

json vec2_json(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }

}  // namespace

json to_json(const EvalReport& r) {
  auto j = [](double x) { return std::isnan(x) ? json(nullptr) : json(x); };
  json seeds = json::array();
  for (const auto& s : r.seeds)
    seeds.push_back({{"seed", s.seed},
                     {"trials", s.trials},
                     {"sr_0.65", j(s.sr_strict)},
                     {"sr_0.75", j(s.sr_loose)},
                     {"sr_real", j(s.sr_real)},
                     {"mean_ogd", j(s.mean_ogd)}});
  return {{"trials_per_seed", r.trials_per_seed}, {"defined", r.defined()},     {"per_seed", seeds},
          {"sr_0.65", agg_json(r.sr_strict)},     {"sr_0.75", agg_json(r.sr_loose)},
          {"sr_real", agg_json(r.sr_real)},       {"mean_ogd", agg_json(r.mean_ogd)}};
}

env::AgentView grounded_view(const env::WorldState& s, int agent, const Eigen::Vector2d& object_rel,
                             const Eigen::Vector2d& goal_rel) {
  require(agent == env::kLeader || agent == env::kFollower, "grounded_view: agent index must be 0 or 1");
  // The robot's own position stands in for both targets, so nothing true leaks in.
  const env::Vec2 self = s.robots[agent].pose.position();
  env::AgentView v = env::observe_agent(s, agent, self, self);
  v.object = object_rel;
  v.goal = goal_rel;
  return v;
}

GroundedObserver::GroundedObserver(int agent, grounding::MisalignmentModel mis, grounding::CameraModel cam,
                                   grounding::RenderOptions render, bool initial_scan)
    : agent_(agent), mis_(mis), cam_(cam), render_(render), initial_scan_(initial_scan) {
  mis_.validate();
  cam_.validate();
}

void GroundedObserver::begin_trial(const env::WorldState& s, const env::ScenarioConfig& c, Rng& rng) {
  landmark_ = mis_.resolve_landmark(c.instructed_goal, c.num_goals(), rng);
  object_hold_ = grounding::EstimateHold();
  goal_hold_ = grounding::EstimateHold();
  last_object_ = last_goal_ = {};
  object_rel_ = goal_rel_ = Eigen::Vector2d::Zero();
  if (!initial_scan_) return;
  const auto entities = grounding::scene_entities(s, c, {}, {landmark_});
  const int views = static_cast<int>(std::ceil(2 * M_PI / cam_.hfov));
  bool have_object = false, have_goal = false;
  for (int k = 0; k < views && !(have_object && have_goal); ++k) {
    env::Pose2 pose = s.robots[agent_].pose;
    pose.yaw = env::wrap_angle(pose.yaw + k * 2 * M_PI / views);
    const auto view = grounding::render_synthetic(entities, cam_, pose, render_);
    if (!have_object) {
      const auto e = grounding::estimate_position(cam_, pose, view, grounding::kObjectLabel, mis_, rng);
      if (e.status == grounding::Status::ok) {
        object_hold_.update(e, pose);
        have_object = true;
      }
    }
    if (!have_goal) {
      const auto e = grounding::estimate_position(cam_, pose, view, grounding::kGoalLabel, mis_, rng);
      if (e.status == grounding::Status::ok) {
        goal_hold_.update(e, pose);
        have_goal = true;
      }
    }
  }
}

env::AgentView GroundedObserver::observe(const env::WorldState& s, const env::ScenarioConfig& c, Rng& rng) {
  const env::Pose2& pose = s.robots[agent_].pose;
  const auto view = grounding::render_synthetic(grounding::scene_entities(s, c, {}, {landmark_}), cam_, pose, render_);
  last_object_ = grounding::estimate_position(cam_, pose, view, grounding::kObjectLabel, mis_, rng);
  last_goal_ = grounding::estimate_position(cam_, pose, view, grounding::kGoalLabel, mis_, rng);
  object_rel_ = object_hold_.update(last_object_, pose);
  goal_rel_ = goal_hold_.update(last_goal_, pose);
  return grounded_view(s, agent_, object_rel_, goal_rel_);
}

namespace {

Vec<mappo::Real> policy_input(const env::AgentView& v, policy::ActorKind kind) {
  const Vec<double> x =
      kind == policy::ActorKind::goal_blind_aux ? env::goal_blind_vector(v) : env::goal_conditioned_vector(v);
  return x.cast<mappo::Real>();
}

struct TrialOutput {
  TrialResult result;
  std::optional<TrialLog> log;
};

TrialOutput run_trial(const mappo::PolicyPair& pol, const env::ScenarioConfig& sc, const EvalOptions& opt,
                      std::uint64_t seed, int trial, const std::string& method, bool record) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(trial)));
  env::WorldState s = env::reset(sc, rng).state;

  const bool grounded = opt.perception == Perception::grounded;
  // The leader always grounds the instructed targets.
  GroundedObserver lead(env::kLeader, grounding::MisalignmentModel::identity(), opt.camera, opt.render,
                        opt.initial_scan);
  GroundedObserver follow(env::kFollower, opt.follower_misalignment, opt.camera, opt.render, opt.initial_scan);
  if (grounded) {
    lead.begin_trial(s, sc, rng);
    follow.begin_trial(s, sc, rng);
  }

  TrialOutput out;
  if (record) {
    out.log.emplace();
    out.log->method = method;
    out.log->scenario = sc.name;
    out.log->seed = seed;
    out.log->trial = trial;
    out.log->initial = s;
  }
  const int max_steps = opt.max_steps.value_or(sc.horizon);
  require(max_steps >= 0, "eval: max_steps must be >= 0");
  int steps = 0;
  env::DoneReason reason = env::DoneReason::none;
  for (; steps < max_steps && !s.terminated; ++steps) {
    const env::AgentView lv = grounded ? lead.observe(s, sc, rng) : env::observe_agent(s, env::kLeader);
    const env::AgentView fv = grounded ? follow.observe(s, sc, rng) : env::observe_agent(s, env::kFollower);
    const auto la = policy::act(pol.leader, policy_input(lv, pol.leader.kind()), opt.act_mode, rng);
    const auto fa = policy::act(pol.follower, policy_input(fv, pol.follower.kind()), opt.act_mode, rng);
    env::StepOutcome o = env::step(s, la.action.cast<double>(), fa.action.cast<double>(), sc);
    if (out.log) {
      StepRecord r;
      r.state = o.state;
      r.leader_action = la.action.cast<double>();
      r.follower_action = fa.action.cast<double>();
      r.rewards = o.rewards;
      r.reason = o.reason;
      r.grounded = grounded;
      r.object_estimate = {lv.object, fv.object};
      r.goal_estimate = {lv.goal, fv.goal};
      out.log->steps.push_back(std::move(r));
    }
    reason = o.reason;
    s = std::move(o.state);
  }
  out.result.ogd = env::metrics(s, sc).ogd;
  out.result.steps = steps;
  out.result.reason = reason;
  out.result.follower_landmark = grounded ? follow.landmark() : sc.instructed_goal;
  if (out.log) out.log->ogd = out.result.ogd;
  return out;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump()); }

}  // namespace

EvalReport cmd_eval(const std::vector<EvalUnit>& units, const EvalOptions& opt) {
  require(opt.trials >= 0, "eval: trials must be >= 0");
  env::ScenarioConfig sc = opt.cylinder_goals ? opt.scenario.with_cylinder_goals() : opt.scenario;
  sc.validate();
  opt.follower_misalignment.validate();
  const double min_ogd = minimum_ogd(sc);

  std::vector<SeedReport> seeds;
  for (std::size_t u = 0; u < units.size(); ++u) {
    const EvalUnit& unit = units[u];
    const nn::Checkpoint ckpt = nn::load_checkpoint(unit.checkpoint);
    const mappo::PolicyPair pol = mappo::policies_from_checkpoint(ckpt);
    require(pol.leader.kind() == policy::ActorKind::goal_conditioned,
            "eval: checkpoint leader is not goal-conditioned (" + unit.checkpoint.string() + ")");
    const std::string method = ckpt.metadata.value("method", std::string("unknown"));

    const bool record = !opt.log_dir.empty();
    if (record) fs::create_directories(opt.log_dir / "trials");
    std::vector<TrialResult> results(static_cast<std::size_t>(opt.trials));
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
      for (int t = next++; t < opt.trials; t = next++) {
        try {
          TrialOutput o = run_trial(pol, sc, opt, unit.seed, t, method, record);
          results[static_cast<std::size_t>(t)] = o.result;
          if (o.log) {
            const int id = static_cast<int>(u) * opt.trials + t;
            write_json(trial_log_path(opt.log_dir, id), to_json(*o.log));
          }
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    int threads = opt.threads > 0 ? opt.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, std::max(1, opt.trials));
    if (threads == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    seeds.push_back(summarize_seed(unit.seed, std::move(results), min_ogd));
    log(LogLevel::info, "eval seed " + std::to_string(unit.seed) + " (" + unit.checkpoint.filename().string() +
                            "): SR@0.65 " + num(seeds.back().sr_strict) + " mean OGD " + num(seeds.back().mean_ogd));
  }
  return assemble_report(std::move(seeds));
}

// ---------------------------------------------------------------------------
// Trial logs

json to_json(const env::WorldState& s) {
  json robots = json::array();
  for (const auto& r : s.robots)
    robots.push_back({{"pose", {r.pose.x, r.pose.y, r.pose.yaw}},
                      {"command", {r.command.vx, r.command.vy, r.command.wz}},
                      {"velocity", {r.velocity.vx, r.velocity.vy, r.velocity.wz}}});
  json goals = json::array();
  for (const auto& g : s.goals) goals.push_back(vec2_json(g));
  return {{"robots", robots},
          {"object",
           {{"pose", {s.object.pose.x, s.object.pose.y, s.object.pose.yaw}},
            {"twist", {s.object.twist.vx, s.object.twist.vy, s.object.twist.wz}}}},
          {"goals", goals},
          {"instructed_goal", s.instructed_goal},
          {"step", s.step},
          {"terminated", s.terminated}};
}

env::WorldState world_state_from_json(const json& j) {
  env::WorldState s;
  auto pose = [](const json& p) { return env::Pose2{p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()}; };
  auto twist = [](const json& p) {
    return env::Twist2{p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()};
  };
  const json& robots = j.at("robots");
  require(robots.size() == 2, "trial log: expected two robots");
  for (int i = 0; i < 2; ++i) {
    s.robots[i].pose = pose(robots[i].at("pose"));
    s.robots[i].command = twist(robots[i].at("command"));
    s.robots[i].velocity = twist(robots[i].at("velocity"));
  }
  s.object.pose = pose(j.at("object").at("pose"));
  s.object.twist = twist(j.at("object").at("twist"));
  for (const auto& g : j.at("goals")) s.goals.emplace_back(g.at(0).get<double>(), g.at(1).get<double>());
  s.instructed_goal = j.at("instructed_goal").get<int>();
  s.step = j.at("step").get<int>();
  s.terminated = j.at("terminated").get<bool>();
  return s;
}

namespace {

json rewards_json(const env::RewardBreakdown& r) {
  return {{"robot", {r.robot[0], r.robot[1]}},
          {"object", r.object},
          {"termination", r.termination},
          {"total", {r.total[0], r.total[1]}}};
}

json step_json(const StepRecord& r, int t) {
  json j{{"type", "step"},
         {"t", t},
         {"state", to_json(r.state)},
         {"actions", {{"leader", {r.leader_action[0], r.leader_action[1], r.leader_action[2]}},
                      {"follower", {r.follower_action[0], r.follower_action[1], r.follower_action[2]}}}},
         {"rewards", rewards_json(r.rewards)},
         {"done_reason", env::to_string(r.reason)},
         {"grounded", r.grounded}};
  j["estimates"] = {{"leader", {{"object", vec2_json(r.object_estimate[0])}, {"goal", vec2_json(r.goal_estimate[0])}}},
                    {"follower", {{"object", vec2_json(r.object_estimate[1])}, {"goal", vec2_json(r.goal_estimate[1])}}}};
  return j;
}

env::DoneReason parse_reason(const std::string& s) {
  if (s == "horizon") return env::DoneReason::horizon;
  if (s == "collision") return env::DoneReason::collision;
  return env::DoneReason::none;
}

}  // namespace

json to_json(const TrialLog& log) {
  json steps = json::array();
  for (std::size_t t = 0; t < log.steps.size(); ++t) steps.push_back(step_json(log.steps[t], static_cast<int>(t)));
  return {{"method", log.method}, {"scenario", log.scenario}, {"seed", log.seed}, {"trial", log.trial},
          {"initial", to_json(log.initial)}, {"ogd", log.ogd}, {"steps", steps}};
}

TrialLog trial_log_from_json(const json& j) {
  TrialLog log;
  log.method = j.at("method").get<std::string>();
  log.scenario = j.at("scenario").get<std::string>();
  log.seed = j.at("seed").get<std::uint64_t>();
  log.trial = j.at("trial").get<int>();
  log.initial = world_state_from_json(j.at("initial"));
  log.ogd = j.at("ogd").get<double>();
  auto vec2 = [](const json& v) { return Eigen::Vector2d(v.at(0).get<double>(), v.at(1).get<double>()); };
  for (const auto& s : j.at("steps")) {
    StepRecord r;
    r.state = world_state_from_json(s.at("state"));
    for (int k = 0; k < 3; ++k) {
      r.leader_action[k] = s.at("actions").at("leader").at(k).get<double>();
      r.follower_action[k] = s.at("actions").at("follower").at(k).get<double>();
    }
    const json& rw = s.at("rewards");
    for (int i = 0; i < 2; ++i) {
      r.rewards.robot[i] = rw.at("robot").at(i).get<double>();
      r.rewards.total[i] = rw.at("total").at(i).get<double>();
    }
    r.rewards.object = rw.at("object").get<double>();
    r.rewards.termination = rw.at("termination").get<double>();
    r.reason = parse_reason(s.at("done_reason").get<std::string>());
    r.grounded = s.at("grounded").get<bool>();
    const json& e = s.at("estimates");
    r.object_estimate = {vec2(e.at("leader").at("object")), vec2(e.at("follower").at("object"))};
    r.goal_estimate = {vec2(e.at("leader").at("goal")), vec2(e.at("follower").at("goal"))};
    log.steps.push_back(std::move(r));
  }
  return log;
}

fs::path trial_log_path(const fs::path& run_dir, int trial) {
  return run_dir / "trials" / ("trial_" + std::to_string(trial) + ".json");
}

fs::path cmd_export(const fs::path& run_dir, int trial, const fs::path& out) {
  if (!fs::is_directory(run_dir)) throw std::runtime_error("export: run directory not found: " + run_dir.string());
  const fs::path src = trial_log_path(run_dir, trial);
  if (!fs::exists(src)) throw std::runtime_error("export: trial " + std::to_string(trial) + " not found in " +
                                                 run_dir.string());
  std::ifstream in(src, std::ios::binary);
  const TrialLog log = trial_log_from_json(json::parse(in));

  const fs::path dst = out.empty() ? run_dir / ("trial_" + std::to_string(trial) + ".jsonl") : out;
  std::ofstream f(dst, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + dst.string());
  const json header{{"type", "header"},   {"method", log.method},           {"scenario", log.scenario},
                    {"seed", log.seed},   {"trial", log.trial},             {"steps", log.steps.size()},
                    {"ogd", log.ogd},     {"initial", to_json(log.initial)}};
  f << header.dump() << "\n";
  for (std::size_t t = 0; t < log.steps.size(); ++t) f << step_json(log.steps[t], static_cast<int>(t)).dump() << "\n";
  if (!f) throw std::runtime_error("write failed: " + dst.string());
  return dst;
}

}  // namespace colf::exp
