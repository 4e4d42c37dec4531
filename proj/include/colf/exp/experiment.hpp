#pragma once

#include "colf/env/transport_env.hpp"
#include "colf/grounding/grounding.hpp"
#include "colf/mappo/trainer.hpp"

#include <json.hpp>
#include <toml.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace colf::exp {

enum class Method { mappo, mappo_aac, colf, colf_no_aac, colf_no_ce };

std::string to_string(Method m);
Method parse_method(const std::string& s);
const std::vector<Method>& all_methods();

// What a method switches on; everything else in the pipeline is shared.
struct MethodWiring {
  policy::ActorKind leader_kind = policy::ActorKind::goal_conditioned;
  policy::ActorKind follower_kind = policy::ActorKind::goal_conditioned;
  int leader_input = env::kLeaderObsDim;
  int follower_input = env::kLeaderObsDim;
  bool aac = false;
  double ce_coef = 0.0;
};

MethodWiring method_wiring(Method m);
// Overwrites the method-owned fields (follower kind, AAC flag, CE weight) of `cfg`.
void apply_method(Method m, mappo::TrainConfig& cfg);

enum class Perception { vector, grounded };
std::string to_string(Perception p);
Perception parse_perception(const std::string& s);

struct RunConfig {
  Method method = Method::colf;
  env::ScenarioConfig scenario = env::ScenarioConfig::one_goal();
  mappo::TrainConfig train;
  int iterations = 2000;
  int checkpoint_every = 100;  // 0 disables periodic checkpoints
  int eval_trials = 100;
  std::vector<std::uint64_t> eval_seeds{0, 1, 2};
  std::filesystem::path out_dir = "runs/colf";
  Perception perception = Perception::vector;

  // Throws ContractViolation on inconsistent values.
  void validate() const;
};

RunConfig run_config_from_toml(const toml::table& t);
RunConfig load_run_config(const std::filesystem::path& p);
std::string run_config_to_toml(const RunConfig& c);

// ---------------------------------------------------------------------------
// Training.

// Column order of metrics.csv.
const std::vector<std::string>& metrics_columns();

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_csv;
  std::vector<mappo::IterationStats> history;
  bool aborted = false;  // non-finite loss; final_checkpoint then holds the last good state
};

// Called after every iteration; return false to stop early.
using IterationHook = std::function<bool(const mappo::IterationStats&)>;

/**
 * Runs the CTDE loop for `config.iterations` iterations. Writes config.toml,
 * metrics.csv, checkpoints/iter_<n>.ckpt every `checkpoint_every` iterations
 * and final.ckpt. A non-finite loss stops training and writes the restored
 * state as last_good.ckpt.
 */
TrainResult cmd_train(const RunConfig& config, const IterationHook& hook = {});

// ---------------------------------------------------------------------------
// Evaluation.

struct EvalUnit {
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint;
};

struct EvalOptions {
  env::ScenarioConfig scenario = env::ScenarioConfig::one_goal();
  bool cylinder_goals = true;  // evaluation landmarks are solid cylinders
  int trials = 100;
  Perception perception = Perception::vector;
  grounding::MisalignmentModel follower_misalignment;
  grounding::CameraModel camera = grounding::CameraModel::sim();
  grounding::RenderOptions render;
  policy::ActMode act_mode = policy::ActMode::mean;
  bool initial_scan = true;  // grounded mode: look around once before the first step
  std::optional<int> max_steps;   // defaults to the scenario horizon
  int threads = 0;                // 0 = hardware concurrency
  std::filesystem::path log_dir;  // per-trial logs when non-empty
};

inline constexpr double kDeltaStrict = 0.65;
inline constexpr double kDeltaLoose = 0.75;
// Real-robot style success: within this margin of the closest reachable OGD.
inline constexpr double kRealMargin = 0.20;

// Smallest OGD the scene geometry allows: object face tangent to a cylinder goal, 0 for point goals.
double minimum_ogd(const env::ScenarioConfig& c);

struct TrialResult {
  double ogd = 0;
  int steps = 0;
  env::DoneReason reason = env::DoneReason::none;
  int follower_landmark = 0;  // goal the follower grounded (grounded mode)
};

struct SeedReport {
  std::uint64_t seed = 0;
  int trials = 0;
  double sr_strict = 0;  // SR at 0.65 m
  double sr_loose = 0;   // SR at 0.75 m
  double sr_real = 0;    // SR at minimum_ogd + 0.20 m
  double mean_ogd = 0;
  std::vector<TrialResult> trial_results;
};

struct Aggregate {
  double mean = 0;
  double std = 0;  // population std over seeds
};

struct EvalReport {
  std::vector<SeedReport> seeds;
  int trials_per_seed = 0;
  Aggregate sr_strict, sr_loose, sr_real, mean_ogd;
  bool defined() const { return trials_per_seed > 0 && !seeds.empty(); }
};

inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

// Mean and population std; NaN sentinels when `values` is empty.
Aggregate aggregate(const std::vector<double>& values);
// Per-seed SR/OGD from trial results. Zero trials gives NaN sentinels.
SeedReport summarize_seed(std::uint64_t seed, std::vector<TrialResult> trials, double min_ogd);
EvalReport assemble_report(std::vector<SeedReport> seeds);

EvalReport cmd_eval(const std::vector<EvalUnit>& units, const EvalOptions& opt);
nlohmann::json to_json(const EvalReport& r);

// ---------------------------------------------------------------------------
// Grounded observations.

/**
 * Agent view built from robot-frame estimates only. The true object and goal
 * positions in `s` are never read; only the robots' own states are.
 */
env::AgentView grounded_view(const env::WorldState& s, int agent, const Eigen::Vector2d& object_rel,
                             const Eigen::Vector2d& goal_rel);

// One robot's perception stack: renderer, misalignment, per-label hold.
class GroundedObserver {
 public:
  GroundedObserver(int agent, grounding::MisalignmentModel mis, grounding::CameraModel cam,
                   grounding::RenderOptions render, bool initial_scan = true);
  // Draws the landmark this robot grounds for the coming trial and clears the holds.
  // With initial_scan the robot pans its camera through a full turn in place and
  // seeds each hold with the first valid estimate, since spawn yaws may face away.
  void begin_trial(const env::WorldState& s, const env::ScenarioConfig& c, Rng& rng);
  // Renders the robot's view and updates both estimates.
  env::AgentView observe(const env::WorldState& s, const env::ScenarioConfig& c, Rng& rng);

  int landmark() const { return landmark_; }
  const grounding::PlanarEstimate& last_object() const { return last_object_; }
  const grounding::PlanarEstimate& last_goal() const { return last_goal_; }
  Eigen::Vector2d object_rel() const { return object_rel_; }
  Eigen::Vector2d goal_rel() const { return goal_rel_; }

 private:
  int agent_;
  grounding::MisalignmentModel mis_;
  grounding::CameraModel cam_;
  grounding::RenderOptions render_;
  bool initial_scan_;
  int landmark_ = 0;
  grounding::EstimateHold object_hold_, goal_hold_;
  grounding::PlanarEstimate last_object_, last_goal_;
  Eigen::Vector2d object_rel_{0, 0}, goal_rel_{0, 0};
};

// ---------------------------------------------------------------------------
// Trial logs and export.

struct StepRecord {
  env::WorldState state;  // post-step
  env::Action leader_action, follower_action;
  env::RewardBreakdown rewards;
  env::DoneReason reason = env::DoneReason::none;
  bool grounded = false;
  std::array<Eigen::Vector2d, 2> object_estimate{};  // robot-frame, as fed to each policy
  std::array<Eigen::Vector2d, 2> goal_estimate{};
};

struct TrialLog {
  std::string method;
  std::string scenario;
  std::uint64_t seed = 0;
  int trial = 0;
  env::WorldState initial;
  std::vector<StepRecord> steps;
  double ogd = 0;
};

nlohmann::json to_json(const env::WorldState& s);
env::WorldState world_state_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrialLog& log);
TrialLog trial_log_from_json(const nlohmann::json& j);

std::filesystem::path trial_log_path(const std::filesystem::path& run_dir, int trial);

/**
 * Converts a stored trial log under `run_dir` into line-delimited JSON: a
 * header record, then one record per simulated step. Throws
 * std::runtime_error when the run or trial does not exist.
 */
std::filesystem::path cmd_export(const std::filesystem::path& run_dir, int trial,
                                 const std::filesystem::path& out = {});

// ---------------------------------------------------------------------------

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };
// From COLF_LOG (error|warn|info|debug); info when unset or unrecognised.
LogLevel log_level();
void log(LogLevel level, const std::string& msg);

}  // namespace colf::exp
