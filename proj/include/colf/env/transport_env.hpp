#pragma once

#include "colf/env/geometry.hpp"
#include "colf/nn/common.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace colf::env {

inline constexpr int kLeader = 0;
inline constexpr int kFollower = 1;
inline constexpr int kLeaderObsDim = 13;
inline constexpr int kFollowerObsDim = 11;
inline constexpr int kLocalObsDim = 9;
inline constexpr int kActionDim = 3;

using Action = Eigen::Vector3d;  // (vx, vy, wz) in the robot base frame

struct Twist2 {
  double vx = 0;
  double vy = 0;
  double wz = 0;
};

enum class GoalMode { point, cylinder };

struct SpawnBox {
  double x_min = 0, x_max = 0;
  double y_min = 0, y_max = 0;
  double yaw = 0;
};

struct RewardWeights {
  double leader = 2.5;
  double follower = 3.0;
  double heading_offset = 0.2;
  double object = 6.0;
  double termination = -2.0;
};

struct ScenarioConfig {
  std::string name = "one_goal";
  Vec2 object_half_extents{0.295, 0.295};
  double object_mass = 11.0;
  Pose2 object_init{};
  GoalMode goal_mode = GoalMode::point;
  double goal_radius = 0.3;
  std::vector<Vec2> goals{Vec2(0.5, 0.0)};
  int instructed_goal = 0;
  // When set, every reset draws the instructed goal uniformly from this box (yaw unused).
  std::optional<SpawnBox> goal_box;
  SpawnBox leader_box{-3.0, -2.0, -2.5, -1.0, -1.5};
  SpawnBox follower_box{-3.0, -2.0, 1.0, 2.5, 1.5};
  int horizon = 300;
  double dt = 0.1;
  int substeps = 4;
  double robot_radius = 0.35;
  double v_max = 1.0;
  double w_max = 1.0;
  // Share of a contact correction taken by the object; the robot takes the rest.
  double push_share = 0.5;
  // Effective rotational inertia per unit mass (m^2); <= 0 selects (w^2+h^2)/12.
  double rotational_inertia = 0.0;
  RewardWeights rewards;
  std::uint64_t seed = 0;

  void validate() const;
  int num_goals() const { return static_cast<int>(goals.size()); }
  const Vec2& instructed_goal_position() const { return goals.at(instructed_goal); }
  double effective_inertia() const;

  static ScenarioConfig one_goal();
  static ScenarioConfig two_goal();
  // Spawn boxes scaled towards the origin by `factor` (0.5 puts robots ~1.5 m from the object).
  ScenarioConfig shrunk(double factor) const;
  // Same scenario with the goals as static cylinders.
  ScenarioConfig with_cylinder_goals() const;
};

struct RobotState {
  Pose2 pose;
  Twist2 command;   // clipped command applied during the last step
  Twist2 velocity;  // realised base-frame velocity over the last step
};

struct ObjectState {
  Pose2 pose;
  Twist2 twist;  // world-frame planar velocity over the last step
};

struct WorldState {
  std::array<RobotState, 2> robots{};
  ObjectState object;
  std::vector<Vec2> goals;
  int instructed_goal = 0;
  int step = 0;
  bool terminated = false;

  const Vec2& goal() const { return goals.at(instructed_goal); }
};

/**
 * Per-agent view of the world, split into the blocks the policies consume.
 * Relative quantities are expressed in the observing robot's base frame.
 */
struct AgentView {
  Eigen::Vector2d object{0, 0};
  Eigen::Vector2d goal{0, 0};
  Eigen::Matrix<double, kLocalObsDim, 1> local = Eigen::Matrix<double, kLocalObsDim, 1>::Zero();
};

// [object(2), goal(2), local(9)]
Vec<double> goal_conditioned_vector(const AgentView& v);
// [object(2), local(9)]
Vec<double> goal_blind_vector(const AgentView& v);

struct ObservationPair {
  Vec<double> leader;    // 13
  Vec<double> follower;  // 11
};

struct RewardBreakdown {
  std::array<double, 2> robot{0, 0};
  double object = 0;
  double termination = 0;
  std::array<double, 2> total{0, 0};
};

enum class DoneReason { none, horizon, collision };
std::string to_string(DoneReason r);

struct StepOutcome {
  WorldState state;
  ObservationPair observations;
  RewardBreakdown rewards;
  bool done = false;
  DoneReason reason = DoneReason::none;
};

// `goal_world` is the goal the agent is conditioned on (its own estimate in grounded mode).
AgentView observe_agent(const WorldState& s, int agent, const Vec2& object_world, const Vec2& goal_world);
AgentView observe_agent(const WorldState& s, int agent);
ObservationPair observe(const WorldState& s);

struct ResetResult {
  WorldState state;
  ObservationPair observations;
};

ResetResult reset(const ScenarioConfig& config, Rng& rng);
StepOutcome step(const WorldState& state, const Action& leader_action, const Action& follower_action,
                 const ScenarioConfig& config);
RewardBreakdown compute_rewards(const WorldState& s, const ScenarioConfig& config, DoneReason reason = DoneReason::none);
std::pair<bool, DoneReason> check_termination(const WorldState& s, const ScenarioConfig& config);

struct TrialMetrics {
  double ogd = 0;
  bool success(double delta) const { return ogd < delta; }
};
TrialMetrics metrics(const WorldState& s, const ScenarioConfig& config);

// Deepest robot-object and object-cylinder overlap in `s` (0 when separated).
double robot_object_penetration(const WorldState& s, const ScenarioConfig& config);
double object_goal_penetration(const WorldState& s, const ScenarioConfig& config);

}  // namespace colf::env
