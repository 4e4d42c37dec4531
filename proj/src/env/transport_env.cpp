#include "colf/env/transport_env.hpp"

#include <algorithm>
#include <cmath>

namespace colf::env {

void ScenarioConfig::validate() const {
  require(object_half_extents.x() > 0 && object_half_extents.y() > 0, "scenario: object half extents must be > 0");
  require(object_mass > 0, "scenario: object mass must be > 0");
  require(num_goals() == 1 || num_goals() == 2, "scenario: goal count must be 1 or 2");
  require(instructed_goal >= 0 && instructed_goal < num_goals(), "scenario: instructed goal out of range");
  for (const SpawnBox* b : {&leader_box, &follower_box})
    require(b->x_max > b->x_min && b->y_max > b->y_min, "scenario: degenerate spawn box");
  if (goal_box)
    require(goal_box->x_max >= goal_box->x_min && goal_box->y_max >= goal_box->y_min, "scenario: inverted goal box");
  require(horizon >= 1, "scenario: horizon must be >= 1");
  require(dt > 0 && substeps >= 1, "scenario: dt must be > 0 and substeps >= 1");
  require(robot_radius > 0 && goal_radius > 0, "scenario: radii must be > 0");
  require(v_max > 0 && w_max > 0, "scenario: action bounds must be > 0");
  require(push_share >= 0 && push_share <= 1, "scenario: push_share must be in [0, 1]");
}

double ScenarioConfig::effective_inertia() const {
  if (rotational_inertia > 0) return rotational_inertia;
  const double w = 2 * object_half_extents.x(), h = 2 * object_half_extents.y();
  return (w * w + h * h) / 12.0;
}

ScenarioConfig ScenarioConfig::one_goal() { return ScenarioConfig{}; }

ScenarioConfig ScenarioConfig::two_goal() {
  ScenarioConfig c;
  c.name = "two_goal";
  c.goals = {Vec2(0.5, -1.5), Vec2(0.5, 1.5)};
  c.instructed_goal = 0;
  return c;
}

ScenarioConfig ScenarioConfig::shrunk(double factor) const {
  require(factor > 0, "shrunk: factor must be > 0");
  ScenarioConfig c = *this;
  for (SpawnBox* b : {&c.leader_box, &c.follower_box}) {
    b->x_min *= factor;
    b->x_max *= factor;
    b->y_min *= factor;
    b->y_max *= factor;
  }
  return c;
}

ScenarioConfig ScenarioConfig::with_cylinder_goals() const {
  ScenarioConfig c = *this;
  c.goal_mode = GoalMode::cylinder;
  return c;
}

std::string to_string(DoneReason r) {
  switch (r) {
    case DoneReason::none: return "none";
    case DoneReason::horizon: return "horizon";
    case DoneReason::collision: return "collision";
  }
  return "unknown";
}

Vec<double> goal_conditioned_vector(const AgentView& v) {
  Vec<double> o(kLeaderObsDim);
  o << v.object, v.goal, v.local;
  return o;
}

Vec<double> goal_blind_vector(const AgentView& v) {
  Vec<double> o(kFollowerObsDim);
  o << v.object, v.local;
  return o;
}

AgentView observe_agent(const WorldState& s, int agent, const Vec2& object_world, const Vec2& goal_world) {
  require(agent == kLeader || agent == kFollower, "observe_agent: agent index must be 0 or 1");
  const RobotState& self = s.robots[agent];
  const RobotState& other = s.robots[1 - agent];
  AgentView v;
  v.object = to_frame(self.pose, object_world);
  v.goal = to_frame(self.pose, goal_world);
  const Vec2 rel = to_frame(self.pose, other.pose.position());
  v.local << self.velocity.vx, self.velocity.vy, 0.0,  // base-frame linear velocity
      0.0, 0.0, -1.0,                                   // gravity in the robot frame
      rel.x(), rel.y(), wrap_angle(other.pose.yaw - self.pose.yaw);
  return v;
}

AgentView observe_agent(const WorldState& s, int agent) {
  return observe_agent(s, agent, s.object.pose.position(), s.goal());
}

ObservationPair observe(const WorldState& s) {
  return {goal_conditioned_vector(observe_agent(s, kLeader)), goal_blind_vector(observe_agent(s, kFollower))};
}

namespace {

bool overlapping_spawn(const WorldState& s, const ScenarioConfig& c) {
  const double r = c.robot_radius;
  if ((s.robots[0].pose.position() - s.robots[1].pose.position()).norm() < 2 * r) return true;
  for (const auto& robot : s.robots) {
    if (disc_rect_contact(robot.pose.position(), r, s.object.pose, c.object_half_extents).depth > 0) return true;
    if (c.goal_mode == GoalMode::cylinder)
      for (const Vec2& g : s.goals)
        if ((robot.pose.position() - g).norm() < r + c.goal_radius) return true;
  }
  return false;
}

Pose2 sample_pose(const SpawnBox& b, Rng& rng) {
  const double x = uniform(rng, b.x_min, b.x_max);
  const double y = uniform(rng, b.y_min, b.y_max);
  return {x, y, b.yaw};
}

Vec2 body_to_world_velocity(const Pose2& p, const Twist2& t) { return rotate(Vec2(t.vx, t.vy), p.yaw); }

// Moves the object (only) out of every cylinder goal.
void resolve_object_vs_goals(WorldState& s, const ScenarioConfig& c) {
  if (c.goal_mode != GoalMode::cylinder) return;
  for (const Vec2& g : s.goals) {
    const auto hit = disc_rect_contact(g, c.goal_radius, s.object.pose, c.object_half_extents);
    if (hit.depth > 0) {
      s.object.pose.x -= hit.depth * hit.normal.x();
      s.object.pose.y -= hit.depth * hit.normal.y();
    }
  }
}

void resolve_robots_vs_goals(WorldState& s, const ScenarioConfig& c) {
  if (c.goal_mode != GoalMode::cylinder) return;
  for (auto& robot : s.robots) {
    for (const Vec2& g : s.goals) {
      const Vec2 d = robot.pose.position() - g;
      const double dist = d.norm();
      const double depth = c.robot_radius + c.goal_radius - dist;
      if (depth > 0) {
        const Vec2 n = dist > 0 ? Vec2(d / dist) : Vec2(1, 0);
        robot.pose.x += depth * n.x();
        robot.pose.y += depth * n.y();
      }
    }
  }
}

// Moves the robots (only) out of the object.
void resolve_robots_vs_object(WorldState& s, const ScenarioConfig& c) {
  for (auto& robot : s.robots) {
    const auto hit = disc_rect_contact(robot.pose.position(), c.robot_radius, s.object.pose, c.object_half_extents);
    if (hit.depth > 0) {
      robot.pose.x += hit.depth * hit.normal.x();
      robot.pose.y += hit.depth * hit.normal.y();
    }
  }
}

// Quasi-static push: each penetrating robot hands `push_share` of its
// correction to the object at the contact point (translation plus a
// lever-arm rotation) and absorbs the rest itself.
void push_object(WorldState& s, const ScenarioConfig& c) {
  const double inertia = c.effective_inertia();
  for (auto& robot : s.robots) {
    const auto hit = disc_rect_contact(robot.pose.position(), c.robot_radius, s.object.pose, c.object_half_extents);
    if (hit.depth <= 0) continue;
    const Vec2 object_shift = -c.push_share * hit.depth * hit.normal;
    const Vec2 lever = hit.contact - s.object.pose.position();
    s.object.pose.x += object_shift.x();
    s.object.pose.y += object_shift.y();
    s.object.pose.yaw = wrap_angle(s.object.pose.yaw + cross2(lever, object_shift) / inertia);
    robot.pose.x += (1 - c.push_share) * hit.depth * hit.normal.x();
    robot.pose.y += (1 - c.push_share) * hit.depth * hit.normal.y();
  }
  resolve_robots_vs_goals(s, c);
  resolve_object_vs_goals(s, c);
  resolve_robots_vs_object(s, c);
}

Action clip_action(const Action& a, const ScenarioConfig& c) {
  return {std::clamp(a[0], -c.v_max, c.v_max), std::clamp(a[1], -c.v_max, c.v_max),
          std::clamp(a[2], -c.w_max, c.w_max)};
}

}  // namespace

ResetResult reset(const ScenarioConfig& config, Rng& rng) {
  config.validate();
  WorldState s;
  s.goals = config.goals;
  s.instructed_goal = config.instructed_goal;
  s.object.pose = config.object_init;
  if (config.goal_box) {
    const SpawnBox& g = *config.goal_box;
    s.goals[s.instructed_goal] = Vec2(uniform(rng, g.x_min, g.x_max), uniform(rng, g.y_min, g.y_max));
  }
  for (int attempt = 0; attempt < 100; ++attempt) {
    s.robots[kLeader].pose = sample_pose(config.leader_box, rng);
    s.robots[kFollower].pose = sample_pose(config.follower_box, rng);
    if (!overlapping_spawn(s, config)) return {s, observe(s)};
  }
  throw std::runtime_error("reset: could not sample a non-overlapping initial state in 100 attempts");
}

StepOutcome step(const WorldState& state, const Action& leader_action, const Action& follower_action,
                 const ScenarioConfig& config) {
  require(!state.terminated, "step: episode already terminated");
  require(leader_action.allFinite() && follower_action.allFinite(), "step: non-finite action");

  WorldState s = state;
  const std::array<Action, 2> cmd{clip_action(leader_action, config), clip_action(follower_action, config)};
  const std::array<Pose2, 2> robot_before{s.robots[0].pose, s.robots[1].pose};
  const Pose2 object_before = s.object.pose;

  const double h = config.dt / config.substeps;
  for (int k = 0; k < config.substeps; ++k) {
    for (int i = 0; i < 2; ++i) {
      Pose2& p = s.robots[i].pose;
      const Vec2 v = body_to_world_velocity(p, {cmd[i][0], cmd[i][1], 0});
      p.x += v.x() * h;
      p.y += v.y() * h;
      p.yaw = wrap_angle(p.yaw + cmd[i][2] * h);
    }
    push_object(s, config);
  }

  for (int i = 0; i < 2; ++i) {
    RobotState& r = s.robots[i];
    r.command = {cmd[i][0], cmd[i][1], cmd[i][2]};
    const Vec2 world_v = (r.pose.position() - robot_before[i].position()) / config.dt;
    const Vec2 base_v = rotate(world_v, -r.pose.yaw);
    r.velocity = {base_v.x(), base_v.y(), wrap_angle(r.pose.yaw - robot_before[i].yaw) / config.dt};
  }
  s.object.twist = {(s.object.pose.x - object_before.x) / config.dt, (s.object.pose.y - object_before.y) / config.dt,
                    wrap_angle(s.object.pose.yaw - object_before.yaw) / config.dt};
  s.step += 1;

  StepOutcome out;
  std::tie(out.done, out.reason) = check_termination(s, config);
  s.terminated = out.done;
  out.rewards = compute_rewards(s, config, out.reason);
  out.observations = observe(s);
  out.state = std::move(s);
  return out;
}

RewardBreakdown compute_rewards(const WorldState& s, const ScenarioConfig& config, DoneReason reason) {
  const RewardWeights& w = config.rewards;
  RewardBreakdown r;
  const Vec2 obj = s.object.pose.position();
  for (int i = 0; i < 2; ++i) {
    const Pose2& p = s.robots[i].pose;
    const Vec2 d = obj - p.position();
    const double dist = d.norm();
    // Angle between the heading and the robot->object displacement, 0 when coincident.
    const double theta = dist > 0 ? std::atan2(cross2(p.heading(), d), p.heading().dot(d)) : 0.0;
    const double weight = i == kLeader ? w.leader : w.follower;
    r.robot[i] = weight * std::exp(-dist) * (std::cos(theta) + w.heading_offset);
  }
  r.object = w.object * std::exp(-(obj - s.goal()).norm());
  r.termination = reason == DoneReason::collision ? w.termination : 0.0;
  for (int i = 0; i < 2; ++i) r.total[i] = r.robot[i] + r.object + r.termination;
  return r;
}

std::pair<bool, DoneReason> check_termination(const WorldState& s, const ScenarioConfig& config) {
  const double d = (s.robots[0].pose.position() - s.robots[1].pose.position()).norm();
  if (d < 2 * config.robot_radius) return {true, DoneReason::collision};
  if (s.step >= config.horizon) return {true, DoneReason::horizon};
  return {false, DoneReason::none};
}

TrialMetrics metrics(const WorldState& s, const ScenarioConfig&) {
  return {(s.object.pose.position() - s.goal()).norm()};
}

double robot_object_penetration(const WorldState& s, const ScenarioConfig& c) {
  double worst = 0;
  for (const auto& robot : s.robots)
    worst = std::max(worst,
                     disc_rect_contact(robot.pose.position(), c.robot_radius, s.object.pose, c.object_half_extents).depth);
  return worst;
}

double object_goal_penetration(const WorldState& s, const ScenarioConfig& c) {
  if (c.goal_mode != GoalMode::cylinder) return 0;
  double worst = 0;
  for (const Vec2& g : s.goals)
    worst = std::max(worst, disc_rect_contact(g, c.goal_radius, s.object.pose, c.object_half_extents).depth);
  return worst;
}

}  // namespace colf::env
