#include "colf/env/scenario_io.hpp"

#include <filesystem>
#include <sstream>

namespace colf::env {

namespace {

double num(const toml::node_view<const toml::node>& v, double fallback) { return v.value<double>().value_or(fallback); }

Vec2 read_vec2(const toml::node_view<const toml::node>& v, const Vec2& fallback) {
  const toml::array* arr = v.as_array();
  if (arr == nullptr) return fallback;
  require(arr->size() == 2, "scenario: expected a 2-element array");
  return {arr->get(0)->value<double>().value(), arr->get(1)->value<double>().value()};
}

SpawnBox read_box(const toml::node_view<const toml::node>& v, SpawnBox box) {
  if (!v.is_table()) return box;
  const Vec2 xs = read_vec2(v["x"], {box.x_min, box.x_max});
  const Vec2 ys = read_vec2(v["y"], {box.y_min, box.y_max});
  box.x_min = xs.x();
  box.x_max = xs.y();
  box.y_min = ys.x();
  box.y_max = ys.y();
  box.yaw = num(v["yaw"], box.yaw);
  return box;
}

}  // namespace

bool is_scenario_preset(const std::string& name) {
  return name == "one_goal" || name == "two_goal" || name == "one_goal_shrunk" || name == "two_goal_shrunk" ||
         name == "train_shrunk";
}

ScenarioConfig scenario_preset(const std::string& name) {
  if (name == "one_goal") return ScenarioConfig::one_goal();
  if (name == "two_goal") return ScenarioConfig::two_goal();
  if (name == "one_goal_shrunk") {
    auto c = ScenarioConfig::one_goal().shrunk(0.5);
    c.name = name;
    return c;
  }
  if (name == "two_goal_shrunk") {
    auto c = ScenarioConfig::two_goal().shrunk(0.5);
    c.name = name;
    return c;
  }
  if (name == "train_shrunk") {
    auto c = ScenarioConfig::one_goal().shrunk(0.5);
    c.name = name;
    c.goal_box = SpawnBox{0.5, 0.5, -1.5, 1.5, 0.0};
    return c;
  }
  throw std::invalid_argument("unknown scenario preset '" + name + "'");
}

ScenarioConfig scenario_from_toml(const toml::table& t) {
  const toml::node_view<const toml::node> v{t};
  ScenarioConfig c = scenario_preset(v["preset"].value_or<std::string>("one_goal"));
  if (auto f = v["shrink"].value<double>()) c = c.shrunk(*f);
  c.name = v["name"].value_or(c.name);
  c.object_half_extents = read_vec2(v["object_half_extents"], c.object_half_extents);
  c.object_mass = num(v["object_mass"], c.object_mass);
  if (const toml::array* init = v["object_init"].as_array()) {
    require(init->size() == 3, "scenario: object_init must be [x, y, yaw]");
    c.object_init = {init->get(0)->value<double>().value(), init->get(1)->value<double>().value(),
                     init->get(2)->value<double>().value()};
  }
  if (auto mode = v["goal_mode"].value<std::string>()) {
    require(*mode == "point" || *mode == "cylinder", "scenario: goal_mode must be point or cylinder");
    c.goal_mode = *mode == "point" ? GoalMode::point : GoalMode::cylinder;
  }
  c.goal_radius = num(v["goal_radius"], c.goal_radius);
  if (const toml::array* goals = v["goals"].as_array()) {
    c.goals.clear();
    for (const auto& g : *goals) c.goals.push_back(read_vec2(toml::node_view<const toml::node>{g}, Vec2::Zero()));
  }
  c.instructed_goal = v["instructed_goal"].value_or(c.instructed_goal);
  c.leader_box = read_box(v["leader_box"], c.leader_box);
  c.follower_box = read_box(v["follower_box"], c.follower_box);
  if (v["goal_box"].is_table()) c.goal_box = read_box(v["goal_box"], c.goal_box.value_or(SpawnBox{}));
  c.horizon = v["horizon"].value_or(c.horizon);
  c.dt = num(v["dt"], c.dt);
  c.substeps = v["substeps"].value_or(c.substeps);
  c.robot_radius = num(v["robot_radius"], c.robot_radius);
  c.v_max = num(v["v_max"], c.v_max);
  c.w_max = num(v["w_max"], c.w_max);
  c.push_share = num(v["push_share"], c.push_share);
  c.rotational_inertia = num(v["rotational_inertia"], c.rotational_inertia);
  c.seed = v["seed"].value_or<std::int64_t>(static_cast<std::int64_t>(c.seed));
  if (const auto r = v["rewards"]; r.is_table()) {
    c.rewards.leader = num(r["leader"], c.rewards.leader);
    c.rewards.follower = num(r["follower"], c.rewards.follower);
    c.rewards.heading_offset = num(r["heading_offset"], c.rewards.heading_offset);
    c.rewards.object = num(r["object"], c.rewards.object);
    c.rewards.termination = num(r["termination"], c.rewards.termination);
  }
  c.validate();
  return c;
}

std::string scenario_to_toml(const ScenarioConfig& c) {
  auto vec2 = [](const Vec2& p) { return toml::array{p.x(), p.y()}; };
  auto box = [](const SpawnBox& b) {
    return toml::table{{"x", toml::array{b.x_min, b.x_max}}, {"y", toml::array{b.y_min, b.y_max}}, {"yaw", b.yaw}};
  };
  toml::array goals;
  for (const Vec2& g : c.goals) goals.push_back(vec2(g));
  toml::table t{
      {"name", c.name},
      {"object_half_extents", vec2(c.object_half_extents)},
      {"object_mass", c.object_mass},
      {"object_init", toml::array{c.object_init.x, c.object_init.y, c.object_init.yaw}},
      {"goal_mode", c.goal_mode == GoalMode::point ? "point" : "cylinder"},
      {"goal_radius", c.goal_radius},
      {"goals", goals},
      {"instructed_goal", c.instructed_goal},
      {"leader_box", box(c.leader_box)},
      {"follower_box", box(c.follower_box)},
      {"horizon", c.horizon},
      {"dt", c.dt},
      {"substeps", c.substeps},
      {"robot_radius", c.robot_radius},
      {"v_max", c.v_max},
      {"w_max", c.w_max},
      {"push_share", c.push_share},
      {"rotational_inertia", c.rotational_inertia},
      {"seed", static_cast<std::int64_t>(c.seed)},
      {"rewards", toml::table{{"leader", c.rewards.leader},
                              {"follower", c.rewards.follower},
                              {"heading_offset", c.rewards.heading_offset},
                              {"object", c.rewards.object},
                              {"termination", c.rewards.termination}}},
  };
  if (c.goal_box) t.insert("goal_box", box(*c.goal_box));
  std::ostringstream os;
  os << toml::table{{"scenario", t}};
  return os.str();
}

ScenarioConfig load_scenario(const std::string& name_or_path) {
  if (is_scenario_preset(name_or_path)) return scenario_preset(name_or_path);
  if (!std::filesystem::exists(name_or_path))
    throw std::invalid_argument("scenario '" + name_or_path + "' is neither a preset nor an existing file");
  const toml::table doc = toml::parse_file(name_or_path);
  const toml::table* t = doc["scenario"].as_table();
  if (t == nullptr) throw std::invalid_argument(name_or_path + ": missing [scenario] table");
  return scenario_from_toml(*t);
}

}  // namespace colf::env
