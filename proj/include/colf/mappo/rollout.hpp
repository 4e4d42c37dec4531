#pragma once

#include "colf/env/transport_env.hpp"
#include "colf/mappo/critic.hpp"
#include "colf/policy/actor.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace colf::mappo {

// Training precision of every network.
using Real = float;
using ActorR = policy::Actor<Real>;
using CriticR = Critic<Real>;

// Observation fed to an actor of the given kind for `agent` (13 entries for
// goal-conditioned actors, 11 for the goal-blind follower).
Vec<double> agent_observation(const env::WorldState& s, int agent, policy::ActorKind kind);

struct EpisodeRecord {
  std::array<double, 2> agent_return{0, 0};
  double object_reward_mean = 0;
  double final_ogd = 0;
  int length = 0;
  env::DoneReason reason = env::DoneReason::none;
};

/**
 * A batch of independent transport environments with automatic reset.
 * Environment i draws its resets from its own stream derived from the seed.
 */
class VecEnv {
 public:
  VecEnv(env::ScenarioConfig config, int num_envs, std::uint64_t seed);

  int size() const { return static_cast<int>(states_.size()); }
  const env::ScenarioConfig& config() const { return config_; }
  const env::WorldState& state(int i) const { return states_.at(i); }

  struct Transition {
    env::StepOutcome outcome;   // outcome.state is the terminal state when done
    std::optional<EpisodeRecord> finished;
  };
  // Steps environment i; on done the environment is reset before returning.
  Transition step(int i, const env::Action& leader, const env::Action& follower);

 private:
  env::ScenarioConfig config_;
  std::vector<Rng> rngs_;
  std::vector<env::WorldState> states_;
  std::vector<EpisodeRecord> running_;
};

/**
 * Flattened rollout, index k = t * num_envs + e.
 *
 * `rewards` is the mean of the two agents' rewards (the shared critic target);
 * on a horizon cut it additionally carries gamma * V(s_final).
 */
struct RolloutBatch {
  int length = 0;
  int num_envs = 0;
  Mat<Real> leader_obs, follower_obs, global;  // columns = samples
  Mat<Real> leader_actions, follower_actions;
  std::vector<double> leader_log_probs, follower_log_probs;
  std::vector<double> rewards;
  std::array<std::vector<double>, 2> agent_rewards;
  std::vector<double> object_rewards;
  std::vector<double> values;       // denormalized V(s_t)
  std::vector<double> values_norm;  // raw critic output at collection time
  std::vector<double> dones;
  std::vector<double> bootstrap_values;  // per env, V(s_T) (0 if the last step ended an episode)
  std::vector<double> advantages, returns;
  std::vector<EpisodeRecord> episodes;

  int size() const { return length * num_envs; }
};

struct RolloutPolicies {
  const ActorR* leader = nullptr;
  const ActorR* follower = nullptr;
  const CriticR* critic = nullptr;
  const ValueNorm* value_norm = nullptr;
  bool aac = false;
  policy::ActMode mode = policy::ActMode::sample;
  double gamma = 0.99;
};

// Steps every environment `length` times with decentralized actions.
RolloutBatch collect_rollouts(const RolloutPolicies& p, VecEnv& envs, int length, Rng& rng);

// Per-environment GAE over the batch; fills advantages and returns.
void finalize_batch(RolloutBatch& batch, double gamma, double gae_lambda);

}  // namespace colf::mappo
