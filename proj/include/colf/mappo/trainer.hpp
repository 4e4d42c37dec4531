#pragma once

#include "colf/mappo/rollout.hpp"
#include "colf/nn/checkpoint.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace colf::mappo {

struct TrainConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  int epochs = 5;
  int minibatches = 4;
  int rollout_length = 64;
  int num_envs = 64;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double entropy_coef = 0.003;
  double ce_coef = 0.0;
  bool aac = false;
  double max_grad_norm = 1.0;
  bool value_norm = true;
  policy::ActorKind follower_kind = policy::ActorKind::goal_conditioned;
  std::vector<int> hidden_dims{256, 256, 128};
  double initial_log_std = -1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Averages over every (epoch, minibatch) of one update.
struct LossReport {
  double leader_total = 0, leader_surrogate = 0, leader_entropy = 0;
  double follower_total = 0, follower_surrogate = 0, follower_entropy = 0;
  double ce = 0;  // NaN when the follower has no auxiliary head
  double critic = 0;
  double leader_clip_fraction = 0, follower_clip_fraction = 0;
  double mi_diagnostic = 0;  // leader entropy - CE
  int excluded = 0;
  int minibatch_updates = 0;
};

struct Learners {
  ActorR leader;
  ActorR follower;
  CriticR critic;
  ValueNorm value_norm;
};

Learners make_learners(const TrainConfig& cfg);

/**
 * Multi-epoch minibatched PPO on a finalized batch. Both actors share the
 * normalized advantages; the critic regresses the (normalized) returns.
 *
 * Throws NonFiniteError if any loss or gradient is non-finite; the learners
 * are then restored to their state on entry.
 */
LossReport ppo_update(const RolloutBatch& batch, Learners& learners, const TrainConfig& cfg, Rng& rng);

struct IterationStats {
  int iteration = 0;
  double object_reward_mean = 0;  // mean per-step r^obj over the batch
  double leader_return = 0;       // mean over episodes finished in the batch (NaN if none)
  double follower_return = 0;
  int episodes = 0;
  LossReport losses;
};

/**
 * The training loop: collect, finalize, update. Every random draw derives
 * from cfg.seed.
 */
class Trainer {
 public:
  Trainer(TrainConfig cfg, env::ScenarioConfig scenario);

  IterationStats iterate();
  int iteration() const { return iteration_; }
  const TrainConfig& config() const { return cfg_; }
  const env::ScenarioConfig& scenario() const { return envs_.config(); }
  const Learners& learners() const { return learners_; }
  Learners& learners() { return learners_; }

  nn::Checkpoint checkpoint(const nlohmann::json& metadata) const;

 private:
  TrainConfig cfg_;
  VecEnv envs_;
  Learners learners_;
  Rng rollout_rng_;
  Rng update_rng_;
  int iteration_ = 0;
};

// Actors rebuilt from a checkpoint written by Trainer::checkpoint.
struct PolicyPair {
  ActorR leader;
  ActorR follower;
};
PolicyPair policies_from_checkpoint(const nn::Checkpoint& ckpt);

}  // namespace colf::mappo
