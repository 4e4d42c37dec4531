#pragma once

#include "colf/env/transport_env.hpp"
#include "colf/nn/adam.hpp"
#include "colf/nn/gaussian.hpp"
#include "colf/nn/mlp.hpp"

#include <optional>
#include <string>
#include <vector>

namespace colf::policy {

using nn::DiagGaussian;
using nn::LogStdBounds;
using nn::MlpCache;
using nn::MlpSpec;
using nn::ParameterSet;

inline constexpr int kActionDim = env::kActionDim;

enum class ActorKind {
  goal_conditioned,  // [o_obj, o_goal, o~] -> mean, log_std
  goal_blind_aux,    // [o_obj, o~] -> mean, log_std, predicted leader mean, predicted leader log_std
};

std::string to_string(ActorKind k);
int actor_input_dim(ActorKind k);
int actor_output_dim(ActorKind k);

// Rows of the actor output.
struct Heads {
  static constexpr int mean = 0;
  static constexpr int log_std = 3;
  static constexpr int aux_mean = 6;
  static constexpr int aux_log_std = 9;
};

struct ActorConfig {
  ActorKind kind = ActorKind::goal_conditioned;
  std::vector<int> hidden_dims{256, 256, 128};
  LogStdBounds log_std_bounds{};
  double initial_log_std = 0.0;
  nn::AdamConfig adam{};
};

/**
 * Gaussian actor over the shared MLP trunk.
 *
 * The goal-conditioned kind is the leader of CoLF (and both agents of the
 * MAPPO baselines); the goal-blind kind is the CoLF follower, whose network
 * also emits the auxiliary distribution g(a^L | o^F) from the same trunk.
 */
template <typename S>
class Actor {
 public:
  Actor() = default;
  Actor(const ActorConfig& cfg, Rng& rng) : kind_(cfg.kind), bounds_(cfg.log_std_bounds) {
    params_ = ParameterSet<S>(MlpSpec{actor_input_dim(kind_), cfg.hidden_dims, actor_output_dim(kind_)});
    nn::orthogonal_init(params_, rng, std::sqrt(2.0), 0.01);
    auto b = params_.bias(params_.spec().num_layers() - 1);
    b.segment(Heads::log_std, kActionDim).setConstant(static_cast<S>(cfg.initial_log_std));
    if (has_aux()) b.segment(Heads::aux_log_std, kActionDim).setConstant(static_cast<S>(cfg.initial_log_std));
    adam_ = nn::AdamState<S>(params_.size(), cfg.adam);
  }
  Actor(ActorKind kind, ParameterSet<S> params, LogStdBounds bounds, nn::AdamConfig adam = {})
      : kind_(kind), bounds_(bounds), params_(std::move(params)) {
    require(params_.spec().input_dim == actor_input_dim(kind_) && params_.spec().output_dim == actor_output_dim(kind_),
            "Actor: parameter shape does not match actor kind " + to_string(kind_));
    adam_ = nn::AdamState<S>(params_.size(), adam);
  }

  ActorKind kind() const { return kind_; }
  bool has_aux() const { return kind_ == ActorKind::goal_blind_aux; }
  int input_dim() const { return params_.spec().input_dim; }
  const LogStdBounds& bounds() const { return bounds_; }
  const ParameterSet<S>& params() const { return params_; }
  ParameterSet<S>& params() { return params_; }
  nn::AdamState<S>& optimizer() { return adam_; }
  const nn::AdamState<S>& optimizer() const { return adam_; }

  // Raw network output, out_dim x batch. log-std rows are not yet clamped.
  Mat<S> forward(const Mat<S>& obs, MlpCache<S>* cache = nullptr) const {
    require(obs.rows() == input_dim(), "Actor(" + to_string(kind_) + "): observation has " +
                                           std::to_string(obs.rows()) + " entries, expected " +
                                           std::to_string(input_dim()));
    return nn::mlp_forward(params_, obs, cache);
  }

  DiagGaussian<S> policy_dist(const Mat<S>& out, Eigen::Index col) const {
    return {out.col(col).segment(Heads::mean, kActionDim), out.col(col).segment(Heads::log_std, kActionDim), bounds_};
  }
  DiagGaussian<S> aux_dist(const Mat<S>& out, Eigen::Index col) const {
    require(has_aux(), "Actor: this actor has no auxiliary head");
    return {out.col(col).segment(Heads::aux_mean, kActionDim), out.col(col).segment(Heads::aux_log_std, kActionDim),
            bounds_};
  }

 private:
  ActorKind kind_ = ActorKind::goal_conditioned;
  LogStdBounds bounds_{};
  ParameterSet<S> params_;
  nn::AdamState<S> adam_;
};

enum class ActMode { sample, mean };

template <typename S>
struct ActResult {
  Vec<S> action;  // unclipped
  S log_prob{};
  DiagGaussian<S> dist;
  std::optional<DiagGaussian<S>> predicted_leader;
};

template <typename S>
ActResult<S> act(const Actor<S>& actor, const Vec<S>& obs, ActMode mode, Rng& rng) {
  const Mat<S> out = actor.forward(Mat<S>(obs));
  ActResult<S> r;
  r.dist = actor.policy_dist(out, 0);
  r.action = mode == ActMode::mean ? Vec<S>(r.dist.mean) : nn::gauss_sample(r.dist, rng);
  r.log_prob = nn::gauss_log_prob(r.dist, r.action);
  if (actor.has_aux()) r.predicted_leader = actor.aux_dist(out, 0);
  return r;
}

// Leader: pi(a^L | o_obj, o_goal, o~^L). Requires the 13-entry observation.
template <typename S>
ActResult<S> leader_act(const Actor<S>& leader, const Vec<S>& obs, ActMode mode, Rng& rng) {
  require(leader.kind() == ActorKind::goal_conditioned, "leader_act: actor is not goal-conditioned");
  require(obs.size() == env::kLeaderObsDim, "leader_act: observation must have 13 entries");
  return act(leader, obs, mode, rng);
}

// Follower: pi(a^F | o_obj, o~^F) plus g(a^L | o_obj, o~^F). The 11-entry
// observation has no goal slot; anything else is refused.
template <typename S>
ActResult<S> follower_act(const Actor<S>& follower, const Vec<S>& obs, ActMode mode, Rng& rng) {
  require(follower.kind() == ActorKind::goal_blind_aux, "follower_act: actor is not a goal-blind follower");
  require(obs.size() == env::kFollowerObsDim,
          "follower_act: observation must have 11 entries (got " + std::to_string(obs.size()) + ")");
  return act(follower, obs, mode, rng);
}

// Follower observations paired with the leader actions executed at the same
// timesteps; the actions are data, so no gradient reaches the leader.
template <typename S>
struct CeBatch {
  Mat<S> follower_obs;    // 11 x N
  Mat<S> leader_actions;  // 3 x N
};

template <typename S>
struct CeLossResult {
  S loss{};
  Vec<S> grad;  // d loss / d follower params (flat)
};

/**
 * L_CE = -mean_n log g(a^L_n | o^F_n).
 *
 * Gradients flow into the follower's auxiliary heads and, through the shared
 * trunk, into every follower layer.
 */
template <typename S>
CeLossResult<S> ce_loss(const Actor<S>& follower, const CeBatch<S>& batch) {
  require(follower.has_aux(), "ce_loss: actor has no auxiliary head");
  const Eigen::Index n = batch.follower_obs.cols();
  if (n == 0) throw ContractViolation("ce_loss: empty batch");
  require(batch.leader_actions.rows() == kActionDim && batch.leader_actions.cols() == n,
          "ce_loss: leader action batch misaligned");
  MlpCache<S> cache;
  const Mat<S> out = follower.forward(batch.follower_obs, &cache);
  Mat<S> grad_out = Mat<S>::Zero(out.rows(), n);
  const S inv_n = S(1) / static_cast<S>(n);
  S total = 0;
  const auto& b = follower.bounds();
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto q = follower.aux_dist(out, j);
    const Vec<S> a = batch.leader_actions.col(j);
    total -= nn::gauss_log_prob(q, a);
    const auto g = nn::gauss_log_prob_grad(q, a);
    grad_out.col(j).segment(Heads::aux_mean, kActionDim) = -inv_n * g.mean;
    for (int d = 0; d < kActionDim; ++d) {
      const S raw = out(Heads::aux_log_std + d, j);
      const bool live = raw > S(b.min) && raw < S(b.max);
      grad_out(Heads::aux_log_std + d, j) = live ? -inv_n * g.log_std[d] : S(0);
    }
  }
  const auto grads = nn::mlp_backward(follower.params(), cache, grad_out, false);
  return {total * inv_n, grads.params.flat()};
}

// Logging-only surrogate of I(a^L; o^F): mean leader policy entropy minus L_CE.
inline double mi_bound_diagnostic(double leader_entropy_mean, double ce_loss_value) {
  return leader_entropy_mean - ce_loss_value;
}

}  // namespace colf::policy
