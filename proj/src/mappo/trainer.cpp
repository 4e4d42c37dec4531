#include "colf/mappo/trainer.hpp"

#include "colf/mappo/gae.hpp"

#include <limits>
#include <numeric>

namespace colf::mappo {

void TrainConfig::validate() const {
  require(gamma > 0 && gamma <= 1, "TrainConfig: gamma must be in (0, 1]");
  require(gae_lambda >= 0 && gae_lambda <= 1, "TrainConfig: gae_lambda must be in [0, 1]");
  require(clip_eps > 0, "TrainConfig: clip epsilon must be positive");
  require(ce_coef >= 0, "TrainConfig: CE weight must be non-negative");
  require(entropy_coef >= 0, "TrainConfig: entropy coefficient must be non-negative");
  require(epochs >= 1 && minibatches >= 1, "TrainConfig: epochs and minibatches must be >= 1");
  require(rollout_length >= 1 && num_envs >= 1, "TrainConfig: rollout length and env count must be >= 1");
  require(rollout_length * num_envs >= minibatches, "TrainConfig: fewer samples than minibatches");
  require(actor_lr > 0 && critic_lr > 0, "TrainConfig: learning rates must be positive");
  require(ce_coef == 0 || follower_kind == policy::ActorKind::goal_blind_aux,
          "TrainConfig: a CE weight needs a follower with an auxiliary head");
}

Learners make_learners(const TrainConfig& cfg) {
  cfg.validate();
  Rng init(derive_seed(cfg.seed, 0x1417));
  policy::ActorConfig a;
  a.hidden_dims = cfg.hidden_dims;
  a.initial_log_std = cfg.initial_log_std;
  a.adam.lr = cfg.actor_lr;
  a.kind = policy::ActorKind::goal_conditioned;
  ActorR leader(a, init);
  a.kind = cfg.follower_kind;
  ActorR follower(a, init);
  CriticConfig c;
  c.hidden_dims = cfg.hidden_dims;
  c.adam.lr = cfg.critic_lr;
  CriticR critic(global_state_dim(cfg.aac), c, init);
  return {std::move(leader), std::move(follower), std::move(critic), ValueNorm{}};
}

namespace {

std::vector<Eigen::Index> permutation(Eigen::Index n, Rng& rng) {
  std::vector<Eigen::Index> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (Eigen::Index i = n - 1; i > 0; --i) std::swap(p[i], p[rng() % static_cast<std::uint64_t>(i + 1)]);
  return p;
}

Mat<Real> gather(const Mat<Real>& m, std::span<const Eigen::Index> idx) {
  Mat<Real> out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(j) = m.col(idx[j]);
  return out;
}

std::vector<double> gather(const std::vector<double>& v, std::span<const Eigen::Index> idx) {
  std::vector<double> out(idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) out[j] = v[idx[j]];
  return out;
}

void check_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw NonFiniteError(std::string("ppo_update: non-finite ") + what + ", update aborted");
}

}  // namespace

LossReport ppo_update(const RolloutBatch& batch, Learners& learners, const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  const Eigen::Index n = batch.size();
  require(n > 0, "ppo_update: empty batch");
  require(batch.advantages.size() == static_cast<std::size_t>(n) && batch.returns.size() == batch.advantages.size(),
          "ppo_update: batch has not been finalized");

  const Learners snapshot = learners;
  try {
    const std::vector<double> adv = normalize_advantages(batch.advantages);
    std::vector<double> ret = batch.returns;
    if (cfg.value_norm) {
      learners.value_norm.update(ret);
      for (double& r : ret) r = learners.value_norm.normalize(r);
    }

    LossReport rep;
    const ActorCoefficients lc{cfg.clip_eps, cfg.entropy_coef, 0.0};
    const ActorCoefficients fc{cfg.clip_eps, cfg.entropy_coef, cfg.ce_coef};
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      const std::vector<Eigen::Index> perm = permutation(n, rng);
      for (int m = 0; m < cfg.minibatches; ++m) {
        const Eigen::Index lo = n * m / cfg.minibatches, hi = n * (m + 1) / cfg.minibatches;
        const std::span<const Eigen::Index> idx(perm.data() + lo, static_cast<std::size_t>(hi - lo));

        ActorMinibatch<Real> lmb{gather(batch.leader_obs, idx), gather(batch.leader_actions, idx),
                                 gather(batch.leader_log_probs, idx), gather(adv, idx), Mat<Real>()};
        ActorMinibatch<Real> fmb{gather(batch.follower_obs, idx), gather(batch.follower_actions, idx),
                                 gather(batch.follower_log_probs, idx), lmb.advantages, lmb.actions};
        auto lo_res = actor_objective(learners.leader, lmb, lc);
        auto fo_res = actor_objective(learners.follower, fmb, fc);
        auto co_res = critic_objective(learners.critic, gather(batch.global, idx), gather(batch.values_norm, idx),
                                       gather(ret, idx), cfg.clip_eps);
        check_finite(lo_res.report.total, "leader loss");
        check_finite(fo_res.report.total, "follower loss");
        check_finite(co_res.loss, "critic loss");

        nn::clip_grad_norm(lo_res.grad, cfg.max_grad_norm);
        nn::clip_grad_norm(fo_res.grad, cfg.max_grad_norm);
        nn::clip_grad_norm(co_res.grad, cfg.max_grad_norm);
        nn::adam_step(learners.leader.optimizer(), learners.leader.params(), lo_res.grad);
        nn::adam_step(learners.follower.optimizer(), learners.follower.params(), fo_res.grad);
        nn::adam_step(learners.critic.optimizer(), learners.critic.params(), co_res.grad);

        rep.leader_total += lo_res.report.total;
        rep.leader_surrogate += lo_res.report.surrogate;
        rep.leader_entropy += lo_res.report.entropy;
        rep.leader_clip_fraction += lo_res.report.clip_fraction;
        rep.follower_total += fo_res.report.total;
        rep.follower_surrogate += fo_res.report.surrogate;
        rep.follower_entropy += fo_res.report.entropy;
        rep.follower_clip_fraction += fo_res.report.clip_fraction;
        rep.ce += fo_res.report.ce;
        rep.critic += co_res.loss;
        rep.excluded += lo_res.report.excluded + fo_res.report.excluded;
        ++rep.minibatch_updates;
      }
    }
    const double k = 1.0 / rep.minibatch_updates;
    for (double* f : {&rep.leader_total, &rep.leader_surrogate, &rep.leader_entropy, &rep.leader_clip_fraction,
                      &rep.follower_total, &rep.follower_surrogate, &rep.follower_entropy,
                      &rep.follower_clip_fraction, &rep.ce, &rep.critic})
      *f *= k;
    rep.mi_diagnostic = policy::mi_bound_diagnostic(rep.leader_entropy, rep.ce);
    return rep;
  } catch (const NonFiniteError&) {
    learners = snapshot;
    throw;
  }
}

Trainer::Trainer(TrainConfig cfg, env::ScenarioConfig scenario)
    : cfg_(std::move(cfg)),
      envs_(std::move(scenario), cfg_.num_envs, derive_seed(cfg_.seed, 0xE4)),
      learners_(make_learners(cfg_)),
      rollout_rng_(derive_seed(cfg_.seed, 0x5A)),
      update_rng_(derive_seed(cfg_.seed, 0x0B)) {}

IterationStats Trainer::iterate() {
  RolloutPolicies p;
  p.leader = &learners_.leader;
  p.follower = &learners_.follower;
  p.critic = &learners_.critic;
  p.value_norm = cfg_.value_norm ? &learners_.value_norm : nullptr;
  p.aac = cfg_.aac;
  p.gamma = cfg_.gamma;
  RolloutBatch batch = collect_rollouts(p, envs_, cfg_.rollout_length, rollout_rng_);
  finalize_batch(batch, cfg_.gamma, cfg_.gae_lambda);

  IterationStats st;
  st.iteration = iteration_;
  st.losses = ppo_update(batch, learners_, cfg_, update_rng_);
  double r_obj = 0;
  for (double r : batch.object_rewards) r_obj += r;
  st.object_reward_mean = r_obj / static_cast<double>(batch.size());
  st.episodes = static_cast<int>(batch.episodes.size());
  st.leader_return = st.follower_return = std::numeric_limits<double>::quiet_NaN();
  if (st.episodes > 0) {
    st.leader_return = st.follower_return = 0;
    for (const auto& e : batch.episodes) {
      st.leader_return += e.agent_return[0] / st.episodes;
      st.follower_return += e.agent_return[1] / st.episodes;
    }
  }
  ++iteration_;
  return st;
}

nn::Checkpoint Trainer::checkpoint(const nlohmann::json& metadata) const {
  nn::Checkpoint c;
  c.seed = cfg_.seed;
  c.log_std_bounds = learners_.leader.bounds();
  c.metadata = metadata;
  c.metadata["leader_kind"] = policy::to_string(learners_.leader.kind());
  c.metadata["follower_kind"] = policy::to_string(learners_.follower.kind());
  c.metadata["aac"] = cfg_.aac;
  c.metadata["iteration"] = iteration_;
  c.metadata["value_norm"] = {{"mean", learners_.value_norm.mean()},
                              {"m2", learners_.value_norm.m2()},
                              {"count", learners_.value_norm.count()}};
  c.networks.push_back({"leader", learners_.leader.params().template cast<float>()});
  c.networks.push_back({"follower", learners_.follower.params().template cast<float>()});
  c.networks.push_back({"critic", learners_.critic.params().template cast<float>()});
  return c;
}

PolicyPair policies_from_checkpoint(const nn::Checkpoint& ckpt) {
  auto kind = [&](const char* key) {
    const std::string k = ckpt.metadata.value(key, std::string());
    if (k == policy::to_string(policy::ActorKind::goal_conditioned)) return policy::ActorKind::goal_conditioned;
    if (k == policy::to_string(policy::ActorKind::goal_blind_aux)) return policy::ActorKind::goal_blind_aux;
    throw ContractViolation(std::string("checkpoint: unknown actor kind for ") + key + ": '" + k + "'");
  };
  return {ActorR(kind("leader_kind"), ckpt.at("leader").cast<Real>(), ckpt.log_std_bounds),
          ActorR(kind("follower_kind"), ckpt.at("follower").cast<Real>(), ckpt.log_std_bounds)};
}

}  // namespace colf::mappo
