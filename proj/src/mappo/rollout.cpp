#include "colf/mappo/rollout.hpp"

#include "colf/mappo/gae.hpp"

namespace colf::mappo {

Vec<double> global_state(const env::WorldState& s, bool aac) {
  Vec<double> g(global_state_dim(aac));
  int k = 0;
  auto pose = [&](const env::Pose2& p) {
    g[k++] = p.x;
    g[k++] = p.y;
    g[k++] = std::cos(p.yaw);
    g[k++] = std::sin(p.yaw);
  };
  pose(s.robots[0].pose);
  pose(s.robots[1].pose);
  pose(s.object.pose);
  g[k++] = s.goal().x();
  g[k++] = s.goal().y();
  if (aac) {
    g[k++] = s.object.twist.vx;
    g[k++] = s.object.twist.vy;
    g[k++] = s.object.twist.wz;
  }
  return g;
}

void ValueNorm::update(std::span<const double> x) {
  // Chan et al. parallel combination of (count, mean, M2).
  if (x.empty()) return;
  const double n = static_cast<double>(x.size());
  double bm = 0;
  for (double v : x) bm += v;
  bm /= n;
  double bm2 = 0;
  for (double v : x) bm2 += (v - bm) * (v - bm);
  const double total = count_ + n;
  const double delta = bm - mean_;
  mean_ += delta * n / total;
  m2_ += bm2 + delta * delta * count_ * n / total;
  count_ = total;
}

Vec<double> agent_observation(const env::WorldState& s, int agent, policy::ActorKind kind) {
  const env::AgentView v = env::observe_agent(s, agent);
  return kind == policy::ActorKind::goal_blind_aux ? env::goal_blind_vector(v) : env::goal_conditioned_vector(v);
}

VecEnv::VecEnv(env::ScenarioConfig config, int num_envs, std::uint64_t seed) : config_(std::move(config)) {
  require(num_envs >= 1, "VecEnv: need at least one environment");
  config_.validate();
  for (int i = 0; i < num_envs; ++i) {
    rngs_.emplace_back(derive_seed(seed, static_cast<std::uint64_t>(i)));
    states_.push_back(env::reset(config_, rngs_.back()).state);
  }
  running_.resize(num_envs);
}

VecEnv::Transition VecEnv::step(int i, const env::Action& leader, const env::Action& follower) {
  Transition t;
  t.outcome = env::step(states_.at(i), leader, follower, config_);
  EpisodeRecord& ep = running_[i];
  for (int a = 0; a < 2; ++a) ep.agent_return[a] += t.outcome.rewards.total[a];
  ep.object_reward_mean += t.outcome.rewards.object;
  ++ep.length;
  if (t.outcome.done) {
    ep.object_reward_mean /= ep.length;
    ep.final_ogd = env::metrics(t.outcome.state, config_).ogd;
    ep.reason = t.outcome.reason;
    t.finished = ep;
    ep = EpisodeRecord{};
    states_[i] = env::reset(config_, rngs_[i]).state;
  } else {
    states_[i] = t.outcome.state;
  }
  return t;
}

namespace {

Mat<Real> to_real(const Vec<double>& v) { return v.cast<Real>(); }

std::vector<double> critic_values(const RolloutPolicies& p, const Mat<Real>& states, std::vector<double>* raw) {
  const Vec<Real> v = p.critic->values(states);
  std::vector<double> out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double y = static_cast<double>(v[i]);
    if (raw) raw->push_back(y);
    out[i] = p.value_norm ? p.value_norm->denormalize(y) : y;
  }
  return out;
}

}  // namespace

RolloutBatch collect_rollouts(const RolloutPolicies& p, VecEnv& envs, int length, Rng& rng) {
  require(p.leader && p.follower && p.critic, "collect_rollouts: leader, follower and critic are required");
  require(length >= 0, "collect_rollouts: negative length");
  require(p.critic->input_dim() == global_state_dim(p.aac), "collect_rollouts: critic input does not match AAC flag");
  const int E = envs.size();
  const int N = length * E;
  const int dl = p.leader->input_dim(), df = p.follower->input_dim(), dg = global_state_dim(p.aac);

  RolloutBatch b;
  b.length = length;
  b.num_envs = E;
  b.leader_obs.resize(dl, N);
  b.follower_obs.resize(df, N);
  b.global.resize(dg, N);
  b.leader_actions.resize(policy::kActionDim, N);
  b.follower_actions.resize(policy::kActionDim, N);
  b.leader_log_probs.resize(N);
  b.follower_log_probs.resize(N);
  b.rewards.resize(N);
  b.agent_rewards[0].resize(N);
  b.agent_rewards[1].resize(N);
  b.object_rewards.resize(N);
  b.dones.resize(N);
  b.values.reserve(N);
  b.values_norm.reserve(N);
  b.bootstrap_values.assign(E, 0.0);

  Mat<Real> lo(dl, E), fo(df, E), gs(dg, E);
  for (int t = 0; t < length; ++t) {
    for (int e = 0; e < E; ++e) {
      const env::WorldState& s = envs.state(e);
      lo.col(e) = to_real(agent_observation(s, env::kLeader, p.leader->kind()));
      fo.col(e) = to_real(agent_observation(s, env::kFollower, p.follower->kind()));
      gs.col(e) = to_real(global_state(s, p.aac));
    }
    const Mat<Real> lout = p.leader->forward(lo);
    const Mat<Real> fout = p.follower->forward(fo);
    const std::vector<double> v = critic_values(p, gs, &b.values_norm);
    b.values.insert(b.values.end(), v.begin(), v.end());

    std::vector<Mat<Real>> terminal_states;
    std::vector<int> horizon_slots;
    for (int e = 0; e < E; ++e) {
      const int k = t * E + e;
      b.leader_obs.col(k) = lo.col(e);
      b.follower_obs.col(k) = fo.col(e);
      b.global.col(k) = gs.col(e);
      const auto ld = p.leader->policy_dist(lout, e);
      const auto fd = p.follower->policy_dist(fout, e);
      const Vec<Real> la = p.mode == policy::ActMode::mean ? Vec<Real>(ld.mean) : nn::gauss_sample(ld, rng);
      const Vec<Real> fa = p.mode == policy::ActMode::mean ? Vec<Real>(fd.mean) : nn::gauss_sample(fd, rng);
      b.leader_actions.col(k) = la;
      b.follower_actions.col(k) = fa;
      b.leader_log_probs[k] = static_cast<double>(nn::gauss_log_prob(ld, la));
      b.follower_log_probs[k] = static_cast<double>(nn::gauss_log_prob(fd, fa));

      const auto tr = envs.step(e, la.cast<double>(), fa.cast<double>());
      const auto& r = tr.outcome.rewards;
      b.agent_rewards[0][k] = r.total[0];
      b.agent_rewards[1][k] = r.total[1];
      b.rewards[k] = 0.5 * (r.total[0] + r.total[1]);
      b.object_rewards[k] = r.object;
      b.dones[k] = tr.outcome.done ? 1.0 : 0.0;
      if (tr.outcome.done && tr.outcome.reason == env::DoneReason::horizon) {
        terminal_states.push_back(to_real(global_state(tr.outcome.state, p.aac)));
        horizon_slots.push_back(k);
      }
      if (tr.finished) b.episodes.push_back(*tr.finished);
    }
    // Time-limit cuts are not terminal for the value function.
    if (!horizon_slots.empty()) {
      Mat<Real> ts(dg, static_cast<Eigen::Index>(horizon_slots.size()));
      for (std::size_t j = 0; j < horizon_slots.size(); ++j) ts.col(j) = terminal_states[j];
      const std::vector<double> tv = critic_values(p, ts, nullptr);
      for (std::size_t j = 0; j < horizon_slots.size(); ++j) b.rewards[horizon_slots[j]] += p.gamma * tv[j];
    }
  }
  if (length > 0) {
    for (int e = 0; e < E; ++e) gs.col(e) = to_real(global_state(envs.state(e), p.aac));
    const std::vector<double> v = critic_values(p, gs, nullptr);
    for (int e = 0; e < E; ++e) b.bootstrap_values[e] = b.dones[(length - 1) * E + e] > 0 ? 0.0 : v[e];
  }
  return b;
}

void finalize_batch(RolloutBatch& b, double gamma, double gae_lambda) {
  const int T = b.length, E = b.num_envs;
  b.advantages.assign(b.size(), 0.0);
  b.returns.assign(b.size(), 0.0);
  std::vector<double> r(T), v(T + 1), d(T);
  for (int e = 0; e < E; ++e) {
    for (int t = 0; t < T; ++t) {
      const int k = t * E + e;
      r[t] = b.rewards[k];
      v[t] = b.values[k];
      d[t] = b.dones[k];
    }
    v[T] = b.bootstrap_values[e];
    const GaeResult g = compute_gae(r, v, d, gamma, gae_lambda);
    for (int t = 0; t < T; ++t) {
      b.advantages[t * E + e] = g.advantages[t];
      b.returns[t * E + e] = g.returns[t];
    }
  }
}

}  // namespace colf::mappo
