#pragma once

#include "colf/policy/actor.hpp"

#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace colf::mappo {

// min(rho A, clip(rho, 1-eps, 1+eps) A): the per-sample PPO objective.
double clipped_surrogate(double ratio, double advantage, double eps);

struct SurrogateResult {
  double loss = 0;                       // -mean objective over included samples
  std::vector<double> grad_new_log_prob;  // d loss / d new_log_prob
  int excluded = 0;                      // samples dropped for a non-finite ratio
};

SurrogateResult actor_loss(std::span<const double> new_log_probs, std::span<const double> old_log_probs,
                           std::span<const double> advantages, double eps);

struct ValueLossResult {
  double loss = 0;
  std::vector<double> grad_values;
};

// mean max((V - R)^2, (clip(V, V_old - eps, V_old + eps) - R)^2)
ValueLossResult critic_loss(std::span<const double> values, std::span<const double> old_values,
                            std::span<const double> returns, double eps);

struct ActorCoefficients {
  double clip_eps = 0.2;
  double entropy_coef = 0.003;
  double ce_coef = 0.0;
};

template <typename S>
struct ActorMinibatch {
  Mat<S> obs;             // input_dim x N
  Mat<S> actions;         // 3 x N, as sampled (pre-clip)
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  Mat<S> leader_actions;  // 3 x N; used only by actors with an auxiliary head
};

struct ActorLossReport {
  double total = 0;
  double surrogate = 0;
  double entropy = 0;  // mean policy entropy
  double ce = std::numeric_limits<double>::quiet_NaN();
  int excluded = 0;
  double clip_fraction = 0;
};

template <typename S>
struct ActorObjective {
  ActorLossReport report;
  Vec<S> grad;  // d total / d params
};

/**
 * total = surrogate - entropy_coef * mean H(pi) + ce_coef * L_CE
 *
 * L_CE is evaluated (and reported) whenever the actor has an auxiliary head;
 * it contributes to the gradient only through ce_coef.
 */
template <typename S>
ActorObjective<S> actor_objective(const policy::Actor<S>& actor, const ActorMinibatch<S>& mb,
                                  const ActorCoefficients& coef) {
  using policy::Heads;
  constexpr int A = policy::kActionDim;
  const Eigen::Index n = mb.obs.cols();
  require(n > 0, "actor_objective: empty minibatch");
  require(mb.actions.cols() == n && mb.old_log_probs.size() == static_cast<std::size_t>(n) &&
              mb.advantages.size() == static_cast<std::size_t>(n),
          "actor_objective: minibatch fields misaligned");
  const bool with_ce = actor.has_aux();
  if (with_ce) require(mb.leader_actions.cols() == n, "actor_objective: missing leader actions for CE");

  nn::MlpCache<S> cache;
  const Mat<S> out = actor.forward(mb.obs, &cache);
  const auto& bounds = actor.bounds();

  std::vector<double> new_lp(n);
  std::vector<nn::DiagGaussian<S>> dists(n);
  double entropy = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    dists[j] = actor.policy_dist(out, j);
    new_lp[j] = static_cast<double>(nn::gauss_log_prob(dists[j], Vec<S>(mb.actions.col(j))));
    entropy += static_cast<double>(nn::gauss_entropy(dists[j]));
  }
  entropy /= static_cast<double>(n);
  const SurrogateResult sur = actor_loss(new_lp, mb.old_log_probs, mb.advantages, coef.clip_eps);

  Mat<S> grad_out = Mat<S>::Zero(out.rows(), n);
  const double inv_n = 1.0 / static_cast<double>(n);
  auto live = [&](Eigen::Index row, Eigen::Index j) {
    return out(row, j) > S(bounds.min) && out(row, j) < S(bounds.max);
  };
  int clipped = 0;
  double ce = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double ratio = std::exp(new_lp[j] - mb.old_log_probs[j]);
    if (std::abs(ratio - 1.0) > coef.clip_eps) ++clipped;
    const auto g = nn::gauss_log_prob_grad(dists[j], Vec<S>(mb.actions.col(j)));
    const S dl = static_cast<S>(sur.grad_new_log_prob[j]);
    grad_out.col(j).segment(Heads::mean, A) = dl * g.mean;
    for (int d = 0; d < A; ++d)
      if (live(Heads::log_std + d, j))
        grad_out(Heads::log_std + d, j) = dl * g.log_std[d] - static_cast<S>(coef.entropy_coef * inv_n);

    if (with_ce) {
      const auto q = actor.aux_dist(out, j);
      const Vec<S> a_leader = mb.leader_actions.col(j);
      ce -= static_cast<double>(nn::gauss_log_prob(q, a_leader));
      if (coef.ce_coef != 0.0) {
        const auto gq = nn::gauss_log_prob_grad(q, a_leader);
        const S w = static_cast<S>(-coef.ce_coef * inv_n);
        grad_out.col(j).segment(Heads::aux_mean, A) = w * gq.mean;
        for (int d = 0; d < A; ++d)
          if (live(Heads::aux_log_std + d, j)) grad_out(Heads::aux_log_std + d, j) = w * gq.log_std[d];
      }
    }
  }

  ActorObjective<S> res;
  res.report.surrogate = sur.loss;
  res.report.entropy = entropy;
  res.report.excluded = sur.excluded;
  res.report.clip_fraction = static_cast<double>(clipped) * inv_n;
  res.report.total = sur.loss - coef.entropy_coef * entropy;
  if (with_ce) {
    res.report.ce = ce * inv_n;
    res.report.total += coef.ce_coef * res.report.ce;
  }
  res.grad = nn::mlp_backward(actor.params(), cache, grad_out, false).params.flat();
  return res;
}

}  // namespace colf::mappo
