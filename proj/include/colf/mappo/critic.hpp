#pragma once

#include "colf/env/transport_env.hpp"
#include "colf/mappo/losses.hpp"
#include "colf/nn/adam.hpp"
#include "colf/nn/mlp.hpp"

#include <cmath>
#include <vector>

namespace colf::mappo {

// Robot poses (x, y, cos, sin) x 2, object pose (x, y, cos, sin), instructed goal (x, y).
inline constexpr int kGlobalStateDim = 14;
inline constexpr int kAacExtraDim = 3;

inline int global_state_dim(bool aac) { return kGlobalStateDim + (aac ? kAacExtraDim : 0); }

// Centralized critic input. With `aac` the object's world-frame twist (vx, vy, wz) is appended.
Vec<double> global_state(const env::WorldState& s, bool aac);

struct CriticConfig {
  std::vector<int> hidden_dims{256, 256, 128};
  nn::AdamConfig adam{};
};

template <typename S>
class Critic {
 public:
  Critic() = default;
  Critic(int input_dim, const CriticConfig& cfg, Rng& rng)
      : params_(nn::MlpSpec{input_dim, cfg.hidden_dims, 1}), adam_(params_.size(), cfg.adam) {
    nn::orthogonal_init(params_, rng, std::sqrt(2.0), 1.0);
  }
  Critic(nn::ParameterSet<S> params, nn::AdamConfig adam = {})
      : params_(std::move(params)), adam_(params_.size(), adam) {
    require(params_.spec().output_dim == 1, "Critic: network must have a single output");
  }

  int input_dim() const { return params_.spec().input_dim; }
  const nn::ParameterSet<S>& params() const { return params_; }
  nn::ParameterSet<S>& params() { return params_; }
  nn::AdamState<S>& optimizer() { return adam_; }

  // One value per column of `states`.
  Vec<S> values(const Mat<S>& states, nn::MlpCache<S>* cache = nullptr) const {
    require(states.rows() == input_dim(), "Critic: global state has " + std::to_string(states.rows()) +
                                              " entries, expected " + std::to_string(input_dim()));
    return nn::mlp_forward(params_, states, cache).row(0).transpose();
  }

 private:
  nn::ParameterSet<S> params_;
  nn::AdamState<S> adam_;
};

template <typename S>
struct CriticObjective {
  double loss = 0;
  Vec<S> grad;
};

// Clipped value loss on one minibatch; all targets live in the critic's (normalized) output space.
template <typename S>
CriticObjective<S> critic_objective(const Critic<S>& critic, const Mat<S>& states, std::span<const double> old_values,
                                    std::span<const double> returns, double eps) {
  nn::MlpCache<S> cache;
  const Vec<S> v = critic.values(states, &cache);
  std::vector<double> vd(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) vd[i] = static_cast<double>(v[i]);
  const ValueLossResult l = critic_loss(vd, old_values, returns, eps);
  Mat<S> g(1, v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) g(0, i) = static_cast<S>(l.grad_values[i]);
  return {l.loss, nn::mlp_backward(critic.params(), cache, g, false).params.flat()};
}

/**
 * Running mean / variance of value targets. The critic regresses normalized
 * returns; values are denormalized before they enter GAE.
 */
class ValueNorm {
 public:
  void update(std::span<const double> x);
  double normalize(double x) const { return (x - mean_) / stddev(); }
  double denormalize(double y) const { return y * stddev() + mean_; }
  double mean() const { return mean_; }
  double stddev() const { return count_ > 1 ? std::max(std::sqrt(m2_ / count_), 1e-2) : 1.0; }
  double count() const { return count_; }
  void restore(double mean, double m2, double count) { mean_ = mean, m2_ = m2, count_ = count; }
  double m2() const { return m2_; }

 private:
  double mean_ = 0;
  double m2_ = 0;
  double count_ = 0;
};

}  // namespace colf::mappo
