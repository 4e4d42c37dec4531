#pragma once

#include "colf/nn/common.hpp"

#include <algorithm>
#include <numbers>

namespace colf::nn {

struct LogStdBounds {
  double min = -5.0;
  double max = 2.0;
};

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;  // log(2*pi)

/// Diagonal Gaussian N(mean, diag(exp(log_std))^2).
template <typename S>
struct DiagGaussian {
  Vec<S> mean;
  Vec<S> log_std;

  DiagGaussian() = default;
  DiagGaussian(Vec<S> m, Vec<S> ls, LogStdBounds bounds = {}) : mean(std::move(m)), log_std(std::move(ls)) {
    require(mean.size() == log_std.size(), "DiagGaussian: mean/log_std length mismatch");
    log_std = log_std.cwiseMax(S(bounds.min)).cwiseMin(S(bounds.max));
  }

  Eigen::Index dim() const { return mean.size(); }
  Vec<S> stddev() const { return log_std.array().exp().matrix(); }
};

template <typename S>
S gauss_log_prob(const DiagGaussian<S>& dist, const Vec<S>& a) {
  require(a.size() == dist.mean.size(), "gauss_log_prob: action length mismatch");
  const auto z = ((a - dist.mean).array() / dist.log_std.array().exp());
  return (S(-0.5) * z.square() - dist.log_std.array() - S(0.5 * kLogTwoPi)).sum();
}

/// Partial derivatives of gauss_log_prob.
template <typename S>
struct LogProbGrad {
  Vec<S> mean;
  Vec<S> log_std;
  Vec<S> action;
};

template <typename S>
LogProbGrad<S> gauss_log_prob_grad(const DiagGaussian<S>& dist, const Vec<S>& a) {
  require(a.size() == dist.mean.size(), "gauss_log_prob_grad: action length mismatch");
  const Vec<S> inv_var = (S(-2) * dist.log_std.array()).exp().matrix();
  const Vec<S> diff = a - dist.mean;
  LogProbGrad<S> g;
  g.mean = diff.cwiseProduct(inv_var);
  g.log_std = (diff.array().square() * inv_var.array() - S(1)).matrix();
  g.action = -g.mean;
  return g;
}

template <typename S>
S gauss_entropy(const DiagGaussian<S>& dist) {
  return (S(0.5 + 0.5 * kLogTwoPi) + dist.log_std.array()).sum();
}

/// Standard-normal noise used by the reparameterized sample a = mean + std * z.
template <typename S>
Vec<S> standard_normal_vector(Eigen::Index n, Rng& rng) {
  Vec<S> z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = static_cast<S>(standard_normal(rng));
  return z;
}

template <typename S>
Vec<S> gauss_reparameterize(const DiagGaussian<S>& dist, const Vec<S>& z) {
  require(z.size() == dist.mean.size(), "gauss_reparameterize: noise length mismatch");
  return dist.mean + dist.stddev().cwiseProduct(z);
}

template <typename S>
Vec<S> gauss_sample(const DiagGaussian<S>& dist, Rng& rng) {
  return gauss_reparameterize(dist, standard_normal_vector<S>(dist.dim(), rng));
}

}  // namespace colf::nn
