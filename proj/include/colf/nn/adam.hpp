#pragma once

#include "colf/nn/common.hpp"
#include "colf/nn/mlp.hpp"

#include <cmath>
#include <cstdint>

namespace colf::nn {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
struct AdamState {
  AdamConfig config;
  Vec<S> m;
  Vec<S> v;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(Eigen::Index n, AdamConfig cfg = {}) : config(cfg), m(Vec<S>::Zero(n)), v(Vec<S>::Zero(n)) {}
};

// Bias-corrected Adam update on a flat parameter vector. Rejects non-finite
// gradients before touching any state.
template <typename S>
void adam_step(AdamState<S>& state, Vec<S>& params, const Vec<S>& grads) {
  require(params.size() == state.m.size() && grads.size() == params.size(), "adam_step: shape mismatch");
  if (!grads.allFinite()) throw NonFiniteError("adam_step: non-finite gradient, update rejected");

  const AdamConfig& c = state.config;
  state.step += 1;
  state.m = S(c.beta1) * state.m + S(1 - c.beta1) * grads;
  state.v = S(c.beta2) * state.v + S(1 - c.beta2) * grads.cwiseAbs2();
  const double bc1 = 1 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1 - std::pow(c.beta2, static_cast<double>(state.step));
  const S step_size = static_cast<S>(c.lr / bc1);
  const S inv_sqrt_bc2 = static_cast<S>(1.0 / std::sqrt(bc2));
  params.array() -= step_size * state.m.array() / (state.v.array().sqrt() * inv_sqrt_bc2 + S(c.eps));
}

template <typename S>
void adam_step(AdamState<S>& state, ParameterSet<S>& params, const Vec<S>& grads) {
  adam_step(state, params.flat(), grads);
}

// Rescales `grads` in place so its L2 norm is at most `max_norm`; returns the
// norm before clipping.
template <typename S>
double clip_grad_norm(Vec<S>& grads, double max_norm) {
  const double norm = static_cast<double>(grads.norm());
  if (max_norm > 0 && norm > max_norm) grads *= static_cast<S>(max_norm / (norm + 1e-12));
  return norm;
}

}  // namespace colf::nn
