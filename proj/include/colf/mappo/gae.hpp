#pragma once

#include <span>
#include <vector>

namespace colf::mappo {

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/**
 * Generalized advantage estimation over one environment's sequence.
 *
 * `values` carries T+1 entries: V(s_0..s_{T-1}) followed by the bootstrap
 * value of the state after the last step. dones[t] = 1 cuts both the TD
 * target and the advantage trace at step t.
 *
 *   delta_t = r_t + gamma V_{t+1} (1 - d_t) - V_t
 *   A_t     = delta_t + gamma lambda (1 - d_t) A_{t+1}
 *   R_t     = A_t + V_t
 */
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const double> dones,
                      double gamma, double gae_lambda);

// Zero-mean, unit-variance copy of `x` (population std, 1e-8 guard).
std::vector<double> normalize_advantages(std::span<const double> x);

}  // namespace colf::mappo
