#include "colf/mappo/losses.hpp"

#include <algorithm>

namespace colf::mappo {

double clipped_surrogate(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

SurrogateResult actor_loss(std::span<const double> new_log_probs, std::span<const double> old_log_probs,
                           std::span<const double> advantages, double eps) {
  const std::size_t n = new_log_probs.size();
  require(old_log_probs.size() == n && advantages.size() == n, "actor_loss: batch length mismatch");
  require(eps > 0, "actor_loss: clip epsilon must be positive");

  SurrogateResult r;
  r.grad_new_log_prob.assign(n, 0.0);
  std::vector<double> ratio(n);
  std::size_t valid = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ratio[i] = std::exp(new_log_probs[i] - old_log_probs[i]);
    if (std::isfinite(ratio[i]) && std::isfinite(advantages[i]))
      ++valid;
    else
      ++r.excluded;
  }
  if (valid == 0) return r;
  const double inv = 1.0 / static_cast<double>(valid);
  for (std::size_t i = 0; i < n; ++i) {
    const double rho = ratio[i], a = advantages[i];
    if (!std::isfinite(rho) || !std::isfinite(a)) continue;
    const double unclipped = rho * a;
    const double clipped = std::clamp(rho, 1.0 - eps, 1.0 + eps) * a;
    r.loss -= std::min(unclipped, clipped) * inv;
    // The unclipped branch carries d(rho A)/d log pi = rho A; the clipped
    // branch is flat in the parameters.
    if (unclipped <= clipped) r.grad_new_log_prob[i] = -unclipped * inv;
  }
  return r;
}

ValueLossResult critic_loss(std::span<const double> values, std::span<const double> old_values,
                            std::span<const double> returns, double eps) {
  const std::size_t n = values.size();
  require(old_values.size() == n && returns.size() == n, "critic_loss: batch length mismatch");
  require(eps > 0, "critic_loss: clip epsilon must be positive");
  ValueLossResult r;
  r.grad_values.assign(n, 0.0);
  if (n == 0) return r;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = values[i];
    const double vc = std::clamp(v, old_values[i] - eps, old_values[i] + eps);
    const double a = (v - returns[i]) * (v - returns[i]);
    const double b = (vc - returns[i]) * (vc - returns[i]);
    r.loss += std::max(a, b) * inv;
    // When b > a the clamp is necessarily active, so that branch is flat.
    if (a >= b) r.grad_values[i] = 2.0 * (v - returns[i]) * inv;
  }
  return r;
}

}  // namespace colf::mappo
