#include "colf/mappo/gae.hpp"

#include "colf/nn/common.hpp"

#include <cmath>

namespace colf::mappo {

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const double> dones,
                      double gamma, double gae_lambda) {
  const std::size_t n = rewards.size();
  require(values.size() == n + 1, "compute_gae: values must have one more entry than rewards");
  require(dones.size() == n, "compute_gae: dones/rewards length mismatch");
  require(gamma > 0 && gamma <= 1, "compute_gae: gamma must be in (0, 1]");
  require(gae_lambda >= 0 && gae_lambda <= 1, "compute_gae: gae_lambda must be in [0, 1]");

  GaeResult out{std::vector<double>(n), std::vector<double>(n)};
  double next_adv = 0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = 1.0 - dones[k];
    const double delta = rewards[k] + gamma * values[k + 1] * live - values[k];
    next_adv = delta + gamma * gae_lambda * live * next_adv;
    out.advantages[k] = next_adv;
    out.returns[k] = next_adv + values[k];
  }
  return out;
}

std::vector<double> normalize_advantages(std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  if (out.empty()) return out;
  double mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double std = std::sqrt(var / static_cast<double>(x.size()));
  for (double& v : out) v = (v - mean) / (std + 1e-8);
  return out;
}

}  // namespace colf::mappo
