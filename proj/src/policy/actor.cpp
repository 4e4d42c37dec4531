#include "colf/policy/actor.hpp"

namespace colf::policy {

std::string to_string(ActorKind k) {
  return k == ActorKind::goal_conditioned ? "goal_conditioned" : "goal_blind_aux";
}

int actor_input_dim(ActorKind k) {
  return k == ActorKind::goal_conditioned ? env::kLeaderObsDim : env::kFollowerObsDim;
}

int actor_output_dim(ActorKind k) { return k == ActorKind::goal_conditioned ? 2 * kActionDim : 4 * kActionDim; }

}  // namespace colf::policy
