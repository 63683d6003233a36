#ifndef FTRL_ROLLOUT_HPP
#define FTRL_ROLLOUT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ftrl/envs.hpp"
#include "ftrl/policy.hpp"

namespace ftrl {

/// Fixed-capacity record of transitions for one policy-update round.
/// dones[t] marks transition t as terminal; bootstrap_value is V of the
/// observation after the last transition (ignored when that one terminated).
struct RolloutBuffer {
  std::vector<Tensor> observations;
  std::vector<Tensor> actions;
  std::vector<double> log_probs;  // under the acting policy, at collection
  std::vector<double> rewards;
  std::vector<double> values;  // V(o_t)
  std::vector<std::uint8_t> dones;
  double bootstrap_value = 0.0;

  /// Returns of episodes that finished during collection.
  std::vector<double> episode_returns;
  /// Which component produced the actions (bookkeeping for multi-agent
  /// setups).
  std::string provenance;

  std::size_t size() const { return observations.size(); }
  void require_full() const;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantages + values
};

/// Generalized advantage estimation:
///   delta_t = r_t + gamma * V(o_{t+1}) * (1 - done_t) - V(o_t)
///   A_t     = sum_k (gamma * lambda)^k delta_{t+k}, truncated at episode end.
GaeResult compute_gae(const RolloutBuffer& buffer, double gamma, double lambda);

/// Collects exactly num_steps transitions, resetting the environment at the
/// start and after every terminal step with seeds derived from `seed`.
/// `deterministic` switches the policy to evaluation mode (mean actions).
RolloutBuffer collect_rollout(Env& env, const GaussianPolicy& policy,
                              const ValueHead* value, int num_steps,
                              std::uint64_t seed, bool deterministic = false,
                              std::string provenance = {});

}  // namespace ftrl

#endif  // FTRL_ROLLOUT_HPP
