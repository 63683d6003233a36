#ifndef FTRL_PPO_HPP
#define FTRL_PPO_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "ftrl/rollout.hpp"

namespace ftrl {

struct PPOConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  int update_epochs = 10;
  int minibatch_size = 64;
  double lr = 3e-4;
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  long total_timesteps = 500000;
  int num_steps = 2048;

  void validate() const;
};

/// min(ratio * adv, clip(ratio, 1 - eps, 1 + eps) * adv); same forward as the
/// differentiable clipped_surrogate node.
double ppo_surrogate(double ratio, double advantage, double eps);

struct UpdateStats {
  double mean_ratio = 1.0;
  double clip_fraction = 0.0;
  double pg_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  bool aborted = false;  // non-finite loss; parameters were rolled back
};

/// One PPO update round: GAE, then `update_epochs` passes over shuffled
/// minibatches maximizing the clipped surrogate minus value and entropy
/// terms, advantages normalized per minibatch, gradients clipped by global
/// norm. On a non-finite loss every store rolls back to its pre-update state.
UpdateStats ppo_update(GaussianPolicy& policy, ValueHead& value,
                       const RolloutBuffer& buffer, const PPOConfig& config,
                       std::span<ParameterStore* const> stores, Rng& rng);

/// One logged row per update round.
struct StepLog {
  long step = 0;
  double episodic_return = 0.0;
  double pg_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

using UpdateHook = std::function<void(long global_step)>;

/// Rollout/update loop until total_timesteps. Returns one StepLog per round;
/// episodic_return carries the mean of episodes finished in that round (or
/// the last known value when none finished).
std::vector<StepLog> ppo_train(Env& env, GaussianPolicy& policy, ValueHead& value,
                               const PPOConfig& config,
                               std::span<ParameterStore* const> stores,
                               std::uint64_t seed,
                               const UpdateHook& after_update = {});

}  // namespace ftrl

#endif  // FTRL_PPO_HPP
