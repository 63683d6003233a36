#include "ftrl/rollout.hpp"

namespace ftrl {

void RolloutBuffer::require_full() const {
  const std::size_t n = observations.size();
  if (n == 0 || actions.size() != n || log_probs.size() != n ||
      rewards.size() != n || values.size() != n || dones.size() != n) {
    throw ContractViolation("rollout buffer is incomplete");
  }
}

GaeResult compute_gae(const RolloutBuffer& buffer, double gamma, double lambda) {
  if (gamma < 0.0 || gamma > 1.0 || lambda < 0.0 || lambda > 1.0) {
    throw ContractViolation("compute_gae: gamma and lambda must be in [0, 1]");
  }
  buffer.require_full();
  const std::size_t n = buffer.size();
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);

  double carry = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double not_done = buffer.dones[i] ? 0.0 : 1.0;
    const double next_value =
        (i + 1 < n) ? buffer.values[i + 1] : buffer.bootstrap_value;
    const double delta = buffer.rewards[i] + gamma * next_value * not_done -
                         buffer.values[i];
    carry = delta + gamma * lambda * not_done * carry;
    out.advantages[i] = carry;
    out.returns[i] = carry + buffer.values[i];
  }
  return out;
}

RolloutBuffer collect_rollout(Env& env, const GaussianPolicy& policy,
                              const ValueHead* value, int num_steps,
                              std::uint64_t seed, bool deterministic,
                              std::string provenance) {
  if (num_steps < 1) {
    throw ContractViolation("collect_rollout: num_steps must be >= 1");
  }
  RolloutBuffer buf;
  buf.provenance = std::move(provenance);
  buf.observations.reserve(static_cast<std::size_t>(num_steps));

  Rng noise(derive_seed(seed, "rollout.noise"));
  std::uint64_t episode = 0;
  Tensor obs = env.reset(derive_seed(seed, "rollout.reset", episode++));
  double episode_return = 0.0;

  for (int t = 0; t < num_steps; ++t) {
    Tensor action;
    double log_prob;
    if (deterministic) {
      const Tensor mean = policy.mean_action(obs);
      action = mean;
      log_prob = policy.log_prob(action, mean);
    } else {
      const GaussianPolicy::Sample s = policy.sample(obs, noise);
      action = s.action;
      log_prob = s.log_prob;
    }
    buf.observations.push_back(obs);
    buf.actions.push_back(action);
    buf.log_probs.push_back(log_prob);
    buf.values.push_back(value != nullptr ? value->value(obs) : 0.0);

    const StepResult r = env.step(action);
    buf.rewards.push_back(r.reward);
    buf.dones.push_back(r.done ? 1 : 0);
    episode_return += r.reward;

    if (r.done) {
      buf.episode_returns.push_back(episode_return);
      episode_return = 0.0;
      obs = env.reset(derive_seed(seed, "rollout.reset", episode++));
    } else {
      obs = r.observation;
    }
  }
  buf.bootstrap_value =
      (buf.dones.back() == 0 && value != nullptr) ? value->value(obs) : 0.0;
  return buf;
}

}  // namespace ftrl
