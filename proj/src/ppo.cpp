#include "ftrl/ppo.hpp"

#include <algorithm>
#include <cmath>

#include "ftrl/ops.hpp"

namespace ftrl {

void PPOConfig::validate() const {
  if (gamma < 0.0 || gamma > 1.0 || gae_lambda < 0.0 || gae_lambda > 1.0) {
    throw ContractViolation("ppo config: gamma/lambda must be in [0, 1]");
  }
  if (clip_eps <= 0.0) throw ContractViolation("ppo config: clip_eps must be > 0");
  if (update_epochs < 1 || minibatch_size < 1 || num_steps < 1) {
    throw ContractViolation("ppo config: epochs/minibatch/num_steps must be >= 1");
  }
  if (lr < 0.0) throw ContractViolation("ppo config: negative lr");
}

double ppo_surrogate(double ratio, double advantage, double eps) {
  if (eps <= 0.0) throw ContractViolation("ppo_surrogate: eps must be > 0");
  const double clipped = std::min(std::max(ratio, 1.0 - eps), 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

namespace {

std::vector<std::vector<Parameter>> snapshot_all(
    std::span<ParameterStore* const> stores) {
  std::vector<std::vector<Parameter>> out;
  out.reserve(stores.size());
  for (ParameterStore* s : stores) out.push_back(s->snapshot());
  return out;
}

void restore_all(std::span<ParameterStore* const> stores,
                 const std::vector<std::vector<Parameter>>& snaps) {
  for (std::size_t i = 0; i < stores.size(); ++i) stores[i]->restore(snaps[i]);
}

}  // namespace

UpdateStats ppo_update(GaussianPolicy& policy, ValueHead& value,
                       const RolloutBuffer& buffer, const PPOConfig& config,
                       std::span<ParameterStore* const> stores, Rng& rng) {
  config.validate();
  buffer.require_full();
  const GaeResult gae = compute_gae(buffer, config.gamma, config.gae_lambda);

  const std::size_t n = buffer.size();
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);

  const auto snaps = snapshot_all(stores);
  Adam opt(AdamConfig{.lr = config.lr});

  UpdateStats stats;
  double ratio_sum = 0.0, clip_count = 0.0, kl_sum = 0.0;
  double pg_sum = 0.0, v_sum = 0.0, ent_sum = 0.0;
  long samples_seen = 0;
  long batches_seen = 0;

  try {
    for (int epoch = 0; epoch < config.update_epochs; ++epoch) {
      rng.shuffle(order);
      for (std::size_t start = 0; start < n;
           start += static_cast<std::size_t>(config.minibatch_size)) {
        const std::size_t end =
            std::min(n, start + static_cast<std::size_t>(config.minibatch_size));
        const std::size_t mb = end - start;

        // Per-minibatch advantage normalization. A single-sample minibatch
        // keeps its raw advantage (centering would zero it out).
        double mean_adv = 0.0;
        double denom = 1.0;
        if (mb >= 2) {
          for (std::size_t i = start; i < end; ++i) {
            mean_adv += gae.advantages[static_cast<std::size_t>(order[i])];
          }
          mean_adv /= static_cast<double>(mb);
          double var_adv = 0.0;
          for (std::size_t i = start; i < end; ++i) {
            const double d =
                gae.advantages[static_cast<std::size_t>(order[i])] - mean_adv;
            var_adv += d * d;
          }
          var_adv /= static_cast<double>(mb);
          denom = std::sqrt(var_adv) + 1e-8;
        }

        Graph g;
        GraphContext ctx(g);
        Var pg_loss{}, v_loss{};
        for (std::size_t i = start; i < end; ++i) {
          const std::size_t k = static_cast<std::size_t>(order[i]);
          const double adv = (gae.advantages[k] - mean_adv) / denom;

          Var mean = policy.mean_node(ctx, buffer.observations[k]);
          Var lp = policy.log_prob_node(ctx, mean, buffer.actions[k]);
          Var ratio = exp(add_scalar(lp, -buffer.log_probs[k]));
          Var surr = clipped_surrogate(ratio, adv, config.clip_eps);

          Var v = value.value_node(ctx, buffer.observations[k]);
          Var verr = add_scalar(v, -gae.returns[k]);
          Var vsq = mul(verr, verr);

          pg_loss = (i == start) ? surr : add(pg_loss, surr);
          v_loss = (i == start) ? vsq : add(v_loss, vsq);

          const double rho = ratio.value().item();
          ratio_sum += rho;
          if (std::abs(rho - 1.0) > config.clip_eps) clip_count += 1.0;
          kl_sum += (rho - 1.0) - std::log(rho);
          ++samples_seen;
        }
        pg_loss = scale(pg_loss, -1.0 / static_cast<double>(mb));  // maximize
        v_loss = scale(v_loss, 1.0 / static_cast<double>(mb));
        Var entropy = policy.entropy_node(ctx);
        Var loss = add(pg_loss, scale(v_loss, config.value_coef));
        if (config.entropy_coef != 0.0) {
          loss = sub(loss, scale(entropy, config.entropy_coef));
        }

        auto grads = ctx.gradients(loss);
        clip_global_norm(grads, config.max_grad_norm);
        opt.step(grads);
        policy.clamp_log_std();

        pg_sum += pg_loss.value().item();
        v_sum += v_loss.value().item();
        ent_sum += entropy.value().item();
        ++batches_seen;
      }
    }
  } catch (const NonFiniteError&) {
    restore_all(stores, snaps);
    stats.aborted = true;
    return stats;
  }

  if (samples_seen > 0) {
    stats.mean_ratio = ratio_sum / static_cast<double>(samples_seen);
    stats.clip_fraction = clip_count / static_cast<double>(samples_seen);
    stats.approx_kl = kl_sum / static_cast<double>(samples_seen);
  }
  if (batches_seen > 0) {
    stats.pg_loss = pg_sum / static_cast<double>(batches_seen);
    stats.value_loss = v_sum / static_cast<double>(batches_seen);
    stats.entropy = ent_sum / static_cast<double>(batches_seen);
  }
  return stats;
}

std::vector<StepLog> ppo_train(Env& env, GaussianPolicy& policy, ValueHead& value,
                               const PPOConfig& config,
                               std::span<ParameterStore* const> stores,
                               std::uint64_t seed,
                               const UpdateHook& after_update) {
  config.validate();
  std::vector<StepLog> history;
  Rng update_rng(derive_seed(seed, "ppo.update"));
  long global_step = 0;
  std::uint64_t round = 0;
  double last_return = 0.0;

  while (global_step < config.total_timesteps) {
    const RolloutBuffer buffer = collect_rollout(
        env, policy, &value, config.num_steps,
        derive_seed(seed, "ppo.rollout", round));
    const UpdateStats stats =
        ppo_update(policy, value, buffer, config, stores, update_rng);
    global_step += static_cast<long>(buffer.size());
    ++round;

    if (!buffer.episode_returns.empty()) {
      double sum = 0.0;
      for (double r : buffer.episode_returns) sum += r;
      last_return = sum / static_cast<double>(buffer.episode_returns.size());
    }
    StepLog log;
    log.step = global_step;
    log.episodic_return = last_return;
    log.pg_loss = stats.pg_loss;
    log.value_loss = stats.value_loss;
    log.entropy = stats.entropy;
    log.clip_fraction = stats.clip_fraction;
    log.approx_kl = stats.approx_kl;
    history.push_back(log);

    if (after_update) after_update(global_step);
    if (stats.aborted) break;
  }
  return history;
}

}  // namespace ftrl
