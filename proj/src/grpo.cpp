#include "ftrl/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "ftrl/ops.hpp"

namespace ftrl {

void GRPOConfig::validate() const {
  if (group_size < 2) throw ContractViolation("grpo config: group_size must be >= 2");
  if (std_floor <= 0.0) throw ContractViolation("grpo config: std_floor must be > 0");
  if (clip_eps <= 0.0) throw ContractViolation("grpo config: clip_eps must be > 0");
  if (kl_coef < 0.0) throw ContractViolation("grpo config: kl_coef must be >= 0");
  if (ref_refresh_interval < 1) {
    throw ContractViolation("grpo config: ref_refresh_interval must be >= 1");
  }
  if (steps_per_update < 1 || update_epochs < 1 || minibatch_size < 1) {
    throw ContractViolation("grpo config: batch settings must be >= 1");
  }
  if (lr < 0.0) throw ContractViolation("grpo config: negative lr");
}

std::vector<double> grpo_group_advantages(std::span<const double> rewards,
                                          double std_floor) {
  const std::size_t g = rewards.size();
  if (g < 2) throw ContractViolation("grpo_group_advantages: need G >= 2");
  bool all_equal = true;
  for (double r : rewards) all_equal = all_equal && r == rewards[0];
  if (all_equal) return std::vector<double>(g, 0.0);  // zero numerator, exactly
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(g);  // population
  const double sigma = std::sqrt(var) + std_floor;
  std::vector<double> out(g);
  for (std::size_t i = 0; i < g; ++i) out[i] = (rewards[i] - mean) / sigma;
  return out;
}

Var diag_gaussian_kl(GraphContext& ctx, Var mean, Var log_std,
                     const Tensor& ref_mean, const Tensor& ref_log_std) {
  const std::int64_t d = mean.value().numel();
  if (ref_mean.numel() != d || ref_log_std.numel() != d ||
      log_std.value().numel() != d) {
    throw ContractViolation("diag_gaussian_kl: dimension mismatch");
  }
  Var mu_ref = ctx.input(ref_mean.flattened());
  Var ls_ref = ctx.input(ref_log_std.flattened());

  // KL = sum_d [ ls_ref - ls + (exp(2 ls) + (mu - mu_ref)^2) / (2 exp(2 ls_ref)) - 1/2 ]
  Tensor inv_den = Tensor::zeros(ref_log_std.flattened().shape());
  for (std::int64_t i = 0; i < d; ++i) {
    inv_den.at(i) = 0.5 * std::exp(-2.0 * ref_log_std.at(i));
  }
  Var diff = sub(mean, mu_ref);
  Var num = add(exp(scale(log_std, 2.0)), mul(diff, diff));
  Var ratio_term = mul(num, ctx.input(std::move(inv_den)));
  Var per_dim = add_scalar(add(sub(ls_ref, log_std), ratio_term), -0.5);
  return sum(per_dim);
}

GrpoBatch grpo_collect(Env& env, const GaussianPolicy& policy, int num_obs,
                       int group_size, std::uint64_t seed) {
  if (num_obs < 1) throw ContractViolation("grpo_collect: num_obs must be >= 1");
  if (group_size < 2) throw ContractViolation("grpo_collect: G must be >= 2");

  GrpoBatch batch;
  batch.rows.reserve(static_cast<std::size_t>(num_obs));
  Rng noise(derive_seed(seed, "grpo.noise"));
  std::uint64_t episode = 0;
  Tensor obs = env.reset(derive_seed(seed, "grpo.reset", episode++));
  double episode_return = 0.0;
  const int adim = policy.action_dim();

  for (int t = 0; t < num_obs; ++t) {
    GrpoRow row;
    row.observation = obs;
    const Tensor mean = policy.mean_action(obs);
    row.actions.reserve(static_cast<std::size_t>(group_size));
    row.log_probs.reserve(static_cast<std::size_t>(group_size));
    for (int i = 0; i < group_size; ++i) {
      Tensor action = Tensor::zeros({adim});
      for (int k = 0; k < adim; ++k) {
        const double sigma = std::exp(policy.log_std_param().value.at(k));
        action.at(k) = mean.at(k) + sigma * noise.normal();
      }
      row.log_probs.push_back(policy.log_prob(action, mean));
      row.actions.push_back(std::move(action));
    }
    row.rewards = env.peek_rewards(row.actions);

    const StepResult r = env.step(row.actions[0]);
    episode_return += r.reward;
    batch.rows.push_back(std::move(row));
    if (r.done) {
      batch.episode_returns.push_back(episode_return);
      episode_return = 0.0;
      obs = env.reset(derive_seed(seed, "grpo.reset", episode++));
    } else {
      obs = r.observation;
    }
  }
  return batch;
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

UpdateStats grpo_update(GaussianPolicy& policy, const GrpoBatch& batch,
                        const GRPOConfig& config, const GrpoReference* ref,
                        std::span<ParameterStore* const> stores, Rng& rng) {
  config.validate();
  if (batch.rows.empty()) throw ContractViolation("grpo_update: empty batch");
  if (config.kl_coef > 0.0 &&
      (ref == nullptr || ref->means.size() != batch.rows.size())) {
    throw ContractViolation("grpo_update: KL penalty needs a reference aligned "
                            "with the batch");
  }

  const std::size_t n = batch.rows.size();
  std::vector<std::vector<double>> advantages(n);
  for (std::size_t i = 0; i < n; ++i) {
    advantages[i] = grpo_group_advantages(batch.rows[i].rewards, config.std_floor);
  }

  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);

  const auto snaps = snapshot_all(stores);
  Adam opt(AdamConfig{.lr = config.lr});

  UpdateStats stats;
  double ratio_sum = 0.0, clip_count = 0.0, kl_sum = 0.0, pg_sum = 0.0;
  long candidates_seen = 0;
  long batches_seen = 0;

  try {
    for (int epoch = 0; epoch < config.update_epochs; ++epoch) {
      rng.shuffle(order);
      for (std::size_t start = 0; start < n;
           start += static_cast<std::size_t>(config.minibatch_size)) {
        const std::size_t end =
            std::min(n, start + static_cast<std::size_t>(config.minibatch_size));
        const std::size_t mb = end - start;

        Graph g;
        GraphContext ctx(g);
        Var loss{};
        for (std::size_t i = start; i < end; ++i) {
          const std::size_t k = static_cast<std::size_t>(order[i]);
          const GrpoRow& row = batch.rows[k];
          Var mean = policy.mean_node(ctx, row.observation);

          Var group{};
          for (std::size_t c = 0; c < row.actions.size(); ++c) {
            Var lp = policy.log_prob_node(ctx, mean, row.actions[c]);
            Var ratio = exp(add_scalar(lp, -row.log_probs[c]));
            Var surr = clipped_surrogate(ratio, advantages[k][c], config.clip_eps);
            group = (c == 0) ? surr : add(group, surr);

            const double rho = ratio.value().item();
            ratio_sum += rho;
            if (std::abs(rho - 1.0) > config.clip_eps) clip_count += 1.0;
            kl_sum += (rho - 1.0) - std::log(rho);
            ++candidates_seen;
          }
          Var row_loss =
              scale(group, -1.0 / static_cast<double>(row.actions.size()));
          if (config.kl_coef > 0.0) {
            Var kl = diag_gaussian_kl(ctx, mean, ctx.use(policy.log_std_param()),
                                      ref->means[k], ref->log_std);
            row_loss = add(row_loss, scale(kl, config.kl_coef));
          }
          loss = (i == start) ? row_loss : add(loss, row_loss);
        }
        loss = scale(loss, 1.0 / static_cast<double>(mb));

        auto grads = ctx.gradients(loss);
        clip_global_norm(grads, config.max_grad_norm);
        opt.step(grads);
        policy.clamp_log_std();

        pg_sum += loss.value().item();
        ++batches_seen;
      }
    }
  } catch (const NonFiniteError&) {
    restore_all(stores, snaps);
    stats.aborted = true;
    return stats;
  }

  if (candidates_seen > 0) {
    stats.mean_ratio = ratio_sum / static_cast<double>(candidates_seen);
    stats.clip_fraction = clip_count / static_cast<double>(candidates_seen);
    stats.approx_kl = kl_sum / static_cast<double>(candidates_seen);
  }
  if (batches_seen > 0) stats.pg_loss = pg_sum / static_cast<double>(batches_seen);
  return stats;
}

std::vector<StepLog> grpo_train(Env& env, GaussianPolicy& policy,
                                const GRPOConfig& config,
                                std::span<ParameterStore* const> stores,
                                std::uint64_t seed,
                                const UpdateHook& after_update) {
  config.validate();
  std::vector<StepLog> history;
  Rng update_rng(derive_seed(seed, "grpo.update"));
  long global_step = 0;
  std::uint64_t round = 0;
  double last_return = 0.0;

  std::vector<std::vector<Parameter>> ref_snapshot;

  while (global_step < config.total_timesteps) {
    if (config.kl_coef > 0.0 &&
        (round % static_cast<std::uint64_t>(config.ref_refresh_interval) == 0 ||
         ref_snapshot.empty())) {
      ref_snapshot = snapshot_all(stores);
    }

    GrpoBatch batch = grpo_collect(env, policy, config.steps_per_update,
                                   config.group_size,
                                   derive_seed(seed, "grpo.rollout", round));

    GrpoReference ref;
    const GrpoReference* ref_ptr = nullptr;
    if (config.kl_coef > 0.0) {
      // Evaluate the reference policy on this batch's observations by
      // temporarily restoring the snapshot parameters.
      const auto current = snapshot_all(stores);
      restore_all(stores, ref_snapshot);
      ref.means.reserve(batch.rows.size());
      for (const GrpoRow& row : batch.rows) {
        ref.means.push_back(policy.mean_action(row.observation));
      }
      ref.log_std = policy.log_std_param().value;
      restore_all(stores, current);
      ref_ptr = &ref;
    }

    const UpdateStats stats =
        grpo_update(policy, batch, config, ref_ptr, stores, update_rng);
    global_step += static_cast<long>(batch.rows.size());
    ++round;

    if (!batch.episode_returns.empty()) {
      double sum = 0.0;
      for (double r : batch.episode_returns) sum += r;
      last_return = sum / static_cast<double>(batch.episode_returns.size());
    }
    StepLog log;
    log.step = global_step;
    log.episodic_return = last_return;
    log.pg_loss = stats.pg_loss;
    log.value_loss = 0.0;  // no value network anywhere
    log.entropy = 0.0;
    log.clip_fraction = stats.clip_fraction;
    log.approx_kl = stats.approx_kl;
    history.push_back(log);

    if (after_update) after_update(global_step);
    if (stats.aborted) break;
  }
  return history;
}

}  // namespace ftrl
