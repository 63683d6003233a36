#ifndef FTRL_GRPO_HPP
#define FTRL_GRPO_HPP

#include <cstdint>
#include <vector>

#include "ftrl/ppo.hpp"

namespace ftrl {

struct GRPOConfig {
  int group_size = 8;       // G
  double std_floor = 1e-4;  // added to the group standard deviation
  double clip_eps = 0.2;
  double kl_coef = 0.0;          // beta; 0 disables the KL penalty
  int ref_refresh_interval = 1;  // update rounds between reference snapshots
  double lr = 3e-4;
  long total_timesteps = 500000;
  int steps_per_update = 256;  // observations per update round
  int update_epochs = 4;
  int minibatch_size = 64;
  double max_grad_norm = 0.5;

  void validate() const;
};

/// (r_i - mean(r)) / (population std(r) + std_floor). Sums to ~0 and has
/// unit scale whenever the spread dominates the floor.
std::vector<double> grpo_group_advantages(std::span<const double> rewards,
                                          double std_floor);

/// Closed-form KL(N(mean, exp(log_std)) || N(ref_mean, exp(ref_log_std)))
/// summed over dimensions, differentiable in mean and log_std.
Var diag_gaussian_kl(GraphContext& ctx, Var mean, Var log_std,
                     const Tensor& ref_mean, const Tensor& ref_log_std);

/// One observation with its sampled candidate group.
struct GrpoRow {
  Tensor observation;
  std::vector<Tensor> actions;
  std::vector<double> rewards;
  std::vector<double> log_probs;  // under the acting policy
};

struct GrpoBatch {
  std::vector<GrpoRow> rows;
  std::vector<double> episode_returns;  // from the advancing action
};

/// Collects num_obs observations; at each one samples G candidate actions,
/// scores them against the revealed truth via the environment's group
/// scoring hook, then advances with the first candidate.
GrpoBatch grpo_collect(Env& env, const GaussianPolicy& policy, int num_obs,
                       int group_size, std::uint64_t seed);

/// Snapshot of the acting policy for the optional KL penalty: per-row
/// reference means plus the reference log_std.
struct GrpoReference {
  std::vector<Tensor> means;  // aligned with batch rows
  Tensor log_std;
};

/// Group-relative update: per row, group advantages from the collected
/// rewards, group-averaged clipped surrogate, optional beta * KL to the
/// reference policy. No value network anywhere.
UpdateStats grpo_update(GaussianPolicy& policy, const GrpoBatch& batch,
                        const GRPOConfig& config, const GrpoReference* ref,
                        std::span<ParameterStore* const> stores, Rng& rng);

/// Collect/update loop until total_timesteps (counted in observations). The
/// reference policy refreshes every ref_refresh_interval rounds.
std::vector<StepLog> grpo_train(Env& env, GaussianPolicy& policy,
                                const GRPOConfig& config,
                                std::span<ParameterStore* const> stores,
                                std::uint64_t seed,
                                const UpdateHook& after_update = {});

}  // namespace ftrl

#endif  // FTRL_GRPO_HPP
