#ifndef FTRL_FINETUNE_HPP
#define FTRL_FINETUNE_HPP

#include <memory>
#include <optional>
#include <string>

#include "ftrl/backbone.hpp"
#include "ftrl/cmappo.hpp"
#include "ftrl/grpo.hpp"
#include "ftrl/ppo.hpp"

namespace ftrl {

enum class Paradigm { kActor, kLatent };
enum class Algorithm { kPPO, kCMAPPO, kGRPO };

Paradigm paradigm_from_name(const std::string& name);
std::string paradigm_name(Paradigm p);
Algorithm algorithm_from_name(const std::string& name);
std::string algorithm_name(Algorithm a);

struct FinetuneConfig {
  Algorithm algorithm = Algorithm::kGRPO;
  Paradigm paradigm = Paradigm::kActor;
  double frozen_fraction = 0.5;
  long total_timesteps = 20000;
  /// Steps with the whole backbone frozen so the heads adapt first.
  /// Negative means the default of 10% of total_timesteps.
  long warmup_steps = -1;
  /// Timesteps between validation snapshots; <= 0 picks total/8.
  long eval_interval = -1;
  int episode_length = 128;
  int latent_actor_hidden = 64;
  /// Fine-tuning learning rate; negative means "pretraining lr / 10",
  /// resolved by the harness before the run starts.
  double lr = -1.0;
  std::uint64_t seed = 0;

  PPOConfig ppo;
  GRPOConfig grpo;
  CMAPPOConfig cmappo;

  long resolved_warmup() const;
  long resolved_eval_interval() const;
  void validate() const;
};

struct EvalReport {
  double mse = 0.0;
  double mae = 0.0;
  std::string split;
  int window_count = 0;
};

/// Evaluation-mode forecast errors over the given windows: MSE and MAE
/// averaged over windows * horizon elements.
EvalReport evaluate(const Backbone& model, const WindowedDataset& data,
                    std::span<const int> indices, std::string split_tag);

/// A backbone wired into an algorithm under a paradigm. For PPO/GRPO the
/// policy and (for PPO) the critic are ready to act; CMAPPO assembles its
/// agents inside finetune(). Heads and log_std live in `own_store`, the
/// backbone keeps its own store.
struct FinetuneAgent {
  Algorithm algorithm = Algorithm::kPPO;
  Paradigm paradigm = Paradigm::kActor;
  Backbone* backbone = nullptr;
  std::unique_ptr<ParameterStore> own_store;
  std::shared_ptr<GaussianPolicy> policy;
  std::shared_ptr<ValueHead> value;  // absent for GRPO
};

/// Composes the policy/critic around the backbone. Actor paradigm: the
/// backbone's projection head is the policy mean and the critic reads the
/// flattened observation. Latent paradigm: a separate actor head and the
/// critic both read the backbone latent, so both losses reach the backbone.
/// The CMAPPO superagent is latent-only; requesting the actor paradigm with
/// CMAPPO is rejected.
FinetuneAgent attach(Backbone& backbone, Paradigm paradigm,
                     const FinetuneConfig& config);

struct SnapshotRow {
  long timestep = 0;
  double mean_reward = 0.0;
  double val_mse = 0.0;
  double val_mae = 0.0;
};

struct FinetuneResult {
  std::vector<SnapshotRow> history;
  EvalReport final_validation;
  long steps_run = 0;
  bool diverged = false;
  double best_val_mse = 0.0;
};

/// Fine-tunes the agent's backbone on the dataset's train split: warmup with
/// the backbone fully frozen, then the configured frozen fraction until
/// total_timesteps. Periodic validation snapshots are recorded and the
/// best-validation parameters are restored at the end (so the returned model
/// is never worse on validation than any retained snapshot). A non-finite
/// loss stops the run, restores the best checkpoint and flags the result.
FinetuneResult finetune(FinetuneAgent& agent, const WindowedDataset& data,
                        const FinetuneConfig& config);

}  // namespace ftrl

#endif  // FTRL_FINETUNE_HPP
