#ifndef FTRL_CMAPPO_HPP
#define FTRL_CMAPPO_HPP

#include <memory>
#include <utility>

#include "ftrl/backbone.hpp"
#include "ftrl/ppo.hpp"

namespace ftrl {

struct CMAPPOConfig {
  int num_subagents = 10;  // n
  int aggregator_dim = 32;
  int subagent_hidden = 64;
  int head_hidden = 64;
  int value_hidden = 256;
  PPOConfig subagent;    // phase-1 per-subagent training
  PPOConfig superagent;  // phase-2 training

  void validate() const;
};

/// Contiguous blocks of ceil(N/n) feature columns per subagent, the last
/// block smaller if needed. n > N would leave an empty slice and is
/// rejected.
std::vector<std::pair<int, int>> partition_features(int num_features,
                                                    int num_subagents);

/// Column range [begin, end) of a rank-1 or rank-2 observation.
Tensor slice_columns(const Tensor& obs, int begin, int end);

/// View of an environment that exposes only a column slice of each
/// observation; rewards and dynamics pass through unchanged.
class SlicedObsEnv final : public Env {
 public:
  SlicedObsEnv(std::unique_ptr<Env> inner, int col_begin, int col_end);

  Tensor reset(std::uint64_t seed) override;
  StepResult step(const Tensor& action) override;
  int action_dim() const override { return inner_->action_dim(); }
  std::vector<int> observation_shape() const override;
  std::vector<double> peek_rewards(std::span<const Tensor> actions) const override;
  std::unique_ptr<Env> clone() const override;

 private:
  std::unique_ptr<Env> inner_;
  int begin_;
  int end_;
};

/// Learned attention fusion of the environment encoding with the subagent
/// actions: scalar scores from f_env/f_sub feed a softmax whose weights mix
/// the common-dimension encodings into the decision vector d_t. Scorer
/// weights start at zero (uniform attention), encoders start random.
class AttentionAggregator {
 public:
  AttentionAggregator(ParameterStore& store, const std::string& prefix,
                      int env_dim, int action_dim, int out_dim, Rng& rng);

  /// d_t node; `weights_out`, when given, receives the softmax weights node
  /// ([n+1], environment first).
  Var aggregate(GraphContext& ctx, Var env_encoding,
                std::span<const Var> subagent_actions,
                Var* weights_out = nullptr) const;

  int out_dim() const { return out_dim_; }

 private:
  int env_dim_, action_dim_, out_dim_;
  Parameter* score_env_w_;
  Parameter* score_env_b_;
  Parameter* score_sub_w_;  // shared across subagents
  Parameter* score_sub_b_;
  Parameter* enc_env_w_;
  Parameter* enc_env_b_;
  Parameter* enc_sub_w_;
  Parameter* enc_sub_b_;
};

/// Trained multi-agent stack: per-slice subagent policies plus the
/// attention-fused superagent (latent paradigm over d_t).
struct CmappoAgents {
  std::unique_ptr<ParameterStore> store;
  std::vector<std::shared_ptr<GaussianPolicy>> subagents;
  std::vector<std::shared_ptr<ValueHead>> subagent_values;
  std::shared_ptr<AttentionAggregator> aggregator;
  std::shared_ptr<GaussianPolicy> superagent;
  std::shared_ptr<ValueHead> superagent_value;
  std::vector<std::pair<int, int>> partition;
};

struct CmappoHooks {
  /// Overrides the phase-2 subagent action provider (must be a pure function
  /// of the observation). Used to inject oracle actions in tests.
  std::function<std::vector<Tensor>(const Tensor& obs)> subagent_actions;
  /// Skips phase 1 (only sensible together with subagent_actions).
  bool skip_subagent_training = false;
  UpdateHook after_update;  // phase-2 progress
};

struct CmappoResult {
  CmappoAgents agents;
  std::vector<std::vector<StepLog>> subagent_history;
  std::vector<StepLog> superagent_history;
};

/// Phase 1: trains each subagent with independent PPO on its feature slice.
/// Phase 2: freezes the subagents and trains the superagent (aggregator,
/// actor head, critic and, when provided, the unfrozen part of the backbone
/// supplying the environment encoding) with PPO on the environment reward.
CmappoResult cmappo_train(Env& env, Backbone* backbone, const CMAPPOConfig& config,
                          std::uint64_t seed, const CmappoHooks& hooks = {});

}  // namespace ftrl

#endif  // FTRL_CMAPPO_HPP
