#include "ftrl/cmappo.hpp"

#include <cmath>

#include "ftrl/ops.hpp"

namespace ftrl {

void CMAPPOConfig::validate() const {
  if (num_subagents < 1) {
    throw ContractViolation("cmappo config: num_subagents must be >= 1");
  }
  if (aggregator_dim < 1) {
    throw ContractViolation("cmappo config: aggregator_dim must be >= 1");
  }
  subagent.validate();
  superagent.validate();
}

std::vector<std::pair<int, int>> partition_features(int num_features,
                                                    int num_subagents) {
  if (num_subagents < 1) {
    throw ContractViolation("partition_features: need at least one subagent");
  }
  if (num_subagents > num_features) {
    throw ContractViolation("partition_features: " +
                            std::to_string(num_subagents) + " subagents over " +
                            std::to_string(num_features) +
                            " features leaves an empty slice");
  }
  const int block = (num_features + num_subagents - 1) / num_subagents;  // ceil
  std::vector<std::pair<int, int>> out;
  int begin = 0;
  for (int i = 0; i < num_subagents; ++i) {
    const int end = std::min(num_features, begin + block);
    out.emplace_back(begin, end);
    begin = end;
  }
  // ceil-sized blocks can exhaust the columns early; give trailing subagents
  // the last column rather than an empty slice.
  for (auto& [b, e] : out) {
    if (b >= e) {
      b = num_features - 1;
      e = num_features;
    }
  }
  return out;
}

Tensor slice_columns(const Tensor& obs, int begin, int end) {
  if (begin < 0 || end <= begin || end > obs.cols()) {
    throw ContractViolation("slice_columns: bad range [" + std::to_string(begin) +
                            ", " + std::to_string(end) + ") for " +
                            obs.shape_str());
  }
  const int rows = obs.rows();
  const int width = end - begin;
  if (obs.rank() == 1) {
    Tensor out = Tensor::zeros({width});
    for (int c = 0; c < width; ++c) out.at(c) = obs.at(begin + c);
    return out;
  }
  Tensor out = Tensor::zeros({rows, width});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < width; ++c) out.at(r, c) = obs.at(r, begin + c);
  }
  return out;
}

SlicedObsEnv::SlicedObsEnv(std::unique_ptr<Env> inner, int col_begin, int col_end)
    : inner_(std::move(inner)), begin_(col_begin), end_(col_end) {
  const auto shape = inner_->observation_shape();
  const int cols = shape.back();
  if (col_begin < 0 || col_end <= col_begin || col_end > cols) {
    throw ContractViolation("SlicedObsEnv: bad column range");
  }
}

Tensor SlicedObsEnv::reset(std::uint64_t seed) {
  return slice_columns(inner_->reset(seed), begin_, end_);
}

StepResult SlicedObsEnv::step(const Tensor& action) {
  StepResult r = inner_->step(action);
  r.observation = slice_columns(r.observation, begin_, end_);
  return r;
}

std::vector<int> SlicedObsEnv::observation_shape() const {
  auto shape = inner_->observation_shape();
  shape.back() = end_ - begin_;
  return shape;
}

std::vector<double> SlicedObsEnv::peek_rewards(
    std::span<const Tensor> actions) const {
  return inner_->peek_rewards(actions);
}

std::unique_ptr<Env> SlicedObsEnv::clone() const {
  return std::make_unique<SlicedObsEnv>(inner_->clone(), begin_, end_);
}

AttentionAggregator::AttentionAggregator(ParameterStore& store,
                                         const std::string& prefix, int env_dim,
                                         int action_dim, int out_dim, Rng& rng)
    : env_dim_(env_dim), action_dim_(action_dim), out_dim_(out_dim) {
  auto weight = [&](const std::string& name, int rows, int cols, bool zero) {
    Tensor w = Tensor::zeros({rows, cols});
    if (!zero) init_uniform_fanin(w, rows, rng);
    return &store.add(prefix + name, std::move(w));
  };
  score_env_w_ = weight(".score_env.w", env_dim, 1, true);
  score_env_b_ = &store.add(prefix + ".score_env.b", Tensor::zeros({1}));
  score_sub_w_ = weight(".score_sub.w", action_dim, 1, true);
  score_sub_b_ = &store.add(prefix + ".score_sub.b", Tensor::zeros({1}));
  enc_env_w_ = weight(".enc_env.w", env_dim, out_dim, false);
  enc_env_b_ = &store.add(prefix + ".enc_env.b", Tensor::zeros({out_dim}));
  enc_sub_w_ = weight(".enc_sub.w", action_dim, out_dim, false);
  enc_sub_b_ = &store.add(prefix + ".enc_sub.b", Tensor::zeros({out_dim}));
}

Var AttentionAggregator::aggregate(GraphContext& ctx, Var env_encoding,
                                   std::span<const Var> subagent_actions,
                                   Var* weights_out) const {
  if (env_encoding.value().numel() != env_dim_) {
    throw ContractViolation("aggregate: env encoding has " +
                            env_encoding.value().shape_str() + ", expected " +
                            std::to_string(env_dim_) + " elements");
  }
  if (subagent_actions.empty()) {
    throw ContractViolation("aggregate: need at least one subagent action");
  }
  for (const Var& a : subagent_actions) {
    if (a.value().numel() != action_dim_) {
      throw ContractViolation("aggregate: subagent action has " +
                              a.value().shape_str() + ", expected " +
                              std::to_string(action_dim_) + " elements");
    }
  }

  std::vector<Var> scores;
  scores.push_back(add(matmul(env_encoding, ctx.use(*score_env_w_)),
                       ctx.use(*score_env_b_)));
  for (const Var& a : subagent_actions) {
    scores.push_back(add(matmul(a, ctx.use(*score_sub_w_)), ctx.use(*score_sub_b_)));
  }
  Var weights = softmax(concat_cols(scores), 0);
  if (weights_out != nullptr) *weights_out = weights;

  std::vector<Var> encodings;
  encodings.push_back(
      add(matmul(env_encoding, ctx.use(*enc_env_w_)), ctx.use(*enc_env_b_)));
  for (const Var& a : subagent_actions) {
    encodings.push_back(add(matmul(a, ctx.use(*enc_sub_w_)), ctx.use(*enc_sub_b_)));
  }
  return matmul(weights, concat_rows(encodings));
}

CmappoResult cmappo_train(Env& env, Backbone* backbone, const CMAPPOConfig& config,
                          std::uint64_t seed, const CmappoHooks& hooks) {
  config.validate();
  const auto obs_shape = env.observation_shape();
  const int num_features = obs_shape.back();
  const int action_dim = env.action_dim();
  const auto partition = partition_features(num_features, config.num_subagents);

  CmappoResult result;
  result.agents.store = std::make_unique<ParameterStore>();
  ParameterStore& store = *result.agents.store;
  result.agents.partition = partition;
  Rng init(derive_seed(seed, "cmappo.init"));

  // Phase 1: independent PPO per subagent on its observation slice, each in
  // its own environment copy, rewarded by the environment's own signal.
  for (int i = 0; i < config.num_subagents; ++i) {
    const auto [b, e] = partition[static_cast<std::size_t>(i)];
    int slice_numel = e - b;
    for (std::size_t d = 0; d + 1 < obs_shape.size(); ++d) {
      slice_numel *= obs_shape[d];
    }
    const std::string name = "sub" + std::to_string(i);
    auto policy = std::make_shared<GaussianPolicy>(
        store, name + ".actor", action_dim,
        make_mlp_mean(store, name + ".actor.net", slice_numel, action_dim, init,
                      config.subagent_hidden));
    auto value = std::make_shared<ValueHead>(make_mlp_value(
        store, name + ".critic", slice_numel, init, config.subagent_hidden));
    result.agents.subagents.push_back(policy);
    result.agents.subagent_values.push_back(value);

    if (!hooks.skip_subagent_training) {
      SlicedObsEnv sub_env(env.clone(), b, e);
      ParameterStore* stores[] = {&store};
      result.subagent_history.push_back(
          ppo_train(sub_env, *policy, *value, config.subagent, stores,
                    derive_seed(seed, "cmappo.sub", static_cast<std::uint64_t>(i))));
    } else {
      result.subagent_history.emplace_back();
    }
  }

  // Phase 2: superagent over d_t. Subagent actions enter as constants (the
  // subagents are frozen); the environment encoding is the backbone latent
  // when a backbone is attached, otherwise the raw observation.
  const int env_dim = backbone != nullptr
                          ? backbone->config().model_dim
                          : [&] {
                              int n = 1;
                              for (int d : obs_shape) n *= d;
                              return n;
                            }();
  auto aggregator = std::make_shared<AttentionAggregator>(
      store, "super.agg", env_dim, action_dim, config.aggregator_dim, init);
  result.agents.aggregator = aggregator;

  auto head =
      std::make_shared<Mlp>(store, "super.head",
                            std::vector<int>{config.aggregator_dim,
                                             config.head_hidden, action_dim},
                            init);
  auto value_net = std::make_shared<Mlp>(
      store, "super.critic",
      std::vector<int>{config.aggregator_dim, config.value_hidden,
                       config.value_hidden, 1},
      init);

  auto subagent_actions = hooks.subagent_actions;
  if (!subagent_actions) {
    auto subs = result.agents.subagents;
    auto part = partition;
    subagent_actions = [subs, part](const Tensor& obs) {
      std::vector<Tensor> acts;
      acts.reserve(subs.size());
      for (std::size_t i = 0; i < subs.size(); ++i) {
        acts.push_back(subs[i]->mean_action(
            slice_columns(obs, part[i].first, part[i].second)));
      }
      return acts;
    };
  }

  auto build_dt = [backbone, aggregator, subagent_actions](
                      GraphContext& ctx, const Tensor& obs) -> Var {
    Var e = backbone != nullptr ? backbone->build_latent(ctx, ctx.input(obs))
                                : ctx.input(obs.flattened());
    const std::vector<Tensor> acts = subagent_actions(obs);
    std::vector<Var> act_nodes;
    act_nodes.reserve(acts.size());
    for (const Tensor& a : acts) act_nodes.push_back(ctx.input(a));
    return aggregator->aggregate(ctx, e, act_nodes);
  };

  auto superagent = std::make_shared<GaussianPolicy>(
      store, "super.actor", action_dim,
      [build_dt, head](GraphContext& ctx, const Tensor& obs) {
        return head->forward(ctx, build_dt(ctx, obs));
      });
  auto super_value = std::make_shared<ValueHead>(
      [build_dt, value_net](GraphContext& ctx, const Tensor& obs) {
        return value_net->forward(ctx, build_dt(ctx, obs));
      });
  result.agents.superagent = superagent;
  result.agents.superagent_value = super_value;

  std::vector<ParameterStore*> stores{&store};
  if (backbone != nullptr) stores.push_back(&backbone->params());
  result.superagent_history =
      ppo_train(env, *superagent, *super_value, config.superagent, stores,
                derive_seed(seed, "cmappo.super"), hooks.after_update);
  return result;
}

}  // namespace ftrl
