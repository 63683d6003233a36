#include "ftrl/finetune.hpp"

#include <algorithm>
#include <cmath>

namespace ftrl {

Paradigm paradigm_from_name(const std::string& name) {
  if (name == "actor") return Paradigm::kActor;
  if (name == "latent") return Paradigm::kLatent;
  throw ContractViolation("unknown paradigm: " + name);
}

std::string paradigm_name(Paradigm p) {
  return p == Paradigm::kActor ? "actor" : "latent";
}

Algorithm algorithm_from_name(const std::string& name) {
  if (name == "ppo") return Algorithm::kPPO;
  if (name == "cmappo") return Algorithm::kCMAPPO;
  if (name == "grpo") return Algorithm::kGRPO;
  throw ContractViolation("unknown algorithm: " + name);
}

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kPPO: return "ppo";
    case Algorithm::kCMAPPO: return "cmappo";
    case Algorithm::kGRPO: return "grpo";
  }
  return "?";
}

long FinetuneConfig::resolved_warmup() const {
  if (warmup_steps >= 0) return warmup_steps;
  return total_timesteps / 10;
}

long FinetuneConfig::resolved_eval_interval() const {
  if (eval_interval > 0) return eval_interval;
  return std::max<long>(1, total_timesteps / 8);
}

void FinetuneConfig::validate() const {
  if (frozen_fraction < 0.0 || frozen_fraction > 1.0) {
    throw ContractViolation("finetune config: frozen_fraction must be in [0, 1]");
  }
  if (total_timesteps < 0) {
    throw ContractViolation("finetune config: total_timesteps must be >= 0");
  }
  if (resolved_warmup() > total_timesteps) {
    throw ContractViolation("finetune config: warmup exceeds total timesteps");
  }
  if (episode_length < 1) {
    throw ContractViolation("finetune config: episode_length must be >= 1");
  }
}

EvalReport evaluate(const Backbone& model, const WindowedDataset& data,
                    std::span<const int> indices, std::string split_tag) {
  if (indices.empty()) {
    throw ContractViolation("evaluate: empty split '" + split_tag + "'");
  }
  double se = 0.0, ae = 0.0;
  for (int w : indices) {
    const Tensor pred = model.forward_predict(data.states[static_cast<std::size_t>(w)]);
    const Tensor& y = data.targets[static_cast<std::size_t>(w)];
    for (std::int64_t i = 0; i < y.numel(); ++i) {
      const double d = pred.at(i) - y.at(i);
      se += d * d;
      ae += std::abs(d);
    }
  }
  const double count = static_cast<double>(indices.size()) *
                       static_cast<double>(data.horizon);
  EvalReport r;
  r.mse = se / count;
  r.mae = ae / count;
  r.split = std::move(split_tag);
  r.window_count = static_cast<int>(indices.size());
  return r;
}

FinetuneAgent attach(Backbone& backbone, Paradigm paradigm,
                     const FinetuneConfig& config) {
  FinetuneAgent agent;
  agent.algorithm = config.algorithm;
  agent.paradigm = paradigm;
  agent.backbone = &backbone;
  agent.own_store = std::make_unique<ParameterStore>();

  if (config.algorithm == Algorithm::kCMAPPO) {
    if (paradigm == Paradigm::kActor) {
      throw ContractViolation(
          "CMAPPO's superagent acts on the aggregated decision vector, which "
          "does not match the backbone encoder input; only the latent "
          "paradigm is supported");
    }
    return agent;  // agents are assembled inside finetune()
  }

  Rng init(derive_seed(config.seed, "attach.init"));
  Backbone* bb = &backbone;
  const int action_dim = backbone.config().horizon;

  ObsFn mean_fn;
  if (paradigm == Paradigm::kActor) {
    mean_fn = [bb](GraphContext& ctx, const Tensor& obs) {
      return bb->build_forecast(ctx, ctx.input(obs));
    };
  } else {
    auto head = std::make_shared<Mlp>(
        *agent.own_store, "actor_head",
        std::vector<int>{backbone.config().model_dim, config.latent_actor_hidden,
                         action_dim},
        init);
    mean_fn = [bb, head](GraphContext& ctx, const Tensor& obs) {
      return head->forward(ctx, bb->build_latent(ctx, ctx.input(obs)));
    };
  }
  agent.policy = std::make_shared<GaussianPolicy>(*agent.own_store, "policy",
                                                  action_dim, std::move(mean_fn));

  if (config.algorithm == Algorithm::kPPO) {
    if (paradigm == Paradigm::kLatent) {
      auto vnet = std::make_shared<Mlp>(
          *agent.own_store, "critic",
          std::vector<int>{backbone.config().model_dim, 256, 256, 1}, init);
      agent.value = std::make_shared<ValueHead>(
          [bb, vnet](GraphContext& ctx, const Tensor& obs) {
            return vnet->forward(ctx, bb->build_latent(ctx, ctx.input(obs)));
          });
    } else {
      const int obs_numel =
          backbone.config().context_length * backbone.config().num_features;
      agent.value = std::make_shared<ValueHead>(
          make_mlp_value(*agent.own_store, "critic", obs_numel, init, 256));
    }
  }
  return agent;
}

namespace {

void freeze_entire_backbone(Backbone& backbone) {
  for (Parameter* p : backbone.params().all()) p->frozen = true;
}

// Fine-tuning starts with a fresh optimizer; this also makes runs started
// from an in-memory model and from its saved checkpoint identical.
void reset_optimizer_state(ParameterStore& store) {
  for (Parameter* p : store.all()) {
    p->adam_m = Tensor();
    p->adam_v = Tensor();
    p->adam_steps = 0;
  }
}

double mean_or(const std::vector<double>& xs, double fallback) {
  if (xs.empty()) return fallback;
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

FinetuneResult finetune_cmappo(FinetuneAgent& agent, const WindowedDataset& data,
                               const FinetuneConfig& config);

}  // namespace

FinetuneResult finetune(FinetuneAgent& agent, const WindowedDataset& data,
                        const FinetuneConfig& config) {
  config.validate();
  if (agent.backbone == nullptr) throw ContractViolation("agent has no backbone");
  if (!data.has_splits()) {
    throw ContractViolation("finetune: dataset must carry split tags");
  }
  if (agent.backbone->config().horizon != data.horizon) {
    throw ContractViolation(
        "finetune: backbone horizon " +
        std::to_string(agent.backbone->config().horizon) +
        " does not match dataset horizon " + std::to_string(data.horizon));
  }
  if (agent.algorithm == Algorithm::kCMAPPO) {
    return finetune_cmappo(agent, data, config);
  }

  Backbone& backbone = *agent.backbone;
  ForecastEnv env(data, data.train, config.episode_length, Traversal::kShuffled);

  FinetuneResult result;
  const long warmup = config.resolved_warmup();
  const long eval_every = config.resolved_eval_interval();

  EvalReport val = evaluate(backbone, data, data.validation, "validation");
  double best_mse = val.mse;

  if (config.total_timesteps > 0) {
    reset_optimizer_state(backbone.params());
    reset_optimizer_state(*agent.own_store);
    // Step-0 snapshot: the pre-fine-tuning model is the initial best.
    result.history.push_back(SnapshotRow{0, 0.0, val.mse, val.mae});
    std::vector<Parameter> best = backbone.params().snapshot();
    if (warmup > 0) {
      freeze_entire_backbone(backbone);
    } else {
      backbone.set_frozen_fraction(config.frozen_fraction);
    }

    std::vector<ParameterStore*> stores{agent.own_store.get(), &backbone.params()};
    Rng update_rng(derive_seed(config.seed, "finetune.update"));
    long step = 0;
    long last_eval = 0;
    std::uint64_t round = 0;
    bool warming = warmup > 0;
    double last_return = 0.0;

    while (step < config.total_timesteps) {
      UpdateStats stats;
      long batch_steps = 0;
      if (agent.algorithm == Algorithm::kPPO) {
        const RolloutBuffer buffer = collect_rollout(
            env, *agent.policy, agent.value.get(), config.ppo.num_steps,
            derive_seed(config.seed, "finetune.rollout", round));
        stats = ppo_update(*agent.policy, *agent.value, buffer, config.ppo,
                           stores, update_rng);
        batch_steps = static_cast<long>(buffer.size());
        last_return = mean_or(buffer.episode_returns, last_return);
      } else {
        const GrpoBatch batch = grpo_collect(
            env, *agent.policy, config.grpo.steps_per_update,
            config.grpo.group_size,
            derive_seed(config.seed, "finetune.rollout", round));
        // The reference policy refreshes every round (the default cadence),
        // so with kl_coef > 0 the reference is the collection policy itself.
        GrpoReference ref;
        const GrpoReference* ref_ptr = nullptr;
        if (config.grpo.kl_coef > 0.0) {
          ref.means.reserve(batch.rows.size());
          for (const GrpoRow& row : batch.rows) {
            ref.means.push_back(agent.policy->mean_action(row.observation));
          }
          ref.log_std = agent.policy->log_std_param().value;
          ref_ptr = &ref;
        }
        stats = grpo_update(*agent.policy, batch, config.grpo, ref_ptr, stores,
                            update_rng);
        batch_steps = static_cast<long>(batch.rows.size());
        last_return = mean_or(batch.episode_returns, last_return);
      }
      step += batch_steps;
      ++round;

      if (warming && step >= warmup) {
        backbone.set_frozen_fraction(config.frozen_fraction);
        warming = false;
      }

      if (stats.aborted) {
        result.diverged = true;
        break;
      }

      if (step - last_eval >= eval_every || step >= config.total_timesteps) {
        last_eval = step;
        val = evaluate(backbone, data, data.validation, "validation");
        result.history.push_back(SnapshotRow{step, last_return, val.mse, val.mae});
        if (val.mse < best_mse) {
          best_mse = val.mse;
          best = backbone.params().snapshot();
        }
      }
    }
    result.steps_run = step;
    backbone.params().restore(best);
  }

  result.best_val_mse = best_mse;
  result.final_validation = evaluate(backbone, data, data.validation, "validation");
  return result;
}

namespace {

FinetuneResult finetune_cmappo(FinetuneAgent& agent, const WindowedDataset& data,
                               const FinetuneConfig& config) {
  Backbone& backbone = *agent.backbone;
  ForecastEnv env(data, data.train, config.episode_length, Traversal::kShuffled);

  FinetuneResult result;
  EvalReport val = evaluate(backbone, data, data.validation, "validation");
  double best_mse = val.mse;

  if (config.total_timesteps > 0) {
    reset_optimizer_state(backbone.params());
    result.history.push_back(SnapshotRow{0, 0.0, val.mse, val.mae});
    std::vector<Parameter> best = backbone.params().snapshot();
    const long warmup = config.resolved_warmup();
    const long eval_every = config.resolved_eval_interval();
    freeze_entire_backbone(backbone);  // phase 1 + superagent warmup

    CMAPPOConfig cm = config.cmappo;
    cm.superagent.total_timesteps = config.total_timesteps;

    long last_eval = 0;
    bool warming = true;
    CmappoHooks hooks;
    hooks.after_update = [&](long step) {
      if (warming && step >= warmup) {
        backbone.set_frozen_fraction(config.frozen_fraction);
        warming = false;
      }
      if (step - last_eval >= eval_every || step >= config.total_timesteps) {
        last_eval = step;
        val = evaluate(backbone, data, data.validation, "validation");
        result.history.push_back(SnapshotRow{step, 0.0, val.mse, val.mae});
        if (val.mse < best_mse) {
          best_mse = val.mse;
          best = backbone.params().snapshot();
        }
      }
    };

    CmappoResult cm_result =
        cmappo_train(env, &backbone, cm, derive_seed(config.seed, "finetune.cmappo"),
                     hooks);
    result.steps_run = config.total_timesteps;
    // Backfill the episodic returns into the snapshot rows.
    std::size_t row = 1;
    for (const StepLog& log : cm_result.superagent_history) {
      while (row < result.history.size() &&
             result.history[row].timestep <= log.step) {
        result.history[row].mean_reward = log.episodic_return;
        ++row;
      }
    }
    backbone.params().restore(best);
  }

  result.best_val_mse = best_mse;
  result.final_validation = evaluate(backbone, data, data.validation, "validation");
  return result;
}

}  // namespace

}  // namespace ftrl
