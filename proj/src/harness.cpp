#include "ftrl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ftrl/json_io.hpp"
#include "ftrl/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ftrl {

std::string code_version() { return kCodeVersion; }

std::uint64_t run_seed(std::uint64_t master, const std::string& label,
                       std::uint64_t index) {
  return derive_seed(master, label, index);
}

// --- config serialization ---

namespace {

template <typename T>
void get_if_present(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

json data_to_json(const DataConfig& c) {
  return json{{"preset", c.preset},       {"csv", c.csv},
              {"rows", c.rows},           {"context_length", c.context_length},
              {"horizon", c.horizon},     {"stride", c.stride},
              {"fractions", c.fractions}};
}

DataConfig data_from_json(const json& j) {
  DataConfig c;
  get_if_present(j, "preset", c.preset);
  get_if_present(j, "csv", c.csv);
  get_if_present(j, "rows", c.rows);
  get_if_present(j, "context_length", c.context_length);
  get_if_present(j, "horizon", c.horizon);
  get_if_present(j, "stride", c.stride);
  get_if_present(j, "fractions", c.fractions);
  return c;
}

json pretrain_to_json(const PretrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"lr", c.lr},
              {"batch_size", c.batch_size},
              {"final_lr_scale", c.final_lr_scale}};
}

PretrainConfig pretrain_from_json(const json& j) {
  PretrainConfig c;
  get_if_present(j, "epochs", c.epochs);
  get_if_present(j, "lr", c.lr);
  get_if_present(j, "batch_size", c.batch_size);
  get_if_present(j, "final_lr_scale", c.final_lr_scale);
  return c;
}

json ppo_to_json(const PPOConfig& c) {
  return json{{"gamma", c.gamma},
              {"gae_lambda", c.gae_lambda},
              {"clip_eps", c.clip_eps},
              {"update_epochs", c.update_epochs},
              {"minibatch_size", c.minibatch_size},
              {"lr", c.lr},
              {"entropy_coef", c.entropy_coef},
              {"value_coef", c.value_coef},
              {"max_grad_norm", c.max_grad_norm},
              {"total_timesteps", c.total_timesteps},
              {"num_steps", c.num_steps}};
}

PPOConfig ppo_from_json(const json& j) {
  PPOConfig c;
  get_if_present(j, "gamma", c.gamma);
  get_if_present(j, "gae_lambda", c.gae_lambda);
  get_if_present(j, "clip_eps", c.clip_eps);
  get_if_present(j, "update_epochs", c.update_epochs);
  get_if_present(j, "minibatch_size", c.minibatch_size);
  get_if_present(j, "lr", c.lr);
  get_if_present(j, "entropy_coef", c.entropy_coef);
  get_if_present(j, "value_coef", c.value_coef);
  get_if_present(j, "max_grad_norm", c.max_grad_norm);
  get_if_present(j, "total_timesteps", c.total_timesteps);
  get_if_present(j, "num_steps", c.num_steps);
  return c;
}

json grpo_to_json(const GRPOConfig& c) {
  return json{{"group_size", c.group_size},
              {"std_floor", c.std_floor},
              {"clip_eps", c.clip_eps},
              {"kl_coef", c.kl_coef},
              {"ref_refresh_interval", c.ref_refresh_interval},
              {"lr", c.lr},
              {"total_timesteps", c.total_timesteps},
              {"steps_per_update", c.steps_per_update},
              {"update_epochs", c.update_epochs},
              {"minibatch_size", c.minibatch_size},
              {"max_grad_norm", c.max_grad_norm}};
}

GRPOConfig grpo_from_json(const json& j) {
  GRPOConfig c;
  get_if_present(j, "group_size", c.group_size);
  get_if_present(j, "std_floor", c.std_floor);
  get_if_present(j, "clip_eps", c.clip_eps);
  get_if_present(j, "kl_coef", c.kl_coef);
  get_if_present(j, "ref_refresh_interval", c.ref_refresh_interval);
  get_if_present(j, "lr", c.lr);
  get_if_present(j, "total_timesteps", c.total_timesteps);
  get_if_present(j, "steps_per_update", c.steps_per_update);
  get_if_present(j, "update_epochs", c.update_epochs);
  get_if_present(j, "minibatch_size", c.minibatch_size);
  get_if_present(j, "max_grad_norm", c.max_grad_norm);
  return c;
}

json cmappo_to_json(const CMAPPOConfig& c) {
  return json{{"num_subagents", c.num_subagents},
              {"aggregator_dim", c.aggregator_dim},
              {"subagent_hidden", c.subagent_hidden},
              {"head_hidden", c.head_hidden},
              {"value_hidden", c.value_hidden},
              {"subagent", ppo_to_json(c.subagent)},
              {"superagent", ppo_to_json(c.superagent)}};
}

CMAPPOConfig cmappo_from_json(const json& j) {
  CMAPPOConfig c;
  get_if_present(j, "num_subagents", c.num_subagents);
  get_if_present(j, "aggregator_dim", c.aggregator_dim);
  get_if_present(j, "subagent_hidden", c.subagent_hidden);
  get_if_present(j, "head_hidden", c.head_hidden);
  get_if_present(j, "value_hidden", c.value_hidden);
  if (j.contains("subagent")) c.subagent = ppo_from_json(j.at("subagent"));
  if (j.contains("superagent")) c.superagent = ppo_from_json(j.at("superagent"));
  return c;
}

}  // namespace

json config_to_json(const ExperimentConfig& cfg) {
  json algorithm{{"name", algorithm_name(cfg.finetune.algorithm)},
                 {"ppo", ppo_to_json(cfg.finetune.ppo)},
                 {"grpo", grpo_to_json(cfg.finetune.grpo)},
                 {"cmappo", cmappo_to_json(cfg.finetune.cmappo)}};
  json finetune{{"paradigm", paradigm_name(cfg.finetune.paradigm)},
                {"frozen_fraction", cfg.finetune.frozen_fraction},
                {"total_timesteps", cfg.finetune.total_timesteps},
                {"warmup_steps", cfg.finetune.warmup_steps},
                {"eval_interval", cfg.finetune.eval_interval},
                {"episode_length", cfg.finetune.episode_length},
                {"latent_actor_hidden", cfg.finetune.latent_actor_hidden},
                {"lr", cfg.finetune.lr}};
  json harness{{"out_dir", cfg.out_dir},
               {"master_seed", cfg.master_seed},
               {"seeds", cfg.seeds}};
  return json{{"data", data_to_json(cfg.data)},
              {"backbone", json(cfg.backbone)},
              {"pretrain", pretrain_to_json(cfg.pretrain)},
              {"algorithm", algorithm},
              {"finetune", finetune},
              {"harness", harness}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("data")) cfg.data = data_from_json(j.at("data"));
  if (j.contains("backbone")) {
    // Partial backbone sections are allowed; unspecified fields keep defaults.
    json b = json(cfg.backbone);
    for (auto& [k, v] : j.at("backbone").items()) b[k] = v;
    cfg.backbone = b.get<BackboneConfig>();
  }
  if (j.contains("pretrain")) cfg.pretrain = pretrain_from_json(j.at("pretrain"));
  if (j.contains("algorithm")) {
    const json& a = j.at("algorithm");
    if (a.contains("name")) {
      cfg.finetune.algorithm = algorithm_from_name(a.at("name").get<std::string>());
    }
    if (a.contains("ppo")) cfg.finetune.ppo = ppo_from_json(a.at("ppo"));
    if (a.contains("grpo")) cfg.finetune.grpo = grpo_from_json(a.at("grpo"));
    if (a.contains("cmappo")) cfg.finetune.cmappo = cmappo_from_json(a.at("cmappo"));
  }
  if (j.contains("finetune")) {
    const json& f = j.at("finetune");
    if (f.contains("paradigm")) {
      cfg.finetune.paradigm = paradigm_from_name(f.at("paradigm").get<std::string>());
    }
    get_if_present(f, "frozen_fraction", cfg.finetune.frozen_fraction);
    get_if_present(f, "total_timesteps", cfg.finetune.total_timesteps);
    get_if_present(f, "warmup_steps", cfg.finetune.warmup_steps);
    get_if_present(f, "eval_interval", cfg.finetune.eval_interval);
    get_if_present(f, "episode_length", cfg.finetune.episode_length);
    get_if_present(f, "latent_actor_hidden", cfg.finetune.latent_actor_hidden);
    get_if_present(f, "lr", cfg.finetune.lr);
  }
  if (j.contains("harness")) {
    const json& h = j.at("harness");
    get_if_present(h, "out_dir", cfg.out_dir);
    get_if_present(h, "master_seed", cfg.master_seed);
    get_if_present(h, "seeds", cfg.seeds);
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("malformed config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

WindowedDataset build_dataset(const DataConfig& cfg, std::uint64_t seed) {
  SeriesFrame features;
  if (!cfg.csv.empty()) {
    features = build_features(load_csv(cfg.csv), cfg.fractions[0]);
  } else {
    features = make_preset(cfg.preset, cfg.rows, seed);
  }
  return split(make_windows(features, cfg.context_length, cfg.horizon, cfg.stride),
               cfg.fractions);
}

BackboneConfig resolve_backbone(const ExperimentConfig& cfg, int num_features) {
  BackboneConfig b = cfg.backbone;
  b.context_length = cfg.data.context_length;
  b.horizon = cfg.data.horizon;
  b.num_features = num_features;
  b.validate();
  return b;
}

// --- records ---

json record_to_json(const RunRecord& r) {
  return json{{"kind", r.kind},           {"spec", r.spec},
              {"version", r.version},     {"seed", r.seed},
              {"wall_clock_sec", r.wall_clock_sec},
              {"metrics", r.metrics},     {"final", r.final_metrics},
              {"status", r.status}};
}

RunRecord record_from_json(const json& j) {
  RunRecord r;
  j.at("kind").get_to(r.kind);
  r.spec = j.at("spec");
  get_if_present(j, "version", r.version);
  j.at("seed").get_to(r.seed);
  get_if_present(j, "wall_clock_sec", r.wall_clock_sec);
  if (j.contains("metrics")) r.metrics = j.at("metrics");
  if (j.contains("final")) r.final_metrics = j.at("final");
  get_if_present(j, "status", r.status);
  return r;
}

void save_record(const RunRecord& r, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / "record.json");
  if (!out) throw IoError("cannot write record under " + dir);
  out << record_to_json(r).dump(2) << "\n";
}

RunRecord load_record(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open record: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("malformed record " + path + ": " + e.what());
  }
  return record_from_json(j);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write CSV: " + path);
  for (std::size_t i = 0; i < header.size(); ++i) {
    out << (i ? "," : "") << header[i];
  }
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << (i ? "," : "") << row[i];
    }
    out << "\n";
  }
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

double elapsed_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

// --- experiments ---

PretrainOutcome run_pretrain(const ExperimentConfig& cfg, std::uint64_t seed,
                             const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t data_seed = run_seed(cfg.master_seed, "data", 0);
  const WindowedDataset data = build_dataset(cfg.data, data_seed);
  Backbone model(resolve_backbone(cfg, data.num_features),
                 run_seed(seed, "backbone.seed", 0));
  const auto history =
      pretrain(model, data, cfg.pretrain, run_seed(seed, "pretrain", 0));
  model.provenance = "pretrained on " +
                     (cfg.data.csv.empty() ? cfg.data.preset : cfg.data.csv);

  RunRecord rec;
  rec.kind = "pretrain";
  rec.spec = config_to_json(cfg);
  rec.version = code_version();
  rec.seed = seed;
  rec.metrics = json::array();
  for (const EpochStats& e : history) {
    rec.metrics.push_back(
        {{"epoch", e.epoch}, {"train_mse", e.train_mse}, {"val_mse", e.val_mse}});
  }
  const EvalReport val = evaluate(model, data, data.validation, "validation");
  const EvalReport test = evaluate(model, data, data.test, "test");
  rec.final_metrics = {{"val_mse", val.mse},
                       {"val_mae", val.mae},
                       {"test_mse", test.mse},
                       {"test_mae", test.mae}};
  rec.status = history.size() == static_cast<std::size_t>(cfg.pretrain.epochs)
                   ? "ok"
                   : "diverged";
  rec.wall_clock_sec = elapsed_since(t0);

  if (!out_dir.empty()) {
    save_record(rec, out_dir);
    std::vector<std::vector<std::string>> rows;
    for (const EpochStats& e : history) {
      rows.push_back({std::to_string(e.epoch), fmt(e.train_mse), fmt(e.val_mse)});
    }
    write_csv((fs::path(out_dir) / "history.csv").string(),
              {"epoch", "train_mse", "val_mse"}, rows);
    model.save((fs::path(out_dir) / "backbone.ftrl").string());
  }
  return PretrainOutcome{std::move(rec), std::move(model)};
}

FinetuneOutcome run_finetune(const ExperimentConfig& cfg, std::uint64_t seed,
                             const Backbone* base, const std::string& out_dir,
                             const std::string& base_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t data_seed = run_seed(cfg.master_seed, "data", 0);
  const WindowedDataset data = build_dataset(cfg.data, data_seed);

  std::optional<Backbone> model;
  if (base != nullptr) {
    model = *base;  // start from the provided pre-trained model
  } else {
    model = std::move(run_pretrain(cfg, seed).model);
  }
  if (model->config().context_length != data.context_length ||
      model->config().num_features != data.num_features ||
      model->config().horizon != data.horizon) {
    throw ContractViolation("backbone/dataset shape mismatch in run_finetune");
  }

  const EvalReport test_before = evaluate(*model, data, data.test, "test");

  FinetuneConfig fcfg = cfg.finetune;
  fcfg.seed = run_seed(seed, "finetune", 0);
  const double lr = fcfg.lr >= 0.0 ? fcfg.lr : cfg.pretrain.lr / 10.0;
  fcfg.ppo.lr = lr;
  fcfg.grpo.lr = lr;
  fcfg.cmappo.subagent.lr = lr;
  fcfg.cmappo.superagent.lr = lr;
  FinetuneAgent agent = attach(*model, fcfg.paradigm, fcfg);
  const FinetuneResult result = finetune(agent, data, fcfg);
  const EvalReport test_after = evaluate(*model, data, data.test, "test");

  RunRecord rec;
  rec.kind = "finetune";
  rec.spec = config_to_json(cfg);
  if (!base_path.empty()) rec.spec["backbone_checkpoint"] = base_path;
  rec.version = code_version();
  rec.seed = seed;
  rec.metrics = json::array();
  for (const SnapshotRow& row : result.history) {
    rec.metrics.push_back({{"timestep", row.timestep},
                           {"mean_reward", row.mean_reward},
                           {"val_mse", row.val_mse},
                           {"val_mae", row.val_mae}});
  }
  rec.final_metrics = {{"val_mse", result.final_validation.mse},
                       {"val_mae", result.final_validation.mae},
                       {"test_mse_before", test_before.mse},
                       {"test_mae_before", test_before.mae},
                       {"test_mse", test_after.mse},
                       {"test_mae", test_after.mae}};
  rec.status = result.diverged ? "diverged" : "ok";
  rec.wall_clock_sec = elapsed_since(t0);

  if (!out_dir.empty()) {
    save_record(rec, out_dir);
    std::vector<std::vector<std::string>> rows;
    for (const SnapshotRow& row : result.history) {
      rows.push_back({std::to_string(row.timestep), fmt(row.mean_reward),
                      fmt(row.val_mse), fmt(row.val_mae)});
    }
    write_csv((fs::path(out_dir) / "snapshots.csv").string(),
              {"timestep", "mean_reward", "val_mse", "val_mae"}, rows);
    model->save((fs::path(out_dir) / "backbone.ftrl").string());
  }
  return FinetuneOutcome{std::move(rec), std::move(*model), test_before,
                         test_after};
}

TransferReport run_transfer_matrix(const std::vector<std::string>& presets,
                                   const std::vector<Algorithm>& algorithms,
                                   const ExperimentConfig& cfg,
                                   const std::string& out_dir) {
  if (presets.size() < 2) {
    throw ContractViolation("transfer matrix needs at least 2 presets");
  }
  TransferReport report;

  for (const std::string& train_on : presets) {
    ExperimentConfig train_cfg = cfg;
    train_cfg.data.preset = train_on;
    train_cfg.data.csv.clear();
    const std::uint64_t pre_seed = run_seed(cfg.master_seed, "transfer." + train_on, 0);
    PretrainOutcome pre = run_pretrain(train_cfg, pre_seed);

    // Baseline row: the pre-trained model tested on every preset.
    for (const std::string& eval_on : presets) {
      TransferCell cell;
      cell.trained_on = train_on;
      cell.evaluated_on = eval_on;
      try {
        ExperimentConfig eval_cfg = cfg;
        eval_cfg.data.preset = eval_on;
        eval_cfg.data.csv.clear();
        const WindowedDataset eval_data =
            build_dataset(eval_cfg.data, run_seed(cfg.master_seed, "data", 0));
        const EvalReport r = evaluate(pre.model, eval_data, eval_data.test, "test");
        cell.mse = r.mse;
        cell.mae = r.mae;
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.status = e.what();
      }
      report.baseline.push_back(cell);
    }

    // Fine-tuned cells: one evaluation per (finetune target, algorithm), on
    // the fine-tuning preset's test split.
    for (const std::string& tune_on : presets) {
      for (const Algorithm algo : algorithms) {
        TransferCell cell;
        cell.trained_on = train_on;
        cell.finetuned_on = tune_on;
        cell.algorithm = algorithm_name(algo);
        cell.evaluated_on = tune_on;
        try {
          ExperimentConfig tune_cfg = cfg;
          tune_cfg.data.preset = tune_on;
          tune_cfg.data.csv.clear();
          tune_cfg.finetune.algorithm = algo;
          if (algo == Algorithm::kCMAPPO) {
            tune_cfg.finetune.paradigm = Paradigm::kLatent;
          }
          const std::uint64_t ft_seed = run_seed(
              cfg.master_seed, "transfer." + train_on + "." + tune_on + "." +
                                   algorithm_name(algo), 0);
          FinetuneOutcome out = run_finetune(tune_cfg, ft_seed, &pre.model);
          cell.mse = out.record.final_metrics.at("test_mse").get<double>();
          cell.mae = out.record.final_metrics.at("test_mae").get<double>();
          cell.ok = out.record.status == "ok";
          cell.status = out.record.status;
        } catch (const std::exception& e) {
          cell.status = e.what();
        }
        report.finetuned.push_back(cell);
      }
    }
  }

  if (!out_dir.empty()) {
    RunRecord rec;
    rec.kind = "transfer";
    rec.spec = config_to_json(cfg);
    rec.version = code_version();
    rec.seed = cfg.master_seed;
    json cells = json::array();
    auto push = [&cells](const TransferCell& c, bool base) {
      cells.push_back({{"matrix", base ? "baseline" : "finetuned"},
                       {"trained_on", c.trained_on},
                       {"finetuned_on", c.finetuned_on},
                       {"algorithm", c.algorithm},
                       {"evaluated_on", c.evaluated_on},
                       {"mse", c.mse},
                       {"mae", c.mae},
                       {"ok", c.ok},
                       {"status", c.status}});
    };
    for (const auto& c : report.baseline) push(c, true);
    for (const auto& c : report.finetuned) push(c, false);
    rec.metrics = cells;
    save_record(rec, out_dir);

    std::vector<std::vector<std::string>> rows;
    for (const auto& c : report.baseline) {
      rows.push_back({"baseline", c.trained_on, "", "", c.evaluated_on,
                      c.ok ? fmt(c.mse) : "", c.ok ? fmt(c.mae) : "",
                      c.ok ? "ok" : c.status});
    }
    for (const auto& c : report.finetuned) {
      rows.push_back({"finetuned", c.trained_on, c.finetuned_on, c.algorithm,
                      c.evaluated_on, c.ok ? fmt(c.mse) : "",
                      c.ok ? fmt(c.mae) : "", c.ok ? "ok" : c.status});
    }
    write_csv((fs::path(out_dir) / "transfer.csv").string(),
              {"matrix", "trained_on", "finetuned_on", "algorithm",
               "evaluated_on", "mse", "mae", "status"},
              rows);
  }
  return report;
}

std::vector<SweepRow> run_sweep(const std::string& parameter,
                                const std::vector<double>& values,
                                const ExperimentConfig& cfg,
                                const std::string& out_dir) {
  if (values.empty()) throw ContractViolation("sweep: no values given");
  const Algorithm algo = cfg.finetune.algorithm;
  const bool applicable =
      parameter == "total_timesteps" || parameter == "frozen_fraction" ||
      (parameter == "group_size" && algo == Algorithm::kGRPO) ||
      (parameter == "num_subagents" && algo == Algorithm::kCMAPPO);
  if (!applicable) {
    throw ContractViolation("sweep parameter '" + parameter +
                            "' is not applicable to " + algorithm_name(algo));
  }

  std::vector<SweepRow> rows;
  for (const std::uint64_t seed : cfg.seeds) {
    // One pre-trained model per seed, shared across the sweep values so the
    // cells differ only in the swept parameter.
    PretrainOutcome pre = run_pretrain(cfg, run_seed(seed, "sweep.pretrain", 0));
    for (std::size_t vi = 0; vi < values.size(); ++vi) {
      const double value = values[vi];
      SweepRow row;
      row.value = value;
      row.seed = seed;
      try {
        ExperimentConfig run_cfg = cfg;
        if (parameter == "total_timesteps") {
          run_cfg.finetune.total_timesteps = static_cast<long>(value);
        } else if (parameter == "frozen_fraction") {
          run_cfg.finetune.frozen_fraction = value;
        } else if (parameter == "group_size") {
          run_cfg.finetune.grpo.group_size = static_cast<int>(value);
        } else {
          run_cfg.finetune.cmappo.num_subagents = static_cast<int>(value);
        }
        FinetuneOutcome out = run_finetune(
            run_cfg, run_seed(seed, "sweep." + parameter, vi), &pre.model);
        row.mse = out.record.final_metrics.at("test_mse").get<double>();
        row.mae = out.record.final_metrics.at("test_mae").get<double>();
        row.ok = out.record.status == "ok";
      } catch (const std::exception&) {
        row.ok = false;
      }
      rows.push_back(row);
    }
  }

  if (!out_dir.empty()) {
    RunRecord rec;
    rec.kind = "sweep";
    rec.spec = config_to_json(cfg);
    rec.spec["sweep"] = {{"parameter", parameter}, {"values", values}};
    rec.version = code_version();
    rec.seed = cfg.master_seed;
    rec.metrics = json::array();
    for (const SweepRow& r : rows) {
      rec.metrics.push_back({{"value", r.value},
                             {"seed", r.seed},
                             {"mse", r.mse},
                             {"mae", r.mae},
                             {"ok", r.ok}});
    }
    save_record(rec, out_dir);
    std::vector<std::vector<std::string>> csv_rows;
    for (const SweepRow& r : rows) {
      csv_rows.push_back({fmt(r.value), std::to_string(r.seed),
                          r.ok ? fmt(r.mse) : "", r.ok ? fmt(r.mae) : "",
                          r.ok ? "ok" : "failed"});
    }
    write_csv((fs::path(out_dir) / "sweep.csv").string(),
              {parameter, "seed", "test_mse", "test_mae", "status"}, csv_rows);
  }
  return rows;
}

double evaluate_control_policy(Env& env, const GaussianPolicy* policy,
                               int episodes, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "bench.random"));
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    Tensor obs = env.reset(derive_seed(seed, "bench.eval", static_cast<std::uint64_t>(ep)));
    double ep_return = 0.0;
    while (true) {
      Tensor action;
      if (policy != nullptr) {
        action = policy->mean_action(obs);
      } else {
        action = Tensor::zeros({env.action_dim()});
        for (double& v : action.mutable_data()) v = rng.uniform(-1.0, 1.0);
      }
      const StepResult r = env.step(action);
      ep_return += r.reward;
      if (r.done) break;
      obs = r.observation;
    }
    total += ep_return;
  }
  return total / episodes;
}

namespace {

struct BenchRunOutcome {
  double final_return = 0.0;
  bool ok = false;
};

BenchRunOutcome bench_one(ControlVariant variant, Algorithm algo, long budget,
                          std::uint64_t seed, const ExperimentConfig& cfg) {
  ControlEnvConfig env_cfg;
  env_cfg.variant = variant;
  ControlEnv env(env_cfg);
  const int obs_dim = env.observation_shape().back();
  BenchRunOutcome out;

  try {
    Rng init(derive_seed(seed, "bench.init"));
    ParameterStore store;
    if (algo == Algorithm::kPPO) {
      PPOConfig pc = cfg.finetune.ppo;
      pc.total_timesteps = budget;
      GaussianPolicy policy(store, "actor", env.action_dim(),
                            make_mlp_mean(store, "actor.net", obs_dim,
                                          env.action_dim(), init, 64));
      ValueHead value = make_mlp_value(store, "critic", obs_dim, init, 64);
      ParameterStore* stores[] = {&store};
      const auto history = ppo_train(env, policy, value, pc, stores,
                                     derive_seed(seed, "bench.train"));
      if (!history.empty()) {
        ControlEnv eval_env(env_cfg);
        out.final_return = evaluate_control_policy(eval_env, &policy, 10, seed);
        out.ok = true;
      }
    } else if (algo == Algorithm::kGRPO) {
      GRPOConfig gc = cfg.finetune.grpo;
      gc.total_timesteps = budget;
      GaussianPolicy policy(store, "actor", env.action_dim(),
                            make_mlp_mean(store, "actor.net", obs_dim,
                                          env.action_dim(), init, 64));
      ParameterStore* stores[] = {&store};
      const auto history = grpo_train(env, policy, gc, stores,
                                      derive_seed(seed, "bench.train"));
      if (!history.empty()) {
        ControlEnv eval_env(env_cfg);
        out.final_return = evaluate_control_policy(eval_env, &policy, 10, seed);
        out.ok = true;
      }
    } else {
      CMAPPOConfig cc = cfg.finetune.cmappo;
      // A valid partition for the benchmark observation width.
      cc.num_subagents = std::min(cc.num_subagents, obs_dim);
      cc.subagent_hidden = 64;
      cc.head_hidden = 64;
      cc.value_hidden = 64;
      cc.subagent.total_timesteps =
          std::max<long>(cc.subagent.num_steps,
                         budget / (2 * std::max(1, cc.num_subagents)));
      cc.superagent.total_timesteps = std::max<long>(cc.superagent.num_steps,
                                                     budget / 2);
      CmappoResult r = cmappo_train(env, nullptr, cc,
                                    derive_seed(seed, "bench.train"));
      if (!r.superagent_history.empty()) {
        ControlEnv eval_env(env_cfg);
        out.final_return =
            evaluate_control_policy(eval_env, r.agents.superagent.get(), 10, seed);
        out.ok = true;
      }
    }
  } catch (const std::exception&) {
    out.ok = false;
  }
  return out;
}

}  // namespace

std::vector<BenchRow> run_bench(ControlVariant variant,
                                const std::vector<Algorithm>& algorithms,
                                long budget, const std::vector<std::uint64_t>& seeds,
                                const ExperimentConfig& cfg,
                                const std::string& out_dir) {
  if (seeds.empty()) throw ContractViolation("bench: no seeds");
  std::vector<BenchRow> rows;

  // Uniform-random baseline, always included.
  {
    BenchRow row;
    row.algorithm = "random";
    std::vector<double> returns;
    for (const std::uint64_t seed : seeds) {
      ControlEnvConfig env_cfg;
      env_cfg.variant = variant;
      ControlEnv env(env_cfg);
      returns.push_back(evaluate_control_policy(env, nullptr, 10, seed));
    }
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= static_cast<double>(returns.size());
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    row.mean_return = mean;
    row.std_return = std::sqrt(var / static_cast<double>(returns.size()));
    row.seeds_ok = static_cast<int>(returns.size());
    rows.push_back(row);
  }

  for (const Algorithm algo : algorithms) {
    BenchRow row;
    row.algorithm = algorithm_name(algo);
    std::vector<double> returns;
    for (const std::uint64_t seed : seeds) {
      const BenchRunOutcome out = bench_one(variant, algo, budget, seed, cfg);
      if (out.ok) {
        returns.push_back(out.final_return);
        ++row.seeds_ok;
      } else {
        ++row.seeds_failed;
      }
    }
    if (!returns.empty()) {
      double mean = 0.0;
      for (double r : returns) mean += r;
      mean /= static_cast<double>(returns.size());
      double var = 0.0;
      for (double r : returns) var += (r - mean) * (r - mean);
      row.mean_return = mean;
      row.std_return = std::sqrt(var / static_cast<double>(returns.size()));
    }
    rows.push_back(row);
  }

  if (!out_dir.empty()) {
    RunRecord rec;
    rec.kind = "bench";
    rec.spec = config_to_json(cfg);
    rec.spec["bench"] = {{"env", control_variant_name(variant)},
                         {"budget", budget},
                         {"seeds", seeds}};
    rec.version = code_version();
    rec.seed = seeds.front();
    rec.metrics = json::array();
    for (const BenchRow& r : rows) {
      rec.metrics.push_back({{"algorithm", r.algorithm},
                             {"mean_return", r.mean_return},
                             {"std_return", r.std_return},
                             {"seeds_ok", r.seeds_ok},
                             {"seeds_failed", r.seeds_failed}});
    }
    save_record(rec, out_dir);
    std::vector<std::vector<std::string>> csv_rows;
    for (const BenchRow& r : rows) {
      csv_rows.push_back({r.algorithm, fmt(r.mean_return), fmt(r.std_return),
                          std::to_string(r.seeds_ok),
                          std::to_string(r.seeds_failed)});
    }
    write_csv((fs::path(out_dir) / "bench.csv").string(),
              {"algorithm", "mean_return", "std_return", "seeds_ok",
               "seeds_failed"},
              csv_rows);
  }
  return rows;
}

// --- reporting ---

namespace {

std::vector<std::string> preset_order(const std::set<std::string>& names) {
  std::vector<std::string> out;
  for (const std::string& p : synth_preset_names()) {
    if (names.count(p)) out.push_back(p);
  }
  for (const std::string& n : names) {
    if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
  }
  return out;
}

void render_transfer(const RunRecord& rec, std::ostream& os) {
  struct Key {
    std::string row, col;
    bool operator<(const Key& o) const {
      return row != o.row ? row < o.row : col < o.col;
    }
  };
  std::map<Key, std::pair<double, double>> baseline;
  std::map<std::string, std::map<Key, std::pair<double, double>>> tuned;
  std::set<std::string> presets;
  for (const auto& c : rec.metrics) {
    const std::string trained = c.at("trained_on").get<std::string>();
    const std::string eval_on = c.at("evaluated_on").get<std::string>();
    presets.insert(trained);
    presets.insert(eval_on);
    if (!c.value("ok", false)) continue;  // failed cells render as absent
    const auto mm = std::make_pair(c.at("mse").get<double>(),
                                   c.at("mae").get<double>());
    if (c.at("matrix").get<std::string>() == "baseline") {
      baseline[{eval_on, trained}] = mm;
    } else {
      tuned[c.at("algorithm").get<std::string>()]
           [{c.at("finetuned_on").get<std::string>(), trained}] = mm;
    }
  }
  const auto order = preset_order(presets);

  auto render_matrix =
      [&](const std::string& title, const std::string& row_label,
          const std::map<Key, std::pair<double, double>>& cells) {
        os << "### " << title << "\n\n|" << row_label << "|";
        for (const auto& p : order) os << p << " MSE|" << p << " MAE|";
        os << "\n|---|";
        for (std::size_t i = 0; i < order.size(); ++i) os << "---|---|";
        os << "\n";
        // Best (lowest) value per column.
        std::map<std::string, double> best_mse, best_mae;
        for (const auto& col : order) {
          for (const auto& row : order) {
            auto it = cells.find({row, col});
            if (it == cells.end()) continue;
            if (!best_mse.count(col) || it->second.first < best_mse[col]) {
              best_mse[col] = it->second.first;
            }
            if (!best_mae.count(col) || it->second.second < best_mae[col]) {
              best_mae[col] = it->second.second;
            }
          }
        }
        for (const auto& row : order) {
          os << "|" << row << "|";
          for (const auto& col : order) {
            auto it = cells.find({row, col});
            if (it == cells.end()) {
              os << "—|—|";
              continue;
            }
            const auto [mse, mae] = it->second;
            const bool bm = mse == best_mse[col];
            const bool ba = mae == best_mae[col];
            os << (bm ? "**" : "") << fmt4(mse) << (bm ? "**" : "") << "|"
               << (ba ? "**" : "") << fmt4(mae) << (ba ? "**" : "") << "|";
          }
          os << "\n";
        }
        os << "\n";
      };

  render_matrix("Transfer baseline (trained on → tested on)", "tested on",
                baseline);
  for (const auto& [algo, cells] : tuned) {
    render_matrix("Transfer after fine-tuning with " + algo +
                      " (trained on → fine-tuned/tested on)",
                  "fine-tuned on", cells);
  }
}

void render_sweep(const RunRecord& rec, std::ostream& os) {
  const std::string param =
      rec.spec.contains("sweep")
          ? rec.spec.at("sweep").value("parameter", std::string("value"))
          : "value";
  std::map<double, std::vector<std::pair<double, double>>> by_value;
  for (const auto& r : rec.metrics) {
    if (!r.value("ok", false)) continue;
    by_value[r.at("value").get<double>()].push_back(
        {r.at("mse").get<double>(), r.at("mae").get<double>()});
  }
  os << "### Sweep over " << param << "\n\n|" << param
     << "|test MSE|test MAE|seeds|\n|---|---|---|---|\n";
  double best = 0.0;
  bool have_best = false;
  for (const auto& [v, ms] : by_value) {
    double mse = 0.0;
    for (const auto& [m, a] : ms) mse += m;
    mse /= static_cast<double>(ms.size());
    if (!have_best || mse < best) {
      best = mse;
      have_best = true;
    }
  }
  for (const auto& [v, ms] : by_value) {
    double mse = 0.0, mae = 0.0;
    for (const auto& [m, a] : ms) {
      mse += m;
      mae += a;
    }
    mse /= static_cast<double>(ms.size());
    mae /= static_cast<double>(ms.size());
    const bool is_best = mse == best;
    os << "|" << fmt4(v) << "|" << (is_best ? "**" : "") << fmt4(mse)
       << (is_best ? "**" : "") << "|" << fmt4(mae) << "|" << ms.size()
       << "|\n";
  }
  os << "\n";
}

void render_bench(const RunRecord& rec, std::ostream& os) {
  const std::string env = rec.spec.contains("bench")
                              ? rec.spec.at("bench").value("env", std::string())
                              : "";
  os << "### Benchmark on " << env
     << " (higher is better)\n\n|algorithm|mean return|std|seeds ok|seeds "
        "failed|\n|---|---|---|---|---|\n";
  double best = 0.0;
  bool have_best = false;
  for (const auto& r : rec.metrics) {
    if (r.value("seeds_ok", 0) == 0) continue;
    const double m = r.at("mean_return").get<double>();
    if (!have_best || m > best) {
      best = m;
      have_best = true;
    }
  }
  for (const auto& r : rec.metrics) {
    const bool ok = r.value("seeds_ok", 0) > 0;
    const double m = r.at("mean_return").get<double>();
    const bool is_best = ok && m == best;
    os << "|" << r.at("algorithm").get<std::string>() << "|"
       << (ok ? (is_best ? "**" + fmt4(m) + "**" : fmt4(m)) : std::string("—"))
       << "|" << (ok ? fmt4(r.at("std_return").get<double>()) : std::string("—"))
       << "|" << r.value("seeds_ok", 0) << "|" << r.value("seeds_failed", 0)
       << "|\n";
  }
  os << "\n";
}

void render_scalar_run(const RunRecord& rec, std::ostream& os) {
  os << "### " << rec.kind << " (seed " << rec.seed << ", " << rec.status
     << ")\n\n|metric|value|\n|---|---|\n";
  for (const auto& [k, v] : rec.final_metrics.items()) {
    os << "|" << k << "|";
    if (v.is_number()) {
      os << fmt4(v.get<double>());
    } else {
      os << v.dump();
    }
    os << "|\n";
  }
  os << "\n";
}

}  // namespace

std::string emit_report(const std::string& run_dir) {
  if (!fs::exists(run_dir)) throw IoError("run directory not found: " + run_dir);
  std::vector<std::string> record_paths;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "record.json") {
      record_paths.push_back(entry.path().string());
    }
  }
  if (record_paths.empty()) {
    throw IoError("no run records under " + run_dir);
  }
  std::sort(record_paths.begin(), record_paths.end());

  std::ostringstream os;
  os << "# Experiment report\n\n";
  for (const std::string& path : record_paths) {
    const RunRecord rec = load_record(path);
    if (rec.kind == "transfer") {
      render_transfer(rec, os);
    } else if (rec.kind == "sweep") {
      render_sweep(rec, os);
    } else if (rec.kind == "bench") {
      render_bench(rec, os);
    } else {
      render_scalar_run(rec, os);
    }
  }
  const std::string markdown = os.str();
  std::ofstream out(fs::path(run_dir) / "report.md");
  out << markdown;
  return markdown;
}

RunRecord replay_run(const RunRecord& record) {
  const ExperimentConfig cfg = config_from_json(record.spec);
  if (record.kind == "pretrain") {
    return run_pretrain(cfg, record.seed).record;
  }
  if (record.kind == "finetune") {
    if (record.spec.contains("backbone_checkpoint")) {
      const std::string path =
          record.spec.at("backbone_checkpoint").get<std::string>();
      const Backbone base = Backbone::load(path);
      return run_finetune(cfg, record.seed, &base, {}, path).record;
    }
    return run_finetune(cfg, record.seed).record;
  }
  if (record.kind == "bench") {
    const auto& b = record.spec.at("bench");
    std::vector<Algorithm> algos{cfg.finetune.algorithm};
    auto rows = run_bench(control_variant_from_name(b.at("env").get<std::string>()),
                          algos, b.at("budget").get<long>(),
                          b.at("seeds").get<std::vector<std::uint64_t>>(), cfg);
    RunRecord rec = record;
    rec.metrics = json::array();
    for (const BenchRow& r : rows) {
      rec.metrics.push_back({{"algorithm", r.algorithm},
                             {"mean_return", r.mean_return},
                             {"std_return", r.std_return}});
    }
    return rec;
  }
  throw ContractViolation("replay not supported for kind '" + record.kind + "'");
}

}  // namespace ftrl
