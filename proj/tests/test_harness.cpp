#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ftrl/harness.hpp"

using namespace ftrl;
namespace fs = std::filesystem;

namespace {

// Desk-scale settings so harness round trips stay fast.
ExperimentConfig tiny_experiment() {
  ExperimentConfig cfg;
  cfg.data.preset = "synth-financial";
  cfg.data.rows = 200;
  cfg.data.context_length = 6;
  cfg.data.horizon = 2;
  cfg.backbone.model_dim = 16;
  cfg.backbone.num_heads = 2;
  cfg.backbone.num_layers = 2;
  cfg.backbone.ff_dim = 32;
  cfg.pretrain.epochs = 2;
  cfg.pretrain.batch_size = 32;
  cfg.finetune.algorithm = Algorithm::kGRPO;
  cfg.finetune.paradigm = Paradigm::kActor;
  cfg.finetune.total_timesteps = 96;
  cfg.finetune.warmup_steps = 0;
  cfg.finetune.episode_length = 32;
  cfg.finetune.grpo.steps_per_update = 32;
  cfg.finetune.grpo.group_size = 4;
  cfg.finetune.grpo.update_epochs = 1;
  cfg.finetune.grpo.minibatch_size = 16;
  cfg.finetune.ppo.num_steps = 32;
  cfg.finetune.ppo.minibatch_size = 16;
  cfg.finetune.ppo.update_epochs = 1;
  cfg.seeds = {1};
  return cfg;
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE_BEGIN("harness");

TEST_CASE("config survives a JSON round trip") {
  ExperimentConfig cfg = tiny_experiment();
  cfg.finetune.frozen_fraction = 0.75;
  cfg.finetune.grpo.group_size = 10;
  cfg.master_seed = 777;
  const auto j = config_to_json(cfg);
  const ExperimentConfig back = config_from_json(j);
  CHECK(back.data.preset == cfg.data.preset);
  CHECK(back.data.rows == cfg.data.rows);
  CHECK(back.backbone.model_dim == cfg.backbone.model_dim);
  CHECK(back.finetune.frozen_fraction == cfg.finetune.frozen_fraction);
  CHECK(back.finetune.grpo.group_size == 10);
  CHECK(back.master_seed == 777);
  CHECK(algorithm_name(back.finetune.algorithm) == "grpo");
}

TEST_CASE("load_config applies partial sections over defaults") {
  const auto dir = temp_dir("ftrl_cfg");
  const auto path = (dir / "cfg.json").string();
  {
    std::ofstream out(path);
    out << R"({
      "data": {"preset": "synth-technology", "rows": 300},
      "algorithm": {"name": "ppo", "ppo": {"lr": 0.001}},
      "finetune": {"frozen_fraction": 0.25},
      "harness": {"master_seed": 9}
    })";
  }
  const ExperimentConfig cfg = load_config(path);
  CHECK(cfg.data.preset == "synth-technology");
  CHECK(cfg.data.rows == 300);
  CHECK(cfg.data.context_length == 32);  // default retained
  CHECK(cfg.finetune.algorithm == Algorithm::kPPO);
  CHECK(cfg.finetune.ppo.lr == 0.001);
  CHECK(cfg.finetune.ppo.clip_eps == 0.2);  // default retained
  CHECK(cfg.finetune.frozen_fraction == 0.25);
  CHECK(cfg.master_seed == 9);
  CHECK(cfg.finetune.grpo.group_size == 8);       // wired default
  CHECK(cfg.finetune.cmappo.num_subagents == 10);  // wired default

  CHECK_THROWS_AS(load_config((dir / "missing.json").string()), IoError);
}

TEST_CASE("datasets build deterministically from config") {
  ExperimentConfig cfg = tiny_experiment();
  const WindowedDataset a = build_dataset(cfg.data, 5);
  const WindowedDataset b = build_dataset(cfg.data, 5);
  REQUIRE(a.size() == b.size());
  CHECK(a.has_splits());
  CHECK(bit_equal(a.states[3], b.states[3]));
  CHECK(bit_equal(a.targets[3], b.targets[3]));
}

TEST_CASE("pretrain records persist and replay bit-identically") {
  const auto dir = temp_dir("ftrl_pre");
  ExperimentConfig cfg = tiny_experiment();
  const PretrainOutcome out = run_pretrain(cfg, 11, dir.string());
  CHECK(fs::exists(dir / "record.json"));
  CHECK(fs::exists(dir / "history.csv"));
  CHECK(fs::exists(dir / "backbone.ftrl"));

  const RunRecord loaded = load_record((dir / "record.json").string());
  CHECK(loaded.kind == "pretrain");
  CHECK(loaded.seed == 11);
  const RunRecord again = replay_run(loaded);
  CHECK(again.final_metrics.at("val_mse").get<double>() ==
        loaded.final_metrics.at("val_mse").get<double>());
  CHECK(again.final_metrics.at("test_mse").get<double>() ==
        loaded.final_metrics.at("test_mse").get<double>());
}

TEST_CASE("finetune records replay bit-identically") {
  const auto dir = temp_dir("ftrl_ft");
  ExperimentConfig cfg = tiny_experiment();
  const FinetuneOutcome out = run_finetune(cfg, 21, nullptr, dir.string());
  const RunRecord loaded = load_record((dir / "record.json").string());
  const RunRecord again = replay_run(loaded);
  for (const char* key : {"val_mse", "val_mae", "test_mse", "test_mae"}) {
    CHECK(again.final_metrics.at(key).get<double>() ==
          loaded.final_metrics.at(key).get<double>());
  }
  CHECK(fs::exists(dir / "snapshots.csv"));
}

TEST_CASE("finetune records replay from a checkpoint file") {
  const auto dir = temp_dir("ftrl_ftck");
  ExperimentConfig cfg = tiny_experiment();
  const PretrainOutcome pre = run_pretrain(cfg, 31);
  const std::string ck = (dir / "base.ftrl").string();
  pre.model.save(ck);

  const FinetuneOutcome out =
      run_finetune(cfg, 32, &pre.model, dir.string(), ck);
  const RunRecord loaded = load_record((dir / "record.json").string());
  CHECK(loaded.spec.contains("backbone_checkpoint"));
  const RunRecord again = replay_run(loaded);
  CHECK(again.final_metrics.at("test_mse").get<double>() ==
        loaded.final_metrics.at("test_mse").get<double>());
}

TEST_CASE("sweep emits one row per value per seed and validates parameters") {
  ExperimentConfig cfg = tiny_experiment();
  cfg.seeds = {3, 4};
  const auto dir = temp_dir("ftrl_sweep");
  const auto rows =
      run_sweep("group_size", {2.0, 4.0}, cfg, dir.string());
  CHECK(rows.size() == 4);  // |values| * |seeds|
  for (const auto& r : rows) CHECK(r.ok);
  CHECK(fs::exists(dir / "sweep.csv"));

  ExperimentConfig single = tiny_experiment();
  single.seeds = {7};
  CHECK(run_sweep("frozen_fraction", {0.5}, single).size() == 1);

  ExperimentConfig ppo_cfg = tiny_experiment();
  ppo_cfg.finetune.algorithm = Algorithm::kPPO;
  CHECK_THROWS_AS(run_sweep("group_size", {2.0}, ppo_cfg), ContractViolation);
  CHECK_THROWS_AS(run_sweep("group_size", {}, tiny_experiment()),
                  ContractViolation);
}

TEST_CASE("transfer matrix covers both matrices and renders") {
  ExperimentConfig cfg = tiny_experiment();
  cfg.pretrain.epochs = 1;
  cfg.finetune.total_timesteps = 64;
  const auto dir = temp_dir("ftrl_transfer");
  const std::vector<std::string> presets{"synth-financial", "synth-industrials"};
  const TransferReport report =
      run_transfer_matrix(presets, {Algorithm::kGRPO}, cfg, dir.string());
  CHECK(report.baseline.size() == 4);   // 2 train x 2 eval
  CHECK(report.finetuned.size() == 4);  // 2 train x 2 finetune x 1 algo
  for (const auto& c : report.baseline) CHECK(c.ok);
  for (const auto& c : report.finetuned) {
    CHECK(c.ok);
    CHECK(c.evaluated_on == c.finetuned_on);
  }
  CHECK_THROWS_AS(run_transfer_matrix({"synth-financial"}, {Algorithm::kGRPO}, cfg),
                  ContractViolation);

  const std::string md = emit_report(dir.string());
  CHECK(md.find("Transfer baseline") != std::string::npos);
  CHECK(md.find("grpo") != std::string::npos);
  CHECK(md.find("synth-financial") != std::string::npos);
  CHECK(fs::exists(dir / "report.md"));
  CHECK(fs::exists(dir / "transfer.csv"));
}

TEST_CASE("bench includes the random baseline and is deterministic") {
  ExperimentConfig cfg = tiny_experiment();
  cfg.finetune.ppo.num_steps = 64;
  cfg.finetune.ppo.minibatch_size = 32;
  cfg.finetune.ppo.update_epochs = 2;
  const auto dir = temp_dir("ftrl_bench");
  const auto rows = run_bench(ControlVariant::kLineRacer, {Algorithm::kPPO}, 256,
                              {5}, cfg, dir.string());
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].algorithm == "random");
  CHECK(rows[0].seeds_ok == 1);
  CHECK(rows[1].algorithm == "ppo");
  CHECK(rows[1].seeds_ok == 1);

  const auto rows2 = run_bench(ControlVariant::kLineRacer, {Algorithm::kPPO}, 256,
                               {5}, cfg);
  CHECK(rows[1].mean_return == rows2[1].mean_return);  // same seed, same curve
  CHECK(fs::exists(dir / "bench.csv"));

  const std::string md = emit_report(dir.string());
  CHECK(md.find("random") != std::string::npos);
}

TEST_CASE("report errors on empty directories and marks missing cells") {
  const auto dir = temp_dir("ftrl_empty");
  CHECK_THROWS_AS(emit_report(dir.string()), IoError);

  // A transfer record with one failed cell renders an absent marker.
  RunRecord rec;
  rec.kind = "transfer";
  rec.spec = config_to_json(tiny_experiment());
  rec.seed = 1;
  rec.metrics = nlohmann::json::array();
  rec.metrics.push_back({{"matrix", "baseline"},
                         {"trained_on", "synth-financial"},
                         {"finetuned_on", ""},
                         {"algorithm", ""},
                         {"evaluated_on", "synth-financial"},
                         {"mse", 0.5},
                         {"mae", 0.4},
                         {"ok", true},
                         {"status", "ok"}});
  rec.metrics.push_back({{"matrix", "baseline"},
                         {"trained_on", "synth-industrials"},
                         {"finetuned_on", ""},
                         {"algorithm", ""},
                         {"evaluated_on", "synth-industrials"},
                         {"mse", 0.0},
                         {"mae", 0.0},
                         {"ok", false},
                         {"status", "failed"}});
  save_record(rec, (dir / "t0").string());
  const std::string md = emit_report(dir.string());
  CHECK(md.find("—") != std::string::npos);
  CHECK(md.find("0.5000") != std::string::npos);
}

TEST_CASE("csv writer emits header plus rows") {
  const auto dir = temp_dir("ftrl_csv");
  const auto path = (dir / "t.csv").string();
  write_csv(path, {"a", "b"}, {{"1", "2"}, {"3", "4"}});
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "a,b");
  std::getline(in, line);
  CHECK(line == "1,2");
}

TEST_SUITE_END();
