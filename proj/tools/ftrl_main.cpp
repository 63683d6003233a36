#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "ftrl/harness.hpp"

namespace fs = std::filesystem;
using namespace ftrl;

namespace {

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<Algorithm> parse_algorithms(const std::string& csv) {
  std::vector<Algorithm> out;
  for (const std::string& name : split_list(csv)) {
    out.push_back(algorithm_from_name(name));
  }
  if (out.empty()) throw ContractViolation("no algorithms given");
  return out;
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

ExperimentConfig resolve_config(const CommonOpts& opts) {
  ExperimentConfig cfg;
  if (!opts.config_path.empty()) cfg = load_config(opts.config_path);
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (opts.seed_set) cfg.master_seed = opts.seed;
  return cfg;
}

std::string fresh_run_dir(const ExperimentConfig& cfg, const std::string& kind) {
  fs::create_directories(cfg.out_dir);
  int i = 0;
  while (true) {
    fs::path dir = fs::path(cfg.out_dir) / (kind + "-" + std::to_string(i));
    if (!fs::exists(dir)) return dir.string();
    ++i;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ftrl: pre-train a transformer forecaster and fine-tune it "
               "with reinforcement learning"};
  app.require_subcommand(1);

  CommonOpts common;
  app.add_option("--config", common.config_path, "JSON config file");
  app.add_option("--out", common.out_dir, "output directory (default: runs)");
  app.add_option("--seed", common.seed, "master seed")
      ->each([&common](const std::string&) { common.seed_set = true; });

  // pretrain
  auto* pre_cmd = app.add_subcommand("pretrain", "supervised pre-training");
  std::string pre_preset, pre_csv;
  pre_cmd->add_option("--preset", pre_preset, "synthetic dataset preset");
  pre_cmd->add_option("--csv", pre_csv, "CSV price file");

  // finetune
  auto* ft_cmd = app.add_subcommand("finetune", "RL fine-tuning");
  std::string ft_algo, ft_paradigm, ft_preset, ft_csv, ft_backbone;
  double ft_frozen = -1.0;
  long ft_timesteps = -1;
  ft_cmd->add_option("--algo", ft_algo, "ppo|cmappo|grpo");
  ft_cmd->add_option("--paradigm", ft_paradigm, "actor|latent");
  ft_cmd->add_option("--frozen", ft_frozen, "frozen fraction in [0,1]");
  ft_cmd->add_option("--timesteps", ft_timesteps, "fine-tuning timesteps");
  ft_cmd->add_option("--preset", ft_preset, "synthetic dataset preset");
  ft_cmd->add_option("--csv", ft_csv, "CSV price file");
  ft_cmd->add_option("--backbone", ft_backbone,
                     "checkpoint to start from (default: pretrain first)");

  // transfer
  auto* tr_cmd = app.add_subcommand("transfer", "transfer-learning matrix");
  std::string tr_presets =
      "synth-financial,synth-industrials,synth-technology";
  std::string tr_algos = "ppo,cmappo,grpo";
  tr_cmd->add_option("--presets", tr_presets, "comma-separated presets");
  tr_cmd->add_option("--algos", tr_algos, "comma-separated algorithms");

  // sweep
  auto* sw_cmd = app.add_subcommand("sweep", "hyperparameter grid sweep");
  std::string sw_param, sw_values;
  sw_cmd->add_option("--param", sw_param,
                     "total_timesteps|group_size|num_subagents|frozen_fraction")
      ->required();
  sw_cmd->add_option("--values", sw_values, "comma-separated values")->required();

  // bench
  auto* be_cmd = app.add_subcommand("bench", "control-environment benchmark");
  std::string be_env = "stick-balance";
  std::string be_algos = "ppo,cmappo,grpo";
  long be_budget = 60000;
  std::string be_seeds = "1,2,3";
  be_cmd->add_option("--env", be_env, "line-racer|stick-balance");
  be_cmd->add_option("--algos", be_algos, "comma-separated algorithms");
  be_cmd->add_option("--budget", be_budget, "training timesteps per run");
  be_cmd->add_option("--seeds", be_seeds, "comma-separated seeds");

  // report
  auto* re_cmd = app.add_subcommand("report", "render tables from run records");
  std::string re_dir;
  re_cmd->add_option("--run-dir", re_dir, "directory with run records")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(common);
      if (!pre_preset.empty()) {
        cfg.data.preset = pre_preset;
        cfg.data.csv.clear();
      }
      if (!pre_csv.empty()) cfg.data.csv = pre_csv;
      const std::string dir = fresh_run_dir(cfg, "pretrain");
      const PretrainOutcome out =
          run_pretrain(cfg, run_seed(cfg.master_seed, "cli.pretrain", 0), dir);
      std::cout << "pretrain " << out.record.status << ": val_mse="
                << out.record.final_metrics.at("val_mse").get<double>()
                << " test_mse="
                << out.record.final_metrics.at("test_mse").get<double>()
                << "\nrun dir: " << dir << "\n";
      return out.record.status == "ok" ? 0 : 2;
    }

    if (ft_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(common);
      if (!ft_algo.empty()) cfg.finetune.algorithm = algorithm_from_name(ft_algo);
      if (!ft_paradigm.empty()) {
        cfg.finetune.paradigm = paradigm_from_name(ft_paradigm);
      }
      if (ft_frozen >= 0.0) cfg.finetune.frozen_fraction = ft_frozen;
      if (ft_timesteps >= 0) cfg.finetune.total_timesteps = ft_timesteps;
      if (!ft_preset.empty()) {
        cfg.data.preset = ft_preset;
        cfg.data.csv.clear();
      }
      if (!ft_csv.empty()) cfg.data.csv = ft_csv;

      std::optional<Backbone> base;
      if (!ft_backbone.empty()) base = Backbone::load(ft_backbone);
      const std::string dir = fresh_run_dir(cfg, "finetune");
      const FinetuneOutcome out =
          run_finetune(cfg, run_seed(cfg.master_seed, "cli.finetune", 0),
                       base ? &*base : nullptr, dir, ft_backbone);
      std::cout << "finetune " << out.record.status
                << ": test_mse " << out.test_before.mse << " -> "
                << out.test_after.mse << " (mae " << out.test_before.mae
                << " -> " << out.test_after.mae << ")\nrun dir: " << dir
                << "\n";
      return out.record.status == "ok" ? 0 : 2;
    }

    if (tr_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(common);
      const std::string dir = fresh_run_dir(cfg, "transfer");
      const TransferReport report = run_transfer_matrix(
          split_list(tr_presets), parse_algorithms(tr_algos), cfg, dir);
      int failures = 0;
      for (const auto& c : report.finetuned) failures += c.ok ? 0 : 1;
      std::cout << "transfer matrix: " << report.baseline.size()
                << " baseline cells, " << report.finetuned.size()
                << " fine-tuned cells, " << failures << " failed\nrun dir: "
                << dir << "\n";
      return 0;
    }

    if (sw_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(common);
      std::vector<double> values;
      for (const std::string& v : split_list(sw_values)) {
        values.push_back(std::stod(v));
      }
      const std::string dir = fresh_run_dir(cfg, "sweep");
      const auto rows = run_sweep(sw_param, values, cfg, dir);
      int failures = 0;
      for (const auto& r : rows) failures += r.ok ? 0 : 1;
      std::cout << "sweep over " << sw_param << ": " << rows.size()
                << " runs, " << failures << " failed\nrun dir: " << dir
                << "\n";
      return 0;
    }

    if (be_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(common);
      std::vector<std::uint64_t> seeds;
      for (const std::string& s : split_list(be_seeds)) {
        seeds.push_back(std::stoull(s));
      }
      const std::string dir = fresh_run_dir(cfg, "bench");
      const auto rows = run_bench(control_variant_from_name(be_env),
                                  parse_algorithms(be_algos), be_budget, seeds,
                                  cfg, dir);
      for (const auto& r : rows) {
        std::cout << r.algorithm << ": " << r.mean_return << " +/- "
                  << r.std_return << " (" << r.seeds_ok << " ok, "
                  << r.seeds_failed << " failed)\n";
      }
      std::cout << "run dir: " << dir << "\n";
      return 0;
    }

    if (re_cmd->parsed()) {
      const std::string markdown = emit_report(re_dir);
      std::cout << markdown;
      return 0;
    }
  } catch (const std::exception& e) {
    nlohmann::json err{{"error", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
