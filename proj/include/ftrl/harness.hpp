#ifndef FTRL_HARNESS_HPP
#define FTRL_HARNESS_HPP

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ftrl/finetune.hpp"
#include "ftrl/synth.hpp"

namespace ftrl {

/// Where the experiment's windows come from: a named synthetic preset or a
/// CSV price file run through the feature pipeline.
struct DataConfig {
  std::string preset = "synth-financial";
  std::string csv;  // overrides the preset when set
  int rows = 1200;  // synthetic preset length
  int context_length = 32;
  int horizon = 4;
  int stride = 1;
  std::array<double, 3> fractions{0.7, 0.15, 0.15};
};

/// Resolved experiment description. Serialized verbatim into every run
/// record, so a record plus a seed reproduces the run exactly.
struct ExperimentConfig {
  DataConfig data;
  BackboneConfig backbone;  // context_length/num_features/horizon follow data
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  std::string out_dir = "runs";
  std::uint64_t master_seed = 42;
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);
/// Parses a config file (JSON with data/backbone/pretrain/algorithm/
/// finetune/harness sections); missing keys keep their defaults.
ExperimentConfig load_config(const std::string& path);

/// Builds the windowed, split dataset the config describes.
WindowedDataset build_dataset(const DataConfig& cfg, std::uint64_t seed);
/// Backbone config with T/N/P aligned to the dataset.
BackboneConfig resolve_backbone(const ExperimentConfig& cfg, int num_features);

/// Persisted outcome of one run. The spec snapshot plus the seed is enough
/// to re-run bit-identically.
struct RunRecord {
  std::string kind;  // pretrain | finetune | bench-<algo> | ...
  nlohmann::json spec;
  std::string version;
  std::uint64_t seed = 0;
  double wall_clock_sec = 0.0;
  nlohmann::json metrics;  // kind-specific history
  nlohmann::json final_metrics;
  std::string status = "ok";
};

nlohmann::json record_to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& j);
void save_record(const RunRecord& r, const std::string& dir);
RunRecord load_record(const std::string& path);

std::string code_version();

/// Derives the per-run seed for (master, label, index); recorded in run
/// metadata. This is the only seed-derivation scheme the harness uses.
std::uint64_t run_seed(std::uint64_t master, const std::string& label,
                       std::uint64_t index);

// --- experiments ---

struct PretrainOutcome {
  RunRecord record;
  Backbone model;
};

/// Supervised pre-training on the configured dataset. When `out_dir` is set,
/// writes record.json, history.csv and backbone.ftrl under it.
PretrainOutcome run_pretrain(const ExperimentConfig& cfg, std::uint64_t seed,
                             const std::string& out_dir = {});

struct FinetuneOutcome {
  RunRecord record;
  Backbone model;
  EvalReport test_before;
  EvalReport test_after;
};

/// Pre-trains (or starts from `base` when given), fine-tunes with the
/// configured algorithm, and evaluates the test split before and after.
/// `base_path`, when set, is recorded so a replay can reload the same
/// starting checkpoint.
FinetuneOutcome run_finetune(const ExperimentConfig& cfg, std::uint64_t seed,
                             const Backbone* base = nullptr,
                             const std::string& out_dir = {},
                             const std::string& base_path = {});

/// One cell of the transfer matrices.
struct TransferCell {
  std::string trained_on;
  std::string finetuned_on;  // empty for the baseline matrix
  std::string algorithm;     // empty for the baseline matrix
  std::string evaluated_on;
  double mse = 0.0;
  double mae = 0.0;
  bool ok = false;
  std::string status;
};

struct TransferReport {
  std::vector<TransferCell> baseline;   // pretrain-only evaluations
  std::vector<TransferCell> finetuned;  // after fine-tuning
};

/// Pre-trains on each preset, evaluates the base model across every preset
/// (baseline matrix), then fine-tunes per (train, finetune, algorithm) and
/// evaluates on the fine-tuning preset (fine-tuned matrix). Failures land in
/// the cell's status and leave it absent from the tables.
TransferReport run_transfer_matrix(const std::vector<std::string>& presets,
                                   const std::vector<Algorithm>& algorithms,
                                   const ExperimentConfig& cfg,
                                   const std::string& out_dir = {});

struct SweepRow {
  double value = 0.0;
  std::uint64_t seed = 0;
  double mse = 0.0;
  double mae = 0.0;
  bool ok = false;
};

/// Grid sweep over one hyperparameter; one fine-tuning run per value per
/// seed. Rejects parameters the configured algorithm does not have.
std::vector<SweepRow> run_sweep(const std::string& parameter,
                                const std::vector<double>& values,
                                const ExperimentConfig& cfg,
                                const std::string& out_dir = {});

struct BenchRow {
  std::string algorithm;  // "random" for the baseline
  double mean_return = 0.0;
  double std_return = 0.0;
  int seeds_ok = 0;
  int seeds_failed = 0;
};

/// Control-environment comparison: trains each algorithm per seed, then
/// scores 10 deterministic evaluation episodes. The uniform-random baseline
/// row is always included. Divergent runs are recorded and excluded from the
/// mean.
std::vector<BenchRow> run_bench(ControlVariant variant,
                                const std::vector<Algorithm>& algorithms,
                                long budget, const std::vector<std::uint64_t>& seeds,
                                const ExperimentConfig& cfg,
                                const std::string& out_dir = {});

/// Mean episodic return of a trained-or-random policy over `episodes`
/// deterministic evaluation episodes.
double evaluate_control_policy(Env& env, const GaussianPolicy* policy,
                               int episodes, std::uint64_t seed);

/// Renders markdown + CSV tables from every record.json under `run_dir`.
/// Missing cells render as absent markers; the best value per metric column
/// is flagged. Returns the markdown.
std::string emit_report(const std::string& run_dir);

/// Re-runs a persisted record's experiment from its spec snapshot and seed.
/// Used by the determinism gate: final metrics must be bit-identical.
RunRecord replay_run(const RunRecord& record);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace ftrl

#endif  // FTRL_HARNESS_HPP
