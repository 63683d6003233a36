#ifndef FTRL_BACKBONE_HPP
#define FTRL_BACKBONE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ftrl/data.hpp"
#include "ftrl/nn.hpp"

namespace ftrl {

struct BackboneConfig {
  int context_length = 32;  // T
  int num_features = 8;     // N
  int horizon = 4;          // P
  int model_dim = 64;
  int num_heads = 4;
  int num_layers = 4;       // 0 = projection-only ablation
  int ff_dim = 128;
  double dropout = 0.0;

  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

/// Small pre-norm transformer encoder over the observation window with a
/// linear head emitting a horizon-length forecast. The latent readout is the
/// mean over the time axis of the final encoder output.
///
/// Parameters are declared in a fixed order (the checkpoint order) and
/// initialized uniformly in +/- 1/sqrt(fan_in) from the construction seed.
/// Exclusively owned during updates; read-only inference is safe to share.
class Backbone {
 public:
  Backbone(BackboneConfig config, std::uint64_t seed);

  const BackboneConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  /// Encoder output pooled over time: [T x N] node -> [model_dim] node.
  /// Pass a dropout rng to enable train-mode dropout.
  Var build_latent(GraphContext& ctx, Var window, Rng* dropout = nullptr) const;
  /// Projection head over a latent node -> [P] node.
  Var build_head(GraphContext& ctx, Var latent) const;
  /// build_head(build_latent(...)).
  Var build_forecast(GraphContext& ctx, Var window, Rng* dropout = nullptr) const;

  /// Evaluation-mode forwards: deterministic, dropout off.
  Tensor forward_latent(const Tensor& window) const;
  Tensor forward_predict(const Tensor& window) const;

  /// Freezes the first floor(f * num_layers) encoder layers plus, for f > 0,
  /// the input projection and positional encoding. The final norm freezes
  /// only when every layer does; the head never freezes. Returns the frozen
  /// layer count.
  int set_frozen_fraction(double f);
  double frozen_fraction() const { return frozen_fraction_; }

  /// Layer parameter groups, for freezing assertions.
  std::vector<const Parameter*> layer_parameters(int layer) const;
  std::vector<Parameter*> head_parameters();

  /// Free-text training note persisted in checkpoints.
  std::string provenance;

  void save(const std::string& path) const;
  /// Loads a checkpoint; with `expect` set, a differing stored config is a
  /// mismatch error instead of silently building a different model.
  static Backbone load(const std::string& path,
                       const BackboneConfig* expect = nullptr);

 private:
  void check_window(const Tensor& w) const;

  BackboneConfig cfg_;
  std::uint64_t seed_ = 0;
  double frozen_fraction_ = 0.0;
  ParameterStore store_;

  // Indices into store_ (copy-safe, unlike pointers).
  struct LayerIdx {
    int ln1_g, ln1_b;
    std::vector<int> wq, wk, wv;  // per head
    int wo, bo;
    int ln2_g, ln2_b;
    int ff_w1, ff_b1, ff_w2, ff_b2;
  };
  int input_w_ = -1, input_b_ = -1, pos_enc_ = -1;
  std::vector<LayerIdx> layers_;
  int final_g_ = -1, final_b_ = -1;
  int head_w_ = -1, head_b_ = -1;
};

struct PretrainConfig {
  int epochs = 60;
  double lr = 1e-3;
  int batch_size = 32;
  /// Linear decay of the learning rate to lr * final_lr_scale by the last
  /// epoch; 1.0 keeps it constant.
  double final_lr_scale = 1.0;
};

struct EpochStats {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

/// Minibatch Adam on the forecast MSE over the dataset's train split (the
/// whole dataset when untagged), with per-epoch validation MSE. A non-finite
/// loss aborts training and the parameters roll back to the last finished
/// epoch.
std::vector<EpochStats> pretrain(Backbone& model, const WindowedDataset& data,
                                 const PretrainConfig& config,
                                 std::uint64_t seed);

/// Mean squared error of evaluation-mode forecasts over the given windows.
double dataset_mse(const Backbone& model, const WindowedDataset& data,
                   std::span<const int> indices);

}  // namespace ftrl

#endif  // FTRL_BACKBONE_HPP
