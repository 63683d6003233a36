#ifndef FTRL_NN_HPP
#define FTRL_NN_HPP

#include <deque>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ftrl/graph.hpp"
#include "ftrl/ops.hpp"
#include "ftrl/rng.hpp"

namespace ftrl {

/// A named trainable tensor plus its optimizer state. Frozen parameters are
/// leafed into graphs as constants, so they receive neither gradients nor
/// updates and stay bit-identical across any number of steps.
struct Parameter {
  std::string name;
  Tensor value;
  bool frozen = false;

  // Adam moments; sized lazily on first update.
  Tensor adam_m;
  Tensor adam_v;
  std::int64_t adam_steps = 0;
};

/// Owns parameters in a stable insertion order (the "declared order" used by
/// checkpoints and seed-derived initialization).
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;

  std::size_t size() const { return items_.size(); }
  Parameter& at(std::size_t i) { return items_.at(i); }
  const Parameter& at(std::size_t i) const { return items_.at(i); }
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;

  std::int64_t total_elements() const;

  /// Deep copy of values + optimizer state, for abort-and-restore.
  std::vector<Parameter> snapshot() const;
  void restore(const std::vector<Parameter>& snap);

 private:
  std::deque<Parameter> items_;  // deque: stable addresses across add()
};

/// Per-graph cache of parameter leaves. Building several forward passes in
/// one graph reuses a single leaf per parameter, which is what makes shared
/// parameters accumulate gradients correctly.
class GraphContext {
 public:
  explicit GraphContext(Graph& g) : graph_(&g) {}

  Graph& graph() { return *graph_; }

  /// Leaf for `p`; constant when frozen, differentiable otherwise.
  Var use(Parameter& p);
  /// Constant input leaf (observations, targets, masks).
  Var input(Tensor t) { return graph_->constant(std::move(t)); }

  /// (parameter, gradient) pairs for every unfrozen parameter used in this
  /// graph, in first-use order. One backward pass.
  std::vector<std::pair<Parameter*, Tensor>> gradients(Var scalar_loss) const;

 private:
  Graph* graph_;
  std::unordered_map<const Parameter*, Var> leaves_;
  std::vector<Parameter*> used_;  // unfrozen, first-use order
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment estimation with bias correction. Frozen parameters are
/// skipped entirely.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(std::span<const std::pair<Parameter*, Tensor>> grads) const;

  AdamConfig& config() { return cfg_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
};

/// Scales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
double clip_global_norm(std::vector<std::pair<Parameter*, Tensor>>& grads,
                        double max_norm);

/// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
void init_uniform_fanin(Tensor& t, int fan_in, Rng& rng);

/// Dense layers with tanh activations between them; the final layer is
/// linear. Weights are [in x out] applied as y = x * W + b, so rank-1 inputs
/// map to rank-1 outputs.
class Mlp {
 public:
  Mlp(ParameterStore& store, const std::string& prefix, std::vector<int> dims,
      Rng& rng, bool zero_init = false);

  Var forward(GraphContext& ctx, Var x) const;

  int in_dim() const { return dims_.front(); }
  int out_dim() const { return dims_.back(); }
  const std::vector<Parameter*>& parameters() const { return params_; }

 private:
  std::vector<int> dims_;
  std::vector<Parameter*> params_;  // W0, b0, W1, b1, ...
};

}  // namespace ftrl

#endif  // FTRL_NN_HPP
