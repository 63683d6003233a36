#ifndef FTRL_POLICY_HPP
#define FTRL_POLICY_HPP

#include <functional>
#include <string>

#include "ftrl/nn.hpp"

namespace ftrl {

/// Builds a graph node from an observation: the composition point where an
/// actor MLP, a value MLP or the backbone plugs into an algorithm.
using ObsFn = std::function<Var(GraphContext&, const Tensor& obs)>;

/// Diagonal Gaussian policy: any differentiable mean map plus a learnable
/// state-independent log_std vector (initialized to zero, clamped to
/// [-5, 2] after each update). Sampling uses seeded noise; evaluation mode
/// returns the mean.
class GaussianPolicy {
 public:
  GaussianPolicy(ParameterStore& store, const std::string& name, int action_dim,
                 ObsFn mean_fn);

  int action_dim() const { return action_dim_; }
  Parameter& log_std_param() { return *log_std_; }
  const Parameter& log_std_param() const { return *log_std_; }

  /// Graph path, used by updates.
  Var mean_node(GraphContext& ctx, const Tensor& obs) const;
  /// Sum over action dims of the Gaussian log density of `action`.
  Var log_prob_node(GraphContext& ctx, Var mean, const Tensor& action) const;
  /// Policy entropy: sum_d(log_std_d) + 0.5 * d * ln(2*pi*e).
  Var entropy_node(GraphContext& ctx) const;

  struct Sample {
    Tensor action;
    Tensor mean;
    double log_prob = 0.0;
  };
  /// mean + exp(log_std) * noise; the recorded log_prob is bit-identical to
  /// what log_prob_node computes for the same action and parameters.
  Sample sample(const Tensor& obs, Rng& rng) const;
  /// Evaluation mode: the mean action.
  Tensor mean_action(const Tensor& obs) const;
  /// Closed-form log pi(action | mean) under the current log_std.
  double log_prob(const Tensor& action, const Tensor& mean) const;

  void clamp_log_std(double lo = -5.0, double hi = 2.0);

 private:
  int action_dim_;
  ObsFn mean_fn_;
  Parameter* log_std_;
};

/// Scalar state-value head over any differentiable input map.
class ValueHead {
 public:
  explicit ValueHead(ObsFn value_fn) : value_fn_(std::move(value_fn)) {}

  Var value_node(GraphContext& ctx, const Tensor& obs) const;
  double value(const Tensor& obs) const;

 private:
  ObsFn value_fn_;
};

/// 2 hidden layers of `hidden` tanh units with a scalar output, reading the
/// flattened observation. The default width follows the fine-tuning setup;
/// control benchmarks pass 64.
ValueHead make_mlp_value(ParameterStore& store, const std::string& name,
                         int input_numel, Rng& rng, int hidden = 256);

/// Actor mean as an MLP over the flattened observation (one hidden layer of
/// `hidden` tanh units).
ObsFn make_mlp_mean(ParameterStore& store, const std::string& name,
                    int input_numel, int action_dim, Rng& rng, int hidden = 64,
                    bool zero_init = false);

}  // namespace ftrl

#endif  // FTRL_POLICY_HPP
