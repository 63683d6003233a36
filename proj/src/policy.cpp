#include "ftrl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "ftrl/ops.hpp"

namespace ftrl {

GaussianPolicy::GaussianPolicy(ParameterStore& store, const std::string& name,
                               int action_dim, ObsFn mean_fn)
    : action_dim_(action_dim), mean_fn_(std::move(mean_fn)) {
  if (action_dim_ < 1) {
    throw ContractViolation("GaussianPolicy: action_dim must be >= 1");
  }
  log_std_ = &store.add(name + ".log_std", Tensor::zeros({action_dim_}));
}

Var GaussianPolicy::mean_node(GraphContext& ctx, const Tensor& obs) const {
  Var mean = mean_fn_(ctx, obs);
  if (mean.value().numel() != action_dim_) {
    throw ContractViolation("policy mean has shape " + mean.value().shape_str() +
                            ", expected " + std::to_string(action_dim_) +
                            " elements");
  }
  return mean;
}

Var GaussianPolicy::log_prob_node(GraphContext& ctx, Var mean,
                                  const Tensor& action) const {
  if (action.numel() != action_dim_) {
    throw ContractViolation("action has shape " + action.shape_str() +
                            ", expected " + std::to_string(action_dim_) +
                            " elements");
  }
  Var a = ctx.input(action.flattened());
  return sum(gaussian_log_prob(a, mean, ctx.use(*log_std_)));
}

Var GaussianPolicy::entropy_node(GraphContext& ctx) const {
  const double c = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  return add_scalar(sum(ctx.use(*log_std_)), c * action_dim_);
}

GaussianPolicy::Sample GaussianPolicy::sample(const Tensor& obs, Rng& rng) const {
  Sample s;
  s.mean = mean_action(obs);
  s.action = Tensor::zeros({action_dim_});
  for (int d = 0; d < action_dim_; ++d) {
    const double sigma = std::exp(log_std_->value.at(d));
    s.action.at(d) = s.mean.at(d) + sigma * rng.normal();
  }
  s.log_prob = log_prob(s.action, s.mean);
  return s;
}

Tensor GaussianPolicy::mean_action(const Tensor& obs) const {
  Graph g;
  GraphContext ctx(g);
  return mean_node(ctx, obs).value().flattened();
}

double GaussianPolicy::log_prob(const Tensor& action, const Tensor& mean) const {
  // Same elementwise expression and left-to-right summation as the graph op.
  double total = 0.0;
  for (int d = 0; d < action_dim_; ++d) {
    total += gaussian_log_density(action.at(d), mean.at(d),
                                  log_std_->value.at(d));
  }
  return total;
}

void GaussianPolicy::clamp_log_std(double lo, double hi) {
  for (double& v : log_std_->value.mutable_data()) v = std::clamp(v, lo, hi);
}

Var ValueHead::value_node(GraphContext& ctx, const Tensor& obs) const {
  Var v = value_fn_(ctx, obs);
  if (v.value().numel() != 1) {
    throw ContractViolation("value head must be scalar, got " +
                            v.value().shape_str());
  }
  return v;
}

double ValueHead::value(const Tensor& obs) const {
  Graph g;
  GraphContext ctx(g);
  return value_node(ctx, obs).value().item();
}

ValueHead make_mlp_value(ParameterStore& store, const std::string& name,
                         int input_numel, Rng& rng, int hidden) {
  auto net = std::make_shared<Mlp>(store, name,
                                   std::vector<int>{input_numel, hidden, hidden, 1},
                                   rng);
  return ValueHead([net](GraphContext& ctx, const Tensor& obs) {
    return net->forward(ctx, ctx.input(obs.flattened()));
  });
}

ObsFn make_mlp_mean(ParameterStore& store, const std::string& name,
                    int input_numel, int action_dim, Rng& rng, int hidden,
                    bool zero_init) {
  auto net = std::make_shared<Mlp>(
      store, name, std::vector<int>{input_numel, hidden, action_dim}, rng,
      zero_init);
  return [net](GraphContext& ctx, const Tensor& obs) {
    return net->forward(ctx, ctx.input(obs.flattened()));
  };
}

}  // namespace ftrl
