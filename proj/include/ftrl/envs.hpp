#ifndef FTRL_ENVS_HPP
#define FTRL_ENVS_HPP

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "ftrl/data.hpp"

namespace ftrl {

/// 2 * exp(-mean squared error) - 1: maps a perfect forecast to 1 and decays
/// toward (never reaching) -1 as the error grows.
double forecast_reward(const Tensor& action, const Tensor& target);

struct StepResult {
  Tensor observation;  // next observation (repeats the last one when done)
  double reward = 0.0;
  bool done = false;
  Tensor info_target;  // the revealed true future, forecast envs only
};

/// Minimal environment surface shared by the forecasting task and the native
/// control benchmarks. One instance per rollout worker; no shared state.
class Env {
 public:
  virtual ~Env() = default;
  virtual Tensor reset(std::uint64_t seed) = 0;
  virtual StepResult step(const Tensor& action) = 0;
  virtual int action_dim() const = 0;
  virtual std::vector<int> observation_shape() const = 0;
  /// Reward each candidate action would earn at the current state, without
  /// advancing the environment. Group-sampling algorithms score with this.
  virtual std::vector<double> peek_rewards(std::span<const Tensor> actions) const = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
};

enum class Traversal { kSequential, kShuffled };

/// One-step forecasting decisions over successive data windows. The
/// observation is exactly states[cursor]; stepping reveals the true future,
/// pays the exponential forecast reward and advances the cursor. Episodes
/// end after episode_length steps or at the end of the window set.
class ForecastEnv final : public Env {
 public:
  ForecastEnv(const WindowedDataset& data, std::vector<int> indices,
              int episode_length = 128,
              Traversal traversal = Traversal::kSequential);

  Tensor reset(std::uint64_t seed) override;
  StepResult step(const Tensor& action) override;
  int action_dim() const override { return data_->horizon; }
  std::vector<int> observation_shape() const override;
  std::vector<double> peek_rewards(std::span<const Tensor> actions) const override;
  std::unique_ptr<Env> clone() const override;

  /// The target the next step will reveal.
  const Tensor& current_target() const;
  int current_window() const;
  std::size_t total_windows() const { return indices_.size(); }

 private:
  const WindowedDataset* data_;
  std::vector<int> indices_;
  int episode_length_;
  Traversal traversal_;

  std::vector<int> order_;
  std::size_t pos_ = 0;
  int steps_in_episode_ = 0;
  bool done_ = true;
};

enum class ControlVariant { kLineRacer, kStickBalance };

struct ControlEnvConfig {
  ControlVariant variant = ControlVariant::kStickBalance;
  double w_forward = 0.1;
  double w_healthy = 1.0;
  double w_ctrl = 0.001;
  int step_limit = 200;
  double healthy_angle = 0.25;  // radians, stick-balance
  double dt = 0.05;
};

/// Native continuous-control benchmarks with forward/healthy/control reward
/// terms. line-racer: a point mass on a line, observed through its velocity;
/// reward w_f * F - w_ctrl * |a|^2. stick-balance: cart with a balancing
/// pole; reward w_f * F + w_h * H - w_ctrl * |a|^2, terminating when the
/// angle leaves the healthy range. Explicit Euler integration.
class ControlEnv final : public Env {
 public:
  explicit ControlEnv(ControlEnvConfig config);

  Tensor reset(std::uint64_t seed) override;
  StepResult step(const Tensor& action) override;
  int action_dim() const override { return 1; }
  std::vector<int> observation_shape() const override;
  std::vector<double> peek_rewards(std::span<const Tensor> actions) const override;
  std::unique_ptr<Env> clone() const override;

  const ControlEnvConfig& config() const { return cfg_; }

 private:
  struct State {
    double x = 0.0;
    double x_dot = 0.0;
    double theta = 0.0;
    double theta_dot = 0.0;
  };
  struct Outcome {
    State state;
    double reward;
    bool healthy;
  };
  Outcome integrate(const State& s, double action) const;
  Tensor observe(const State& s) const;

  ControlEnvConfig cfg_;
  State state_;
  int steps_ = 0;
  bool done_ = true;
};

ControlVariant control_variant_from_name(const std::string& name);
std::string control_variant_name(ControlVariant v);

}  // namespace ftrl

#endif  // FTRL_ENVS_HPP
