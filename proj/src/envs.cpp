#include "ftrl/envs.hpp"

#include <algorithm>
#include <cmath>

#include "ftrl/rng.hpp"

namespace ftrl {

double forecast_reward(const Tensor& action, const Tensor& target) {
  if (action.numel() != target.numel()) {
    throw ContractViolation("forecast_reward: length mismatch " +
                            action.shape_str() + " vs " + target.shape_str());
  }
  double mse = 0.0;
  for (std::int64_t i = 0; i < action.numel(); ++i) {
    const double d = action.at(i) - target.at(i);
    mse += d * d;
  }
  mse /= static_cast<double>(action.numel());
  return 2.0 * std::exp(-mse) - 1.0;
}

ForecastEnv::ForecastEnv(const WindowedDataset& data, std::vector<int> indices,
                         int episode_length, Traversal traversal)
    : data_(&data),
      indices_(std::move(indices)),
      episode_length_(episode_length),
      traversal_(traversal) {
  if (indices_.empty()) {
    throw ContractViolation("ForecastEnv: no windows");
  }
  if (episode_length_ < 1) {
    throw ContractViolation("ForecastEnv: episode_length must be >= 1");
  }
  for (int w : indices_) {
    if (w < 0 || static_cast<std::size_t>(w) >= data_->size()) {
      throw ContractViolation("ForecastEnv: window index out of range");
    }
  }
}

Tensor ForecastEnv::reset(std::uint64_t seed) {
  order_ = indices_;
  if (traversal_ == Traversal::kShuffled) {
    Rng rng(derive_seed(seed, "env.shuffle"));
    rng.shuffle(order_);
  }
  pos_ = 0;
  steps_in_episode_ = 0;
  done_ = false;
  return data_->states[static_cast<std::size_t>(order_[0])];
}

const Tensor& ForecastEnv::current_target() const {
  if (done_) throw ContractViolation("ForecastEnv: episode is done");
  return data_->targets[static_cast<std::size_t>(order_[pos_])];
}

int ForecastEnv::current_window() const {
  if (done_) throw ContractViolation("ForecastEnv: episode is done");
  return order_[pos_];
}

StepResult ForecastEnv::step(const Tensor& action) {
  if (done_) {
    throw ContractViolation("ForecastEnv: step() after done without reset()");
  }
  const Tensor& y = data_->targets[static_cast<std::size_t>(order_[pos_])];
  StepResult r;
  r.reward = forecast_reward(action, y);
  r.info_target = y;
  ++pos_;
  ++steps_in_episode_;
  done_ = steps_in_episode_ >= episode_length_ || pos_ >= order_.size();
  r.done = done_;
  const std::size_t obs_idx = done_ ? pos_ - 1 : pos_;
  r.observation = data_->states[static_cast<std::size_t>(order_[obs_idx])];
  return r;
}

std::vector<int> ForecastEnv::observation_shape() const {
  return {data_->context_length, data_->num_features};
}

std::vector<double> ForecastEnv::peek_rewards(
    std::span<const Tensor> actions) const {
  const Tensor& y = current_target();
  std::vector<double> out;
  out.reserve(actions.size());
  for (const Tensor& a : actions) out.push_back(forecast_reward(a, y));
  return out;
}

std::unique_ptr<Env> ForecastEnv::clone() const {
  return std::make_unique<ForecastEnv>(*this);
}

// --- control benchmarks ---

namespace {
constexpr double kForceGain = 10.0;   // stick-balance force per unit action
constexpr double kRacerGain = 1.0;    // line-racer acceleration per unit action
constexpr double kRacerDrag = 0.1;
constexpr double kCartMass = 1.0;
constexpr double kPoleMass = 0.1;
constexpr double kPoleHalfLength = 0.5;
constexpr double kGravity = 9.8;
constexpr double kTrackLimit = 2.4;
}  // namespace

ControlEnv::ControlEnv(ControlEnvConfig config) : cfg_(config) {
  if (cfg_.step_limit < 1) {
    throw ContractViolation("ControlEnv: step_limit must be >= 1");
  }
  if (cfg_.dt <= 0.0) throw ContractViolation("ControlEnv: dt must be > 0");
}

Tensor ControlEnv::observe(const State& s) const {
  if (cfg_.variant == ControlVariant::kLineRacer) {
    return Tensor::vector({s.x_dot});
  }
  return Tensor::vector({s.x, s.x_dot, s.theta, s.theta_dot});
}

Tensor ControlEnv::reset(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "env.control"));
  state_ = State{};
  if (cfg_.variant == ControlVariant::kStickBalance) {
    state_.x = rng.uniform(-0.05, 0.05);
    state_.x_dot = rng.uniform(-0.05, 0.05);
    state_.theta = rng.uniform(-0.05, 0.05);
    state_.theta_dot = rng.uniform(-0.05, 0.05);
  }
  steps_ = 0;
  done_ = false;
  return observe(state_);
}

ControlEnv::Outcome ControlEnv::integrate(const State& s, double action) const {
  const double a = std::clamp(action, -1.0, 1.0);
  Outcome out;
  out.healthy = true;
  if (cfg_.variant == ControlVariant::kLineRacer) {
    State n = s;
    n.x = s.x + cfg_.dt * s.x_dot;
    n.x_dot = s.x_dot + cfg_.dt * (kRacerGain * a - kRacerDrag * s.x_dot);
    const double forward = n.x - s.x;
    out.reward = cfg_.w_forward * forward - cfg_.w_ctrl * a * a;
    out.state = n;
    return out;
  }

  // Stick-balance: the classic cart-pole equations of motion.
  const double force = kForceGain * a;
  const double total_mass = kCartMass + kPoleMass;
  const double pole_ml = kPoleMass * kPoleHalfLength;
  const double cos_t = std::cos(s.theta);
  const double sin_t = std::sin(s.theta);
  const double temp =
      (force + pole_ml * s.theta_dot * s.theta_dot * sin_t) / total_mass;
  const double theta_acc =
      (kGravity * sin_t - cos_t * temp) /
      (kPoleHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / total_mass));
  const double x_acc = temp - pole_ml * theta_acc * cos_t / total_mass;

  State n;
  n.x = s.x + cfg_.dt * s.x_dot;
  n.x_dot = s.x_dot + cfg_.dt * x_acc;
  n.theta = s.theta + cfg_.dt * s.theta_dot;
  n.theta_dot = s.theta_dot + cfg_.dt * theta_acc;

  const double forward = n.x - s.x;
  out.healthy =
      std::abs(n.theta) <= cfg_.healthy_angle && std::abs(n.x) <= kTrackLimit;
  out.reward = cfg_.w_forward * forward +
               cfg_.w_healthy * (out.healthy ? 1.0 : 0.0) - cfg_.w_ctrl * a * a;
  out.state = n;
  return out;
}

StepResult ControlEnv::step(const Tensor& action) {
  if (done_) {
    throw ContractViolation("ControlEnv: step() after done without reset()");
  }
  if (action.numel() != 1) {
    throw ContractViolation("ControlEnv: action must have 1 element, got " +
                            action.shape_str());
  }
  const Outcome out = integrate(state_, action.at(0));
  state_ = out.state;
  ++steps_;
  done_ = !out.healthy || steps_ >= cfg_.step_limit;
  StepResult r;
  r.reward = out.reward;
  r.done = done_;
  r.observation = observe(state_);
  return r;
}

std::vector<int> ControlEnv::observation_shape() const {
  return cfg_.variant == ControlVariant::kLineRacer ? std::vector<int>{1}
                                                    : std::vector<int>{4};
}

std::vector<double> ControlEnv::peek_rewards(
    std::span<const Tensor> actions) const {
  if (done_) throw ContractViolation("ControlEnv: episode is done");
  std::vector<double> out;
  out.reserve(actions.size());
  for (const Tensor& a : actions) {
    if (a.numel() != 1) {
      throw ContractViolation("ControlEnv: action must have 1 element");
    }
    out.push_back(integrate(state_, a.at(0)).reward);
  }
  return out;
}

std::unique_ptr<Env> ControlEnv::clone() const {
  return std::make_unique<ControlEnv>(*this);
}

ControlVariant control_variant_from_name(const std::string& name) {
  if (name == "line-racer") return ControlVariant::kLineRacer;
  if (name == "stick-balance") return ControlVariant::kStickBalance;
  throw ContractViolation("unknown control environment: " + name);
}

std::string control_variant_name(ControlVariant v) {
  return v == ControlVariant::kLineRacer ? "line-racer" : "stick-balance";
}

}  // namespace ftrl
