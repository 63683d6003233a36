#include "ftrl/nn.hpp"

#include <cmath>

namespace ftrl {

Parameter& ParameterStore::add(std::string name, Tensor value) {
  if (find(name) != nullptr) {
    throw ContractViolation("duplicate parameter name: " + name);
  }
  Parameter p;
  p.name = std::move(name);
  p.value = std::move(value);
  items_.push_back(std::move(p));
  return items_.back();
}

Parameter* ParameterStore::find(std::string_view name) {
  for (Parameter& p : items_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  for (const Parameter& p : items_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  out.reserve(items_.size());
  for (Parameter& p : items_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(items_.size());
  for (const Parameter& p : items_) out.push_back(&p);
  return out;
}

std::int64_t ParameterStore::total_elements() const {
  std::int64_t n = 0;
  for (const Parameter& p : items_) n += p.value.numel();
  return n;
}

std::vector<Parameter> ParameterStore::snapshot() const {
  return {items_.begin(), items_.end()};
}

void ParameterStore::restore(const std::vector<Parameter>& snap) {
  if (snap.size() != items_.size()) {
    throw ContractViolation("snapshot size mismatch");
  }
  std::size_t i = 0;
  for (Parameter& p : items_) {
    const Parameter& s = snap[i++];
    if (p.name != s.name) {
      throw ContractViolation("snapshot parameter order mismatch at " + p.name);
    }
    p.value = s.value;
    p.frozen = s.frozen;
    p.adam_m = s.adam_m;
    p.adam_v = s.adam_v;
    p.adam_steps = s.adam_steps;
  }
}

Var GraphContext::use(Parameter& p) {
  auto it = leaves_.find(&p);
  if (it != leaves_.end()) return it->second;
  Var v = p.frozen ? graph_->constant(p.value) : graph_->param(p.value);
  leaves_.emplace(&p, v);
  if (!p.frozen) used_.push_back(&p);
  return v;
}

std::vector<std::pair<Parameter*, Tensor>> GraphContext::gradients(
    Var scalar_loss) const {
  std::vector<Var> wrt;
  wrt.reserve(used_.size());
  for (Parameter* p : used_) wrt.push_back(leaves_.at(p));
  std::vector<Tensor> grads = graph_->grad(scalar_loss, wrt);
  std::vector<std::pair<Parameter*, Tensor>> out;
  out.reserve(used_.size());
  for (std::size_t i = 0; i < used_.size(); ++i) {
    out.emplace_back(used_[i], std::move(grads[i]));
  }
  return out;
}

void Adam::step(std::span<const std::pair<Parameter*, Tensor>> grads) const {
  for (const auto& [p, g] : grads) {
    if (p->frozen) continue;
    if (!p->value.same_shape(g)) {
      throw ContractViolation("gradient shape " + g.shape_str() +
                              " does not match parameter " + p->name + " " +
                              p->value.shape_str());
    }
    if (p->adam_m.numel() != p->value.numel()) {
      p->adam_m = Tensor::zeros(p->value.shape());
      p->adam_v = Tensor::zeros(p->value.shape());
      p->adam_steps = 0;
    }
    const std::int64_t t = ++p->adam_steps;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
    auto value = p->value.mutable_data();
    auto m = p->adam_m.mutable_data();
    auto v = p->adam_v.mutable_data();
    const auto gd = g.data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gd[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gd[i] * gd[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p->value.require_finite("adam update of " + p->name);
  }
}

double clip_global_norm(std::vector<std::pair<Parameter*, Tensor>>& grads,
                        double max_norm) {
  double sq = 0.0;
  for (const auto& [p, g] : grads) {
    for (double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& [p, g] : grads) {
      for (double& v : g.mutable_data()) v *= s;
    }
  }
  return norm;
}

void init_uniform_fanin(Tensor& t, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.mutable_data()) v = rng.uniform(-bound, bound);
}

Mlp::Mlp(ParameterStore& store, const std::string& prefix, std::vector<int> dims,
         Rng& rng, bool zero_init)
    : dims_(std::move(dims)) {
  if (dims_.size() < 2) {
    throw ContractViolation("Mlp needs at least input and output dims");
  }
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    Tensor w = Tensor::zeros({dims_[l], dims_[l + 1]});
    if (!zero_init) init_uniform_fanin(w, dims_[l], rng);
    Tensor b = Tensor::zeros({dims_[l + 1]});
    params_.push_back(&store.add(prefix + ".w" + std::to_string(l), std::move(w)));
    params_.push_back(&store.add(prefix + ".b" + std::to_string(l), std::move(b)));
  }
}

Var Mlp::forward(GraphContext& ctx, Var x) const {
  Var h = x;
  const std::size_t layers = params_.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    h = add(matmul(h, ctx.use(*params_[2 * l])), ctx.use(*params_[2 * l + 1]));
    if (l + 1 < layers) h = tanh(h);
  }
  return h;
}

}  // namespace ftrl
