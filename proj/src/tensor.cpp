#include "ftrl/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace ftrl {

namespace {
bool g_finite_checks = true;

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}
}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

std::string shape_to_string(std::span<const int> shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (int e : shape_) {
    if (e <= 0) {
      throw ContractViolation("tensor extents must be positive, got " +
                              shape_to_string(shape_));
    }
  }
  if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw ContractViolation("tensor data size " + std::to_string(data_.size()) +
                            " does not match shape " + shape_to_string(shape_));
  }
  require_finite("tensor construction");
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(std::vector<int> shape) {
  std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)), v);
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data) {
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::vector(std::vector<double> data) {
  const int n = static_cast<int>(data.size());
  return Tensor({n}, std::move(data));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

int Tensor::rows() const {
  if (shape_.size() == 2) return shape_[0];
  return 1;
}

int Tensor::cols() const {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  return 1;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractViolation("item() requires a one-element tensor, shape " +
                            shape_str());
  }
  return data_[0];
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_numel(shape) != numel()) {
    throw ContractViolation("reshape from " + shape_str() + " to " +
                            shape_to_string(shape) + " changes element count");
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::flattened() const {
  return reshaped({static_cast<int>(numel())});
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::require_finite(const std::string& context) const {
  if (!g_finite_checks) return;
  if (!all_finite()) {
    throw NonFiniteError("non-finite value in " + context + ", shape " +
                         shape_str());
  }
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    // Bitwise comparison: distinguishes -0.0 from 0.0 and fails on NaN,
    // which is what the determinism contracts require.
    if (std::bit_cast<std::uint64_t>(da[i]) != std::bit_cast<std::uint64_t>(db[i])) {
      return false;
    }
  }
  return true;
}

}  // namespace ftrl
