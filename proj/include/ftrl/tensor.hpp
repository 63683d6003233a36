#ifndef FTRL_TENSOR_HPP
#define FTRL_TENSOR_HPP

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "ftrl/common.hpp"

namespace ftrl {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatRM>;
using ConstMatMap = Eigen::Map<const MatRM>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

/// Dense row-major tensor of 64-bit reals. Rank 0 (scalar), 1 (vector) and
/// 2 (matrix) cover everything this framework computes with. Elements are
/// required to be finite; construction rejects NaN/Inf outright and graph
/// operations re-check their outputs while finite checks are enabled.
class Tensor {
 public:
  Tensor() = default;

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double v);
  static Tensor from(std::vector<int> shape, std::vector<double> data);
  static Tensor vector(std::vector<double> data);
  static Tensor matrix(int rows, int cols, std::vector<double> data);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty() && shape_.empty(); }

  /// Row/column extents; rank-1 tensors count as a single row, rank-0 as 1x1.
  int rows() const;
  int cols() const;

  double& at(std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }

  /// Value of a one-element tensor.
  double item() const;

  std::span<const double> data() const { return data_; }
  std::span<double> mutable_data() { return data_; }

  ConstMatMap mat() const { return ConstMatMap(data_.data(), rows(), cols()); }
  MatMap mutable_mat() { return MatMap(data_.data(), rows(), cols()); }
  ConstVecMap vec() const { return ConstVecMap(data_.data(), numel()); }
  VecMap mutable_vec() { return VecMap(data_.data(), numel()); }

  /// Same storage reinterpreted under a new shape (element count must match).
  Tensor reshaped(std::vector<int> shape) const;
  /// Flat rank-1 view of the elements.
  Tensor flattened() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  /// Throws NonFiniteError naming `context` if any element is NaN/Inf.
  void require_finite(const std::string& context) const;

  std::string shape_str() const;

  bool requires_grad = false;

 private:
  Tensor(std::vector<int> shape, std::vector<double> data);

  std::vector<int> shape_;
  std::vector<double> data_;
};

/// True when both tensors have equal shape and bitwise-equal elements.
bool bit_equal(const Tensor& a, const Tensor& b);

std::string shape_to_string(std::span<const int> shape);

}  // namespace ftrl

#endif  // FTRL_TENSOR_HPP
