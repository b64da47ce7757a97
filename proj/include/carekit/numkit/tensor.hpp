#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "carekit/numkit/errors.hpp"

namespace carekit {

using Index = Eigen::Index;

/// Row-major dense matrix. Every tensor is stored as
/// (product of leading dims) x (last dim).
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Boolean attention/visibility mask, same layout as Matrix.
using MaskMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense real array with shape metadata and an optional gradient slot.
template <typename Scalar>
class Tensor {
 public:
  using MatrixType = Matrix<Scalar>;

  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : shape_(std::move(shape)), requires_grad_(requires_grad) {
    validate_shape();
    data_ = MatrixType::Zero(leading(), last());
  }

  Tensor(Shape shape, MatrixType data, bool requires_grad = false)
      : shape_(std::move(shape)), data_(std::move(data)), requires_grad_(requires_grad) {
    validate_shape();
    if (data_.size() != shape_size(shape_)) {
      throw DimensionError("tensor data has " + std::to_string(data_.size()) +
                           " values but shape " + shape_string(shape_) + " needs " +
                           std::to_string(shape_size(shape_)));
    }
    data_.resize(leading(), last());
  }

  static Tensor from_matrix(MatrixType data, bool requires_grad = false) {
    Shape shape{data.rows(), data.cols()};
    return Tensor(std::move(shape), std::move(data), requires_grad);
  }

  const Shape& shape() const { return shape_; }
  Index rows() const { return data_.rows(); }
  Index cols() const { return data_.cols(); }
  Index size() const { return data_.size(); }

  MatrixType& data() { return data_; }
  const MatrixType& data() const { return data_; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool value) { requires_grad_ = value; }

  bool has_grad() const { return grad_.has_value(); }
  MatrixType& grad() {
    if (!grad_) grad_ = MatrixType::Zero(data_.rows(), data_.cols());
    return *grad_;
  }
  const MatrixType& grad() const {
    if (!grad_) throw ContractError("tensor has no gradient");
    return *grad_;
  }
  void zero_grad() {
    if (grad_) grad_->setZero();
  }
  void clear_grad() { grad_.reset(); }

 private:
  Index leading() const {
    if (shape_.size() <= 1) return 1;
    return shape_size(Shape(shape_.begin(), shape_.end() - 1));
  }
  Index last() const { return shape_.empty() ? 1 : shape_.back(); }

  void validate_shape() const {
    for (Index d : shape_) {
      if (d <= 0) throw DimensionError("tensor dims must be positive, got " + shape_string(shape_));
    }
  }

  Shape shape_;
  MatrixType data_;
  std::optional<MatrixType> grad_;
  bool requires_grad_ = false;
};

}  // namespace carekit
