#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "vgseg/errors.hpp"
#include "vgseg/volume.hpp"

namespace vgseg::ad {

using Shape = std::vector<int>;

std::string to_string(const Shape& shape);
std::int64_t numel(const Shape& shape);

// Dense tensor with at most five axes.
//
// Layout conventions:
//  * rank-2 tensors {rows, cols} are column-major matrices (Eigen default);
//  * grid tensors {C, D, H, W} keep each channel as one contiguous z-major
//    plane, so the same buffer read as a (D*H*W) x C column-major matrix is
//    the per-cell feature matrix F of the feature mappings;
//  * other ranks are row-major (last axis fastest), e.g. conv weights
//    {Cout, Cin, k, k, k}.
// Reshaping between {N, C} and {C, D, H, W} therefore never moves data.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = Scalar(0));
  Tensor(Shape shape, Array data);

  static Tensor scalar(Scalar v) { return Tensor(Shape{}, v); }
  static Tensor grid(int channels, const Dims& dims, Scalar fill = Scalar(0)) {
    return Tensor(Shape{channels, dims.d, dims.h, dims.w}, fill);
  }
  static Tensor from_matrix(const Matrix& m);

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] int rank() const { return static_cast<int>(shape_.size()); }
  [[nodiscard]] int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  [[nodiscard]] Eigen::Index numel() const { return data_.size(); }
  [[nodiscard]] bool is_grid() const { return rank() == 4; }

  [[nodiscard]] const Array& data() const { return data_; }
  Array& data() { return data_; }
  Scalar operator[](Eigen::Index i) const { return data_[i]; }
  Scalar& operator[](Eigen::Index i) { return data_[i]; }
  [[nodiscard]] Scalar item() const;

  // Grid tensors: spatial dims and voxel count.
  [[nodiscard]] Dims grid_dims() const;
  [[nodiscard]] Eigen::Index cells() const;
  [[nodiscard]] int channels() const { return dim(0); }

  // Matrix view: rank 2 as-is; grid as cells x C; rank <= 1 as a column.
  [[nodiscard]] Eigen::Index rows() const;
  [[nodiscard]] Eigen::Index cols() const;
  MatrixMap mat() { return MatrixMap(data_.data(), rows(), cols()); }
  [[nodiscard]] ConstMatrixMap mat() const { return ConstMatrixMap(data_.data(), rows(), cols()); }
  [[nodiscard]] Matrix to_matrix() const { return mat(); }

  [[nodiscard]] Tensor reshaped(Shape shape) const;
  [[nodiscard]] bool all_finite() const;

  template <typename Other>
  [[nodiscard]] Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

 private:
  Shape shape_;
  Array data_;
};

// Throws ContractError naming both shapes when they differ.
void require_same_shape(const Shape& a, const Shape& b, const char* op);

}  // namespace vgseg::ad
