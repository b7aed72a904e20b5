#include "vgseg/autodiff/tensor.hpp"

#include <cmath>

namespace vgseg::ad {

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ContractError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
  }
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Scalar fill)
    : shape_(std::move(shape)), data_(Array::Constant(Eigen::Index(ad::numel(shape_)), fill)) {
  if (shape_.size() > 5) throw ContractError("tensor rank above 5: " + to_string(shape_));
  for (int d : shape_) {
    if (d < 0) throw ContractError("negative tensor extent in " + to_string(shape_));
  }
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Array data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.size() > 5) throw ContractError("tensor rank above 5: " + to_string(shape_));
  if (data_.size() != ad::numel(shape_)) {
    throw ContractError("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + to_string(shape_));
  }
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_matrix(const Matrix& m) {
  Array data = Eigen::Map<const Array>(m.data(), m.size());
  return Tensor(Shape{int(m.rows()), int(m.cols())}, std::move(data));
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (data_.size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

template <typename Scalar>
Dims Tensor<Scalar>::grid_dims() const {
  if (!is_grid()) throw ContractError("expected a {C,D,H,W} grid tensor, got " + to_string(shape_));
  return {shape_[1], shape_[2], shape_[3]};
}

template <typename Scalar>
Eigen::Index Tensor<Scalar>::cells() const {
  return Eigen::Index(grid_dims().size());
}

template <typename Scalar>
Eigen::Index Tensor<Scalar>::rows() const {
  switch (rank()) {
    case 2: return shape_[0];
    case 4: return cells();
    default:
      if (rank() <= 1) return data_.size();
      throw ContractError("no matrix view for shape " + to_string(shape_));
  }
}

template <typename Scalar>
Eigen::Index Tensor<Scalar>::cols() const {
  switch (rank()) {
    case 2: return shape_[1];
    case 4: return shape_[0];
    default:
      if (rank() <= 1) return 1;
      throw ContractError("no matrix view for shape " + to_string(shape_));
  }
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::reshaped(Shape shape) const {
  if (ad::numel(shape) != data_.size()) {
    throw ContractError("reshape " + to_string(shape_) + " -> " + to_string(shape) +
                        " changes element count");
  }
  return Tensor(std::move(shape), data_);
}

template <typename Scalar>
bool Tensor<Scalar>::all_finite() const {
  return data_.isFinite().all();
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace vgseg::ad
