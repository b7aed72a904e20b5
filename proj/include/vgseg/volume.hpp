#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "vgseg/errors.hpp"

namespace vgseg {

// Voxel counts in (D, H, W) order; the linear index is z-major:
// idx = (z * H + y) * W + x.
struct Dims {
  int d = 0;
  int h = 0;
  int w = 0;

  [[nodiscard]] std::size_t size() const {
    return static_cast<std::size_t>(d) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  [[nodiscard]] bool empty() const { return d <= 0 || h <= 0 || w <= 0; }
  [[nodiscard]] std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * h + y) * w + x;
  }
  [[nodiscard]] bool contains(int z, int y, int x) const {
    return z >= 0 && z < d && y >= 0 && y < h && x >= 0 && x < w;
  }
  [[nodiscard]] std::array<int, 3> coords(std::size_t idx) const {
    const int x = static_cast<int>(idx % w);
    const int y = static_cast<int>((idx / w) % h);
    const int z = static_cast<int>(idx / (static_cast<std::size_t>(w) * h));
    return {z, y, x};
  }
  [[nodiscard]] Dims halved() const { return {d / 2, h / 2, w / 2}; }

  friend bool operator==(const Dims&, const Dims&) = default;
};

std::string to_string(const Dims& dims);

// Millimeters per voxel along (z, y, x).
struct Spacing {
  double z = 1.0;
  double y = 1.0;
  double x = 1.0;

  friend bool operator==(const Spacing&, const Spacing&) = default;
};

struct VolumeTag {};
struct ProbabilityTag {};
struct MaskTag {};
struct LabelTag {};

// Dense 3D scalar field. The tag keeps intensity volumes, probability maps,
// masks and label maps from being mixed up at call sites.
template <typename Scalar, typename Tag>
class Field3 {
 public:
  using scalar_type = Scalar;
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Field3() = default;
  Field3(Dims dims, Spacing spacing, Scalar fill = Scalar(0))
      : dims_(dims), spacing_(spacing),
        data_(Storage::Constant(static_cast<Eigen::Index>(dims.size()), fill)) {}
  Field3(Dims dims, Spacing spacing, Storage data)
      : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    if (static_cast<std::size_t>(data_.size()) != dims_.size()) {
      throw ContractError("field data length " + std::to_string(data_.size()) +
                          " does not match dims " + to_string(dims_));
    }
  }

  [[nodiscard]] const Dims& dims() const { return dims_; }
  [[nodiscard]] const Spacing& spacing() const { return spacing_; }
  [[nodiscard]] std::size_t size() const { return dims_.size(); }

  [[nodiscard]] const Storage& data() const { return data_; }
  Storage& data() { return data_; }

  Scalar operator[](std::size_t i) const { return data_[static_cast<Eigen::Index>(i)]; }
  Scalar& operator[](std::size_t i) { return data_[static_cast<Eigen::Index>(i)]; }
  Scalar operator()(int z, int y, int x) const { return (*this)[dims_.index(z, y, x)]; }
  Scalar& operator()(int z, int y, int x) { return (*this)[dims_.index(z, y, x)]; }

  template <typename OtherScalar, typename OtherTag>
  [[nodiscard]] bool same_grid(const Field3<OtherScalar, OtherTag>& other) const {
    return dims_ == other.dims();
  }

  friend bool operator==(const Field3& a, const Field3& b) {
    return a.dims_ == b.dims_ && a.spacing_ == b.spacing_ &&
           (a.data_ == b.data_).all();
  }

 private:
  Dims dims_{};
  Spacing spacing_{};
  Storage data_{};
};

using Volume3D = Field3<float, VolumeTag>;
using ProbabilityMap = Field3<float, ProbabilityTag>;
using SegMask = Field3<std::uint8_t, MaskTag>;
using LabelVolume = Field3<std::uint32_t, LabelTag>;

inline constexpr float kProbabilityEpsilon = 1e-6f;

// Throws DataError unless every value is finite and within [0, 1].
void validate(const Volume3D& vol);
// Throws DataError unless every value is within [eps, 1 - eps].
void validate(const ProbabilityMap& prob);
// Throws DataError unless every value is 0 or 1.
void validate(const SegMask& mask);

// Per-volume min-max rescale to [0, 1]. A constant volume maps to 0.
void normalize_min_max(Volume3D& vol);

// Clamp every probability to [eps, 1 - eps].
ProbabilityMap clamp_probabilities(ProbabilityMap prob, float eps = kProbabilityEpsilon);

// Throws ContractError if the two grids differ.
template <typename A, typename TA, typename B, typename TB>
void require_same_grid(const Field3<A, TA>& a, const Field3<B, TB>& b, const char* what) {
  if (!(a.dims() == b.dims())) {
    throw ContractError(std::string(what) + ": dims mismatch " + to_string(a.dims()) +
                        " vs " + to_string(b.dims()));
  }
}

std::size_t count_nonzero(const SegMask& mask);

}  // namespace vgseg
