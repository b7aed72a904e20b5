#include "vgseg/morphology.hpp"

#include <algorithm>
#include <vector>

namespace vgseg {

namespace {

// Running max along one axis with half-width r. stride/count describe the
// axis; base iterates over every line orthogonal to it.
template <typename Scalar>
void max_filter_axis(Eigen::Array<Scalar, Eigen::Dynamic, 1>& data, const Dims& dims, int axis,
                     int r) {
  if (r <= 0) return;
  const int n = axis == 0 ? dims.d : axis == 1 ? dims.h : dims.w;
  const std::size_t stride = axis == 0 ? std::size_t(dims.h) * dims.w : axis == 1 ? dims.w : 1;
  std::vector<Scalar> line(n);
  const int n0 = axis == 0 ? 1 : dims.d;
  const int n1 = axis == 1 ? 1 : dims.h;
  const int n2 = axis == 2 ? 1 : dims.w;
  for (int z = 0; z < n0; ++z) {
    for (int y = 0; y < n1; ++y) {
      for (int x = 0; x < n2; ++x) {
        const std::size_t base = dims.index(z, y, x);
        for (int i = 0; i < n; ++i) line[i] = data[Eigen::Index(base + i * stride)];
        for (int i = 0; i < n; ++i) {
          const int lo = std::max(0, i - r);
          const int hi = std::min(n - 1, i + r);
          Scalar m = line[lo];
          for (int j = lo + 1; j <= hi; ++j) m = std::max(m, line[j]);
          data[Eigen::Index(base + i * stride)] = m;
        }
      }
    }
  }
}

}  // namespace

ProbabilityMap dilate_prob(const ProbabilityMap& a0, int kernel_w, DilationFootprint footprint) {
  if (kernel_w < 1 || kernel_w % 2 == 0) {
    throw ParameterError("dilation kernel width must be odd and >= 1, got " +
                         std::to_string(kernel_w));
  }
  ProbabilityMap out = a0;
  const int r = kernel_w / 2;
  max_filter_axis(out.data(), out.dims(), 2, r);
  max_filter_axis(out.data(), out.dims(), 1, r);
  if (footprint == DilationFootprint::Cube) max_filter_axis(out.data(), out.dims(), 0, r);
  return out;
}

SegMask threshold_mask(const ProbabilityMap& a0, float tau) {
  if (!(tau > 0.0f && tau < 1.0f)) {
    throw ParameterError("threshold must lie in (0, 1), got " + std::to_string(tau));
  }
  SegMask mask(a0.dims(), a0.spacing());
  for (std::size_t i = 0; i < a0.size(); ++i) mask[i] = a0[i] >= tau ? 1 : 0;
  return mask;
}

SegMask dilate_mask(const SegMask& mask, int radius) {
  if (radius < 0) throw ParameterError("dilation radius must be >= 0");
  SegMask out = mask;
  for (int axis = 0; axis < 3; ++axis) max_filter_axis(out.data(), out.dims(), axis, radius);
  return out;
}

}  // namespace vgseg
