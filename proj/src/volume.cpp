#include "vgseg/volume.hpp"

#include <cmath>

namespace vgseg {

std::string to_string(const Dims& dims) {
  return std::to_string(dims.d) + "x" + std::to_string(dims.h) + "x" + std::to_string(dims.w);
}

void validate(const Volume3D& vol) {
  for (std::size_t i = 0; i < vol.size(); ++i) {
    const float v = vol[i];
    if (!std::isfinite(v)) {
      throw DataError("volume holds a non-finite value at voxel " + std::to_string(i));
    }
    if (v < 0.0f || v > 1.0f) {
      throw DataError("volume value " + std::to_string(v) + " outside [0, 1] at voxel " +
                      std::to_string(i));
    }
  }
}

void validate(const ProbabilityMap& prob) {
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const float v = prob[i];
    if (!std::isfinite(v) || v < kProbabilityEpsilon || v > 1.0f - kProbabilityEpsilon) {
      throw DataError("probability " + std::to_string(v) + " outside [eps, 1-eps] at voxel " +
                      std::to_string(i));
    }
  }
}

void validate(const SegMask& mask) {
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] > 1) {
      throw DataError("mask value " + std::to_string(int(mask[i])) + " is not binary at voxel " +
                      std::to_string(i));
    }
  }
}

void normalize_min_max(Volume3D& vol) {
  if (vol.size() == 0) return;
  const float lo = vol.data().minCoeff();
  const float hi = vol.data().maxCoeff();
  if (hi > lo) {
    const double range = double(hi) - double(lo);
    for (std::size_t i = 0; i < vol.size(); ++i) {
      vol[i] = static_cast<float>((double(vol[i]) - lo) / range);
    }
  } else {
    vol.data().setZero();
  }
}

ProbabilityMap clamp_probabilities(ProbabilityMap prob, float eps) {
  prob.data() = prob.data().max(eps).min(1.0f - eps);
  return prob;
}

std::size_t count_nonzero(const SegMask& mask) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) n += mask[i] != 0;
  return n;
}

}  // namespace vgseg
