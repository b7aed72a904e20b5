#pragma once

#include "vgseg/volume.hpp"

namespace vgseg {

// Footprint of the grayscale dilation applied to preliminary probabilities.
// Axial: kernel_w x kernel_w square in each z slice. Cube: kernel_w^3.
enum class DilationFootprint { Axial, Cube };

// Grayscale (max) dilation. kernel_w must be odd and >= 1.
ProbabilityMap dilate_prob(const ProbabilityMap& a0, int kernel_w = 7,
                           DilationFootprint footprint = DilationFootprint::Axial);

// voxel = 1 iff a0 >= tau; tau in (0, 1).
SegMask threshold_mask(const ProbabilityMap& a0, float tau = 0.5f);

// Binary dilation with a (2r+1)^3 cube.
SegMask dilate_mask(const SegMask& mask, int radius);

}  // namespace vgseg
