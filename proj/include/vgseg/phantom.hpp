#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

#include "vgseg/volume.hpp"

namespace vgseg {

enum class TubeOrientation {
  Random,  // each tree runs between opposite faces of a randomly chosen axis
  Axial,   // every trunk runs along z
};

struct PhantomConfig {
  Dims dims{32, 32, 32};
  Spacing spacing{};
  int tubes_min = 1;
  int tubes_max = 3;
  double radius_min = 1.5;  // voxels
  double radius_max = 3.0;
  double branch_prob = 0.5;
  double background = 0.2;
  double contrast = 0.5;
  double noise_std = 0.05;
  // 0 gives straight trunks; 1 lets interior control points wander by a
  // quarter of the volume extent.
  double tortuosity = 0.3;
  TubeOrientation orientation = TubeOrientation::Random;
  std::uint64_t seed = 0;
  int max_retries = 64;

  void validate() const;
};

// Swept sphere of constant radius along a polyline (voxel coordinates z, y, x).
struct Tube {
  std::vector<Eigen::Vector3d> centerline;
  double radius = 1.0;
};

struct Phantom {
  Volume3D volume;
  SegMask mask;
  std::vector<Tube> tubes;
};

// Marks every voxel whose center lies within `radius` of a tube centerline.
SegMask rasterize_tubes(const Dims& dims, const Spacing& spacing, std::span<const Tube> tubes);

// Deterministic in cfg.seed. Throws GenerationError when a tube cannot be
// placed inside the volume within cfg.max_retries attempts.
Phantom generate_phantom(const PhantomConfig& cfg);

}  // namespace vgseg
