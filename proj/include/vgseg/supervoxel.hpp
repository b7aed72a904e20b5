#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "vgseg/volume.hpp"

namespace vgseg {

struct SlicParams {
  int n_segments = 100;
  double min_size_factor = 0.5;
  int iterations = 10;
  double search_radius_factor = 2.0;

  void validate() const;
};

// Supervoxel count that keeps the reference node density (14000 segments per
// 256^3 voxels) at smaller grid sizes.
int desk_n_segments(const Dims& dims);

struct Centroid {
  Eigen::Vector3d pos;  // (z, y, x) voxel coordinates
  double gray = 0.0;
};

struct SupervoxelMap {
  LabelVolume labels;
  int count = 0;  // K; labels are 0..K-1

  [[nodiscard]] const Dims& dims() const { return labels.dims(); }
  [[nodiscard]] std::vector<std::size_t> sizes() const;
};

// Regular lattice with step cbrt(N / n_segments), each seed nudged to the
// lowest-gradient voxel of its 3^3 neighbourhood.
std::vector<Centroid> init_centroids(const Volume3D& vol, const SlicParams& params);

// Geodesic SLIC: each voxel joins the centroid minimising
//   norm(d_gray) + norm(d_dis) + norm(d_geo)
// among centroids whose search window covers it. Terms are min-max normalised
// over the candidate pairs of each iteration.
SupervoxelMap run_slic(const Volume3D& vol, const ProbabilityMap& prob, const SegMask& mask,
                       const SlicParams& params);

// Two-term (gray + spatial) SLIC with the same seeding, normalisation and
// post-processing; the reference the geodesic variant collapses to when its
// geodesic term vanishes.
SupervoxelMap run_classic_slic(const Volume3D& vol, const SlicParams& params);

// Repairs connectivity (every label keeps its largest 26-connected piece;
// stray pieces and unlabelled voxels join the most similar adjacent region)
// and then enforces the minimum size. Labels >= K count as unlabelled.
SupervoxelMap enforce_connectivity(const LabelVolume& raw, const Volume3D& vol,
                                   const SlicParams& params);

// Merges every class smaller than min_size_factor * N / K into its most
// similar (mean gray) 26-adjacent class until none remain.
SupervoxelMap enforce_min_size(const SupervoxelMap& map, const Volume3D& vol,
                               const SlicParams& params);

struct PartitionReport {
  bool complete = true;       // every voxel carries a label < K
  bool nonempty = true;       // every label used
  bool connected = true;      // every class is one 26-connected component
  std::size_t min_size = 0;
};

PartitionReport check_partition(const SupervoxelMap& map);

}  // namespace vgseg
