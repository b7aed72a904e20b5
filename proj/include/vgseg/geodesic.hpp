#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "vgseg/volume.hpp"

namespace vgseg {

// NodeDensity weights each step by A0 at the destination voxel; EdgeConnect
// by (1 - A0).
enum class GeodesicMode { NodeDensity, EdgeConnect };

struct Voxel {
  int z = 0;
  int y = 0;
  int x = 0;
  friend bool operator==(const Voxel&, const Voxel&) = default;
};

// Inclusive voxel box restricting a search.
struct Box {
  int z0 = 0, y0 = 0, x0 = 0;
  int z1 = -1, y1 = -1, x1 = -1;

  static Box whole(const Dims& dims) { return {0, 0, 0, dims.d - 1, dims.h - 1, dims.w - 1}; }
  static Box around(const Voxel& c, int radius, const Dims& dims);
  [[nodiscard]] bool contains(int z, int y, int x) const {
    return z >= z0 && z <= z1 && y >= y0 && y <= y1 && x >= x0 && x <= x1;
  }
};

struct NeighborOffset {
  int dz, dy, dx;
  double length;
};

// The 26 offsets in lexicographic (dz, dy, dx) order.
const std::array<NeighborOffset, 26>& neighbors26();

// Precomputed per-voxel terms of the discretized geodesic integrand:
//   S = X + X * Y0,  w = A0 (NodeDensity) or 1 - A0 (EdgeConnect)
// so that a 26-adjacent step p -> q costs w(q) * |S(q) - S(p)| / |q - p|.
class GeodesicCost {
 public:
  GeodesicCost(const Volume3D& vol, const SegMask& mask, const ProbabilityMap& prob,
               GeodesicMode mode);

  [[nodiscard]] const Dims& dims() const { return dims_; }
  [[nodiscard]] GeodesicMode mode() const { return mode_; }

  // Throws ContractError unless p and q are distinct 26-neighbours in bounds.
  [[nodiscard]] double step(const Voxel& p, const Voxel& q) const;

  [[nodiscard]] double signal(std::size_t i) const { return signal_[i]; }
  [[nodiscard]] double weight(std::size_t i) const { return weight_[i]; }

 private:
  Dims dims_;
  GeodesicMode mode_;
  std::vector<double> signal_;
  std::vector<double> weight_;
};

double step_cost(const Volume3D& vol, const SegMask& mask, const ProbabilityMap& prob,
                 const Voxel& p, const Voxel& q, GeodesicMode mode);

struct GeodesicField {
  Dims dims;
  std::vector<double> dist;  // +inf where unreached
  std::vector<std::size_t> seeds;

  [[nodiscard]] double at(int z, int y, int x) const { return dist[dims.index(z, y, x)]; }
};

struct GeodesicSearch {
  Box window;  // empty box (z1 < z0) means the whole grid
  // Voxels whose distance is >= cutoff are not expanded and stay +inf.
  double cutoff = std::numeric_limits<double>::infinity();
};

// Exact multi-source Dijkstra over the 26-connected grid. Ties in the queue
// are broken by lowest linear index.
GeodesicField geodesic_from_seeds(const GeodesicCost& cost, std::span<const Voxel> seeds,
                                  const GeodesicSearch& search = {});

GeodesicField geodesic_from_seeds(const Volume3D& vol, const SegMask& mask,
                                  const ProbabilityMap& prob, std::span<const Voxel> seeds,
                                  GeodesicMode mode);

// Reusable scratch for windowed single-source searches. Distances are kept
// in a flat window-local buffer to avoid touching the whole grid per call.
class WindowedGeodesic {
 public:
  explicit WindowedGeodesic(const GeodesicCost& cost) : cost_(cost) {}

  // Runs Dijkstra from `seed` restricted to `window`; returns a view of
  // window-local distances (z-major inside the box).
  const std::vector<double>& run(const Voxel& seed, const Box& window,
                                 double cutoff = std::numeric_limits<double>::infinity());

  [[nodiscard]] const Box& window() const { return window_; }
  [[nodiscard]] double at(int z, int y, int x) const;

 private:
  const GeodesicCost& cost_;
  Box window_{};
  int wd_ = 0, wh_ = 0, ww_ = 0;
  std::vector<double> dist_;
};

}  // namespace vgseg
