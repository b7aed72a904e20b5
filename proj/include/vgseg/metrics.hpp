#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "vgseg/graph.hpp"
#include "vgseg/volume.hpp"

namespace vgseg {

// 2|S n G| / (|S| + |G|); 1.0 when both are empty.
double dice_metric(const SegMask& s, const SegMask& g);

// Mask voxels with at least one 6-neighbor outside the mask or the grid.
SegMask surface_voxels(const SegMask& m);

// Mean of the Euclidean (mm) distances from every surface voxel of each mask
// to the nearest surface voxel of the other, pooled over both surfaces.
// MetricError when either mask is empty.
double assd(const SegMask& s, const SegMask& g, const Spacing& spacing);

// True when deleting the center of the 3x3x3 neighborhood `cube` (index
// (dz+1)*9 + (dy+1)*3 + dx+1) keeps exactly one 26-connected object
// component in N26 and exactly one 6-connected background component in N18
// that touches the center.
bool is_simple_point(const std::array<std::uint8_t, 27>& cube);

// Directional sequential thinning over the six face directions; voxels with
// fewer than two object 26-neighbors are kept. Stops when a full pass deletes
// nothing.
SegMask skeletonize3d(const SegMask& m);

// |S n Q(G)| / |Q(G)|; MetricError if G is empty.
double skeleton_recall(const SegMask& s, const SegMask& g);
// |Q(S) n G| / |Q(S)|; MetricError if S is empty.
double skeleton_precision(const SegMask& s, const SegMask& g);

// Number of 26-connected components.
int count_components26(const SegMask& m);

struct GraphStats {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  double mean_degree = 0.0;  // 2|E| / |V|
};
GraphStats graph_stats(const VesselGraph& g);

struct MetricsReport {
  double dice = 0.0;
  std::optional<double> assd_mm;  // empty when a mask is empty
  std::optional<double> sr;
  std::optional<double> sp;
  std::optional<GraphStats> graph;

  // Single-line JSON: dice, assd_mm, sr, sp, nodes, mean_degree (null when
  // not applicable).
  [[nodiscard]] std::string to_json() const;
};

MetricsReport evaluate_masks(const SegMask& pred, const SegMask& truth, const VesselGraph* graph = nullptr);

}  // namespace vgseg
