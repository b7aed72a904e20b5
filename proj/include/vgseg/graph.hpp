#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vgseg/mapping.hpp"
#include "vgseg/supervoxel.hpp"
#include "vgseg/volume.hpp"

namespace vgseg {

// Node statistics are stored in single precision so that the 9-significant
// digit text format round-trips them exactly.
struct NodeRecord {
  std::int32_t id = 0;
  Eigen::Vector3f centroid = Eigen::Vector3f::Zero();  // (z, y, x) voxel coordinates
  std::int64_t size = 0;
  float mean_gray = 0.0f;
  float prob_mass = 0.0f;

  friend bool operator==(const NodeRecord&, const NodeRecord&) = default;
};

struct EdgeRecord {
  std::int32_t i = 0;  // i < j
  std::int32_t j = 0;
  float d_geo = 0.0f;  // modified geodesic distance between the centroids

  friend bool operator==(const EdgeRecord&, const EdgeRecord&) = default;
};

struct GraphBuildParams {
  double t_geo = 0.30;
  double candidate_radius = 10.0;  // voxels

  void validate() const;
};

// Three SLIC lattice steps.
double default_candidate_radius(const Dims& dims, int n_segments);

struct VesselGraph {
  Dims dims;
  std::uint64_t params_hash = 0;
  std::vector<NodeRecord> nodes;
  std::vector<EdgeRecord> edges;

  [[nodiscard]] std::vector<Eigen::Vector3d> centroids() const;
  friend bool operator==(const VesselGraph&, const VesselGraph&) = default;
};

std::uint64_t params_hash(const SlicParams& slic, const GraphBuildParams& build);

std::vector<NodeRecord> nodes_from_supervoxels(const SupervoxelMap& map, const Volume3D& vol,
                                               const ProbabilityMap& prob);

// Edge (i, j) iff the EdgeConnect geodesic between the two centroid voxels is
// below t_geo in either direction, searched within candidate_radius.
std::vector<EdgeRecord> connect_edges(const std::vector<NodeRecord>& nodes, const Volume3D& vol,
                                      const SegMask& mask, const ProbabilityMap& prob,
                                      const GraphBuildParams& params);

VesselGraph build_graph(const Volume3D& vol, const SegMask& mask, const ProbabilityMap& prob,
                        const SlicParams& slic, const GraphBuildParams& build);

// F_X = phi(X * Y0 * A0): one gray feature per node.
template <typename Scalar>
MatrixX<Scalar> node_gray_features(const Volume3D& vol, const SegMask& mask,
                                   const ProbabilityMap& prob, const VesselGraph& graph,
                                   const MappingPair<Scalar>& mapping);

// Text format:
//   VGRAPH v1
//   DIMS D H W
//   NODES K
//   EDGES M
//   [# params <hex>]
//   NODE id cx cy cz size mean_gray prob_mass   (K lines)
//   EDGE i j dgeo                               (M lines)
void write_graph(std::ostream& out, const VesselGraph& g);
VesselGraph read_graph(std::istream& in, const std::string& source = "<stream>");
void serialize_graph(const VesselGraph& g, const std::filesystem::path& path);
VesselGraph deserialize_graph(const std::filesystem::path& path);

}  // namespace vgseg
