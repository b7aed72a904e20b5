#pragma once

#include <memory>
#include <vector>

#include "vgseg/graph.hpp"
#include "vgseg/mapping.hpp"
#include "vgseg/model/graph_unet.hpp"
#include "vgseg/model/unet.hpp"

namespace vgseg::model {

// Node set, edges and grid mapping of one UNET-G level.
template <typename S>
struct LevelGraph {
  int level = 0;
  ad::IndexList node_ids;  // level-0 node id of every node
  ad::IndexList selected;  // positions in the parent level (empty at level 0)
  ad::EdgeList edges;
  std::shared_ptr<const MappingPair<S>> mapping;  // outlives every tape that uses it
  Tensor<S> gray;                                 // F_X {N, 1}
};

// Per-volume graph inputs at level 0.
template <typename S>
struct GraphInput {
  std::vector<Eigen::Vector3d> centroids;
  LevelGraph<S> level0;
};

// F_X = f(X * Y0 * A0) with the level-0 kNN mapping built on `grid`.
template <typename S>
GraphInput<S> make_graph_input(const VesselGraph& graph, const Volume3D& vol, const SegMask& y0,
                               const ProbabilityMap& a0, int k);

// Level graph for the nodes `selected` of `parent`: induced edges, gathered
// gray features and a kNN mapping rebuilt on the level grid from centroids
// scaled by 2^-level. k is capped at the node count.
template <typename S>
LevelGraph<S> pooled_level(const LevelGraph<S>& parent, const ad::IndexList& selected, int level,
                           const Dims& grid, const std::vector<Eigen::Vector3d>& centroids, int k);

// Trainable part of one UNET-G level. The CNN/node width alignment is a
// bias-free projection on the node side of f and g.
template <typename S>
struct FusionLevel {
  EdgeHead<S> head;
  GraphResidual<S> enc_omega, dec_omega;
  GraphPool<S> pool;  // unused at level 0
  Parameter<S>* enc_in = nullptr;   // {C_l, node_dim}
  Parameter<S>* enc_out = nullptr;  // {node_dim, C_l}
  Parameter<S>* dec_in = nullptr;
  Parameter<S>* dec_out = nullptr;

  FusionLevel() = default;
  FusionLevel(ParameterStore<S>& store, const std::string& name, int level, int cnn_channels, int node_dim,
              std::mt19937_64& rng);
};

// f(X) = (Q^f)^T X P for a grid tensor X {C, D, H, W}; result {N, node_dim}.
template <typename S>
Var<S> map_to_nodes(Tape<S>& tape, const LevelGraph<S>& g, const Var<S>& grid_features, Parameter<S>& proj);
// g(H) = Q^r H P for node features H {N, node_dim}; result {C, D, H, W}.
template <typename S>
Var<S> map_to_grid(Tape<S>& tape, const LevelGraph<S>& g, const Var<S>& node_features, Parameter<S>& proj);

template <typename S>
struct EncoderFuse {
  Var<S> e_g;  // E_l^g
  Var<S> e;    // E_l
  Var<S> ew;   // edge weights of this level, reused by the decoder
};

// E_l^g = Omega(f(E_l^c) + down), E_l = g(E_l^g) + E_l^c. `down` is the pooled
// E_{l-1}^g or an empty Var at the first level.
template <typename S>
EncoderFuse<S> encoder_fuse(Tape<S>& tape, const FusionLevel<S>& p, const LevelGraph<S>& g, const Var<S>& e_c,
                            const Var<S>& down);

template <typename S>
struct DecoderFuse {
  Var<S> d_g;
  Var<S> d;
};

// D_l^g = Omega(f(D_l^c) + up) + E_l^g, D_l = g(D_l^g) + D_l^c + E_l. `up` is
// the unpooled D_{l+1}^g or an empty Var at the coarsest level.
template <typename S>
DecoderFuse<S> decoder_fuse(Tape<S>& tape, const FusionLevel<S>& p, const LevelGraph<S>& g, const Var<S>& d_c,
                            const Var<S>& up, const EncoderFuse<S>& enc);

template <typename S>
struct CascadeOutput {
  UnetOutput<S> first;   // UNET-1
  UnetOutput<S> second;  // UNET-2 (fused when UNET-G is present)
  Var<S> p1;             // {1, D, H, W}
  Var<S> final;          // {1, D, H, W}
  std::vector<LevelGraph<S>> graphs;
};

// UNET-1 -> P1 * I -> UNET-2 with UNET-G fusion at every level. Built with
// fusion = false it is the plain two-CNN cascade.
template <typename S>
class CascadeModel {
 public:
  CascadeModel(const NetworkConfig& cfg, ParameterStore<S>& store, std::mt19937_64& rng, bool fusion = true);

  // x {1, D, H, W}; graph is required when fusion is on and must stay alive
  // until backward() on the tape has run. freeze_first feeds P1 to UNET-2 as
  // a constant so no gradient reaches UNET-1 through the cascade.
  CascadeOutput<S> forward(Tape<S>& tape, const Var<S>& x, const GraphInput<S>* graph,
                           bool freeze_first = false) const;

  [[nodiscard]] bool fusion() const { return !levels_.empty(); }
  [[nodiscard]] const NetworkConfig& config() const { return cfg_; }
  [[nodiscard]] const std::vector<FusionLevel<S>>& levels() const { return levels_; }

 private:
  NetworkConfig cfg_;
  Unet<S> unet1_, unet2_;
  std::vector<FusionLevel<S>> levels_;
};

}  // namespace vgseg::model
