#include "vgseg/model/cascade.hpp"

#include <cmath>

namespace vgseg::model {

template <typename S>
GraphInput<S> make_graph_input(const VesselGraph& graph, const Volume3D& vol, const SegMask& y0,
                               const ProbabilityMap& a0, int k) {
  if (!(graph.dims == vol.dims())) {
    throw ContractError("graph dims " + to_string(graph.dims) + " do not match volume " + to_string(vol.dims()));
  }
  GraphInput<S> in;
  in.centroids = graph.centroids();
  const int n = int(in.centroids.size());
  const auto a = build_assignment(vol.dims(), in.centroids, MappingParams{std::min(k, n)});
  auto mapping = std::make_shared<MappingPair<S>>(make_mapping<S>(a, 0));
  const MatrixX<S> gray = node_gray_features<S>(vol, y0, a0, graph, *mapping);
  auto& g = in.level0;
  g.level = 0;
  g.node_ids.resize(std::size_t(n));
  for (int i = 0; i < n; ++i) g.node_ids[std::size_t(i)] = i;
  for (const auto& e : graph.edges) g.edges.emplace_back(e.i, e.j);
  g.mapping = std::move(mapping);
  g.gray = Tensor<S>::from_matrix(gray);
  return in;
}

template <typename S>
LevelGraph<S> pooled_level(const LevelGraph<S>& parent, const ad::IndexList& selected, int level,
                           const Dims& grid, const std::vector<Eigen::Vector3d>& centroids, int k) {
  LevelGraph<S> g;
  g.level = level;
  g.selected = selected;
  g.edges = induced_subgraph(parent.edges, selected);
  g.gray = Tensor<S>(ad::Shape{int(selected.size()), 1});
  std::vector<Eigen::Vector3d> c;
  for (std::size_t r = 0; r < selected.size(); ++r) {
    const int id = parent.node_ids.at(std::size_t(selected[r]));
    g.node_ids.push_back(id);
    g.gray[Eigen::Index(r)] = parent.gray[selected[r]];
    c.push_back(centroids.at(std::size_t(id)));
  }
  const auto scaled = level_centroids(c, level);
  const auto a = build_assignment(grid, scaled, MappingParams{std::min<int>(k, int(scaled.size()))});
  g.mapping = std::make_shared<MappingPair<S>>(make_mapping<S>(a, level));
  return g;
}

template <typename S>
FusionLevel<S>::FusionLevel(ParameterStore<S>& store, const std::string& name, int level, int cnn_channels,
                            int node_dim, std::mt19937_64& rng)
    : head(store, name + ".edge", node_dim, rng),
      enc_omega(store, name + ".enc_omega", node_dim, rng),
      dec_omega(store, name + ".dec_omega", node_dim, rng) {
  if (level > 0) pool = GraphPool<S>(store, name + ".pool", node_dim, rng);
  const double in_scale = 1.0 / std::sqrt(double(cnn_channels));
  enc_in = &dense_param(store, name + ".enc_in", cnn_channels, node_dim, in_scale, rng);
  dec_in = &dense_param(store, name + ".dec_in", cnn_channels, node_dim, in_scale, rng);
  // zero, so a fresh fused network computes the plain cascade
  enc_out = &store.add(name + ".enc_out", Tensor<S>(ad::Shape{node_dim, cnn_channels}));
  dec_out = &store.add(name + ".dec_out", Tensor<S>(ad::Shape{node_dim, cnn_channels}));
}

template <typename S>
Var<S> map_to_nodes(Tape<S>& tape, const LevelGraph<S>& g, const Var<S>& grid_features, Parameter<S>& proj) {
  if (!grid_features.value().is_grid() || !(grid_features.value().grid_dims() == g.mapping->grid)) {
    throw ContractError("level " + std::to_string(g.level) + " mapping built for " + to_string(g.mapping->grid) +
                        ", features are " + ad::to_string(grid_features.shape()));
  }
  return ad::matmul(ad::sparse_matmul(g.mapping->forward_t, grid_features), tape.param(proj));
}

template <typename S>
Var<S> map_to_grid(Tape<S>& tape, const LevelGraph<S>& g, const Var<S>& node_features, Parameter<S>& proj) {
  auto cells = ad::sparse_matmul(g.mapping->backward, ad::matmul(node_features, tape.param(proj)));
  const Dims d = g.mapping->grid;
  return ad::reshape(cells, ad::Shape{cells.value().dim(1), d.d, d.h, d.w});
}

template <typename S>
EncoderFuse<S> encoder_fuse(Tape<S>& tape, const FusionLevel<S>& p, const LevelGraph<S>& g, const Var<S>& e_c,
                            const Var<S>& down) {
  EncoderFuse<S> out;
  auto fv = map_to_nodes(tape, g, e_c, *p.enc_in);
  out.ew = edge_weights(tape, fv, tape.constant(g.gray), p.head, g.edges);
  auto h = down.valid() ? fv + down : fv;
  out.e_g = p.enc_omega(tape, h, out.ew, g.edges);
  out.e = map_to_grid(tape, g, out.e_g, *p.enc_out) + e_c;
  return out;
}

template <typename S>
DecoderFuse<S> decoder_fuse(Tape<S>& tape, const FusionLevel<S>& p, const LevelGraph<S>& g, const Var<S>& d_c,
                            const Var<S>& up, const EncoderFuse<S>& enc) {
  DecoderFuse<S> out;
  auto fv = map_to_nodes(tape, g, d_c, *p.dec_in);
  auto h = up.valid() ? fv + up : fv;
  out.d_g = p.dec_omega(tape, h, enc.ew, g.edges) + enc.e_g;
  out.d = map_to_grid(tape, g, out.d_g, *p.dec_out) + d_c + enc.e;
  return out;
}

namespace {

template <typename S>
class GraphFusion final : public FusionHooks<S> {
 public:
  GraphFusion(Tape<S>& tape, const NetworkConfig& cfg, const std::vector<FusionLevel<S>>& levels,
              const GraphInput<S>& input, std::vector<LevelGraph<S>>& graphs)
      : tape_(tape), cfg_(cfg), levels_(levels), input_(input), graphs_(graphs), enc_(levels.size()),
        dec_(levels.size()) {}

  Var<S> encoder(int l, const Var<S>& e_c) override {
    Var<S> down;
    if (l == 0) {
      graphs_.push_back(input_.level0);
    } else {
      auto pooled = levels_[std::size_t(l)].pool(tape_, enc_[std::size_t(l - 1)].e_g, cfg_.pool_ratio);
      graphs_.push_back(pooled_level(graphs_[std::size_t(l - 1)], pooled.selected, l, cfg_.grid(l),
                                     input_.centroids, cfg_.k));
      down = pooled.h;
    }
    enc_[std::size_t(l)] = encoder_fuse(tape_, levels_[std::size_t(l)], graphs_[std::size_t(l)], e_c, down);
    return enc_[std::size_t(l)].e;
  }

  Var<S> decoder(int l, const Var<S>& d_c) override {
    Var<S> up;
    if (l + 1 < int(levels_.size())) {
      const auto& fine = graphs_[std::size_t(l)];
      up = gunpool(dec_[std::size_t(l + 1)].d_g, graphs_[std::size_t(l + 1)].selected, int(fine.node_ids.size()));
    }
    dec_[std::size_t(l)] =
        decoder_fuse(tape_, levels_[std::size_t(l)], graphs_[std::size_t(l)], d_c, up, enc_[std::size_t(l)]);
    return dec_[std::size_t(l)].d;
  }

 private:
  Tape<S>& tape_;
  const NetworkConfig& cfg_;
  const std::vector<FusionLevel<S>>& levels_;
  const GraphInput<S>& input_;
  std::vector<LevelGraph<S>>& graphs_;
  std::vector<EncoderFuse<S>> enc_;
  std::vector<DecoderFuse<S>> dec_;
};

}  // namespace

template <typename S>
CascadeModel<S>::CascadeModel(const NetworkConfig& cfg, ParameterStore<S>& store, std::mt19937_64& rng,
                              bool fusion)
    : cfg_(cfg), unet1_(cfg, store, "unet1", rng), unet2_(cfg, store, "unet2", rng) {
  if (fusion) {
    for (int l = 0; l < cfg_.levels; ++l) {
      levels_.emplace_back(store, "graph.l" + std::to_string(l), l, cfg_.channels(l), cfg_.node_dim, rng);
    }
  }
}

template <typename S>
CascadeOutput<S> CascadeModel<S>::forward(Tape<S>& tape, const Var<S>& x, const GraphInput<S>* graph,
                                          bool freeze_first) const {
  CascadeOutput<S> out;
  out.first = unet1_.forward(tape, x);
  out.p1 = out.first.vessel;
  auto x2 = (freeze_first ? tape.constant(out.p1.value()) : out.p1) * x;
  if (fusion()) {
    if (!graph) throw StageError("cascade forward needs a precomputed graph; run stage graph first");
    out.graphs.reserve(levels_.size());
    GraphFusion<S> hooks(tape, cfg_, levels_, *graph, out.graphs);
    out.second = unet2_.forward(tape, x2, &hooks);
  } else {
    out.second = unet2_.forward(tape, x2);
  }
  out.final = out.second.vessel;
  return out;
}

#define VGSEG_INSTANTIATE_CASCADE(S)                                                                          \
  template GraphInput<S> make_graph_input(const VesselGraph&, const Volume3D&, const SegMask&,                \
                                          const ProbabilityMap&, int);                                        \
  template LevelGraph<S> pooled_level(const LevelGraph<S>&, const ad::IndexList&, int, const Dims&,          \
                                      const std::vector<Eigen::Vector3d>&, int);                             \
  template struct FusionLevel<S>;                                                                             \
  template Var<S> map_to_nodes(Tape<S>&, const LevelGraph<S>&, const Var<S>&, Parameter<S>&);                 \
  template Var<S> map_to_grid(Tape<S>&, const LevelGraph<S>&, const Var<S>&, Parameter<S>&);                  \
  template EncoderFuse<S> encoder_fuse(Tape<S>&, const FusionLevel<S>&, const LevelGraph<S>&, const Var<S>&, \
                                       const Var<S>&);                                                        \
  template DecoderFuse<S> decoder_fuse(Tape<S>&, const FusionLevel<S>&, const LevelGraph<S>&, const Var<S>&, \
                                       const Var<S>&, const EncoderFuse<S>&);                                 \
  template class CascadeModel<S>;

VGSEG_INSTANTIATE_CASCADE(float)
VGSEG_INSTANTIATE_CASCADE(double)

}  // namespace vgseg::model
