#include "vgseg/model/graph_unet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vgseg::model {

template <typename S>
EdgeHead<S>::EdgeHead(ParameterStore<S>& store, const std::string& name, int node_dim, std::mt19937_64& rng) {
  ws = &dense_param(store, name + ".ws", 2 * node_dim, 1, 1.0 / std::sqrt(double(node_dim)), rng);
  wg = &dense_param(store, name + ".wg", 2, 1, 1.0, rng);
}

template <typename S>
Var<S> edge_weights(Tape<S>& tape, const Var<S>& fv, const Var<S>& fx, const EdgeHead<S>& head,
                    const ad::EdgeList& edges) {
  const int c = fv.value().dim(1);
  if (head.ws->value.shape() != ad::Shape{2 * c, 1}) {
    throw ContractError("edge_weights: node features " + ad::to_string(fv.shape()) + " vs w^s " +
                        ad::to_string(head.ws->value.shape()));
  }
  if (fx.shape() != ad::Shape{fv.value().dim(0), 1}) {
    throw ContractError("edge_weights: gray features " + ad::to_string(fx.shape()) + " vs node features " +
                        ad::to_string(fv.shape()));
  }
  ad::IndexList first, second;
  for (const auto& [i, j] : edges) {
    first.push_back(i);
    second.push_back(j);
  }
  // [a_i, a_j] . w = a_i . w[:half] + a_j . w[half:]
  auto pair_logit = [&](const Var<S>& feats, const Var<S>& w, int half) {
    auto left = ad::matmul(feats, ad::slice_rows(w, 0, half));
    auto right = ad::matmul(feats, ad::slice_rows(w, half, half));
    return ad::gather_rows(left, first) + ad::gather_rows(right, second);
  };
  auto semantic = ad::sigmoid(pair_logit(fv, tape.param(*head.ws), c));
  auto appearance = ad::sigmoid(pair_logit(fx, tape.param(*head.wg), 1));
  return semantic * appearance;
}

template <typename S>
GraphResidual<S>::GraphResidual(ParameterStore<S>& store, const std::string& name, int node_dim,
                                std::mt19937_64& rng) {
  const double scale = 0.5 / std::sqrt(double(node_dim));
  w1_ = &dense_param(store, name + ".w1", node_dim, node_dim, scale, rng);
  w2_ = &dense_param(store, name + ".w2", node_dim, node_dim, scale, rng);
}

template <typename S>
Var<S> GraphResidual<S>::operator()(Tape<S>& tape, const Var<S>& h, const Var<S>& ew,
                                    const ad::EdgeList& edges) const {
  auto hidden = ad::relu(ad::graph_propagate(ad::matmul(h, tape.param(*w1_)), ew, edges));
  return h + ad::relu(ad::graph_propagate(ad::matmul(hidden, tape.param(*w2_)), ew, edges));
}

ad::IndexList topk_indices(const Eigen::Ref<const Eigen::VectorXd>& scores, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ParameterError("pooling ratio must be in (0, 1]");
  const auto n = scores.size();
  if (ratio * double(n) < 1.0) {
    throw ParameterError("pooling ratio " + std::to_string(ratio) + " keeps no node of " + std::to_string(n));
  }
  const auto k = Eigen::Index(std::ceil(ratio * double(n) - 1e-9));
  ad::IndexList order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  order.resize(std::size_t(k));
  std::sort(order.begin(), order.end());
  return order;
}

ad::EdgeList induced_subgraph(const ad::EdgeList& edges, const ad::IndexList& selected) {
  std::vector<int> pos;
  for (std::size_t r = 0; r < selected.size(); ++r) {
    if (selected[r] >= int(pos.size())) pos.resize(std::size_t(selected[r]) + 1, -1);
    pos[std::size_t(selected[r])] = int(r);
  }
  auto at = [&](int v) { return v < int(pos.size()) ? pos[std::size_t(v)] : -1; };
  ad::EdgeList out;
  for (const auto& [i, j] : edges) {
    const int a = at(i), b = at(j);
    if (a >= 0 && b >= 0) out.emplace_back(std::min(a, b), std::max(a, b));
  }
  return out;
}

template <typename S>
GraphPool<S>::GraphPool(ParameterStore<S>& store, const std::string& name, int node_dim, std::mt19937_64& rng) {
  p_ = &dense_param(store, name + ".p", node_dim, 1, 1.0 / std::sqrt(double(node_dim)), rng);
}

template <typename S>
PoolResult<S> GraphPool<S>::operator()(Tape<S>& tape, const Var<S>& h, double ratio) const {
  auto score = ad::matmul(h, tape.param(*p_));
  const Eigen::VectorXd s = score.value().data().template cast<double>().matrix();
  PoolResult<S> out;
  out.selected = topk_indices(s, ratio);
  out.h = ad::scale_rows(ad::gather_rows(h, out.selected), ad::sigmoid(ad::gather_rows(score, out.selected)));
  return out;
}

template <typename S>
Var<S> gunpool(const Var<S>& coarse, const ad::IndexList& selected, int n_fine) {
  return ad::scatter_rows(coarse, selected, n_fine);
}

#define VGSEG_INSTANTIATE_GRAPH(S)                                                                        \
  template struct EdgeHead<S>;                                                                            \
  template class GraphResidual<S>;                                                                        \
  template class GraphPool<S>;                                                                            \
  template Var<S> edge_weights(Tape<S>&, const Var<S>&, const Var<S>&, const EdgeHead<S>&, const ad::EdgeList&); \
  template Var<S> gunpool(const Var<S>&, const ad::IndexList&, int);

VGSEG_INSTANTIATE_GRAPH(float)
VGSEG_INSTANTIATE_GRAPH(double)

}  // namespace vgseg::model
