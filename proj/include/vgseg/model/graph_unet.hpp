#pragma once

#include "vgseg/model/layers.hpp"

namespace vgseg::model {

// Semantic head w^s {2C, 1} over [F_V^i, F_V^j] and appearance head
// w^g {2, 1} over the scalar gray features [F_X^i, F_X^j].
template <typename S>
struct EdgeHead {
  Parameter<S>* ws = nullptr;
  Parameter<S>* wg = nullptr;

  EdgeHead() = default;
  EdgeHead(ParameterStore<S>& store, const std::string& name, int node_dim, std::mt19937_64& rng);
};

// e_w = sigmoid([F_V^i, F_V^j] w^s) * sigmoid([F_X^i, F_X^j] w^g), one row per
// edge. fv {N, C}, fx {N, 1}.
template <typename S>
Var<S> edge_weights(Tape<S>& tape, const Var<S>& fv, const Var<S>& fx, const EdgeHead<S>& head,
                    const ad::EdgeList& edges);

// Omega(H) = H + relu(A relu(A H W1) W2) with A the self-looped, symmetric
// normalized adjacency weighted by e_w.
template <typename S>
class GraphResidual {
 public:
  GraphResidual() = default;
  GraphResidual(ParameterStore<S>& store, const std::string& name, int node_dim, std::mt19937_64& rng);

  Var<S> operator()(Tape<S>& tape, const Var<S>& h, const Var<S>& ew, const ad::EdgeList& edges) const;
  [[nodiscard]] Parameter<S>& w1() const { return *w1_; }
  [[nodiscard]] Parameter<S>& w2() const { return *w2_; }

 private:
  Parameter<S>* w1_ = nullptr;
  Parameter<S>* w2_ = nullptr;
};

// Indices of the ceil(ratio * N) largest scores (ties to the lower index),
// returned in ascending order.
ad::IndexList topk_indices(const Eigen::Ref<const Eigen::VectorXd>& scores, double ratio);

// Keeps edges with both ends selected, renumbered to positions in `selected`.
ad::EdgeList induced_subgraph(const ad::EdgeList& edges, const ad::IndexList& selected);

template <typename S>
struct PoolResult {
  ad::IndexList selected;
  Var<S> h;  // {k, C}, gated by sigmoid(score)
};

// Learned top-k pooling by score H p.
template <typename S>
class GraphPool {
 public:
  GraphPool() = default;
  GraphPool(ParameterStore<S>& store, const std::string& name, int node_dim, std::mt19937_64& rng);

  PoolResult<S> operator()(Tape<S>& tape, const Var<S>& h, double ratio) const;
  [[nodiscard]] Parameter<S>& projection() const { return *p_; }

 private:
  Parameter<S>* p_ = nullptr;
};

// Scatters coarse node features back to their fine positions, zeros elsewhere.
template <typename S>
Var<S> gunpool(const Var<S>& coarse, const ad::IndexList& selected, int n_fine);

}  // namespace vgseg::model
