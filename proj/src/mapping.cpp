#include "vgseg/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vgseg {

AssignmentMatrix::AssignmentMatrix(Dims grid, int n_nodes, int k, std::vector<std::int32_t> neighbors)
    : grid_(grid), n_nodes_(n_nodes), k_(k), neighbors_(std::move(neighbors)) {
  if (neighbors_.size() != grid_.size() * std::size_t(k_)) {
    throw ContractError("assignment: neighbour table size does not match cells * k");
  }
}

std::vector<std::int64_t> AssignmentMatrix::column_sums() const {
  std::vector<std::int64_t> sums(std::size_t(n_nodes_), 0);
  for (auto j : neighbors_) ++sums[std::size_t(j)];
  return sums;
}

Eigen::SparseMatrix<double> AssignmentMatrix::to_sparse() const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(neighbors_.size());
  for (std::size_t i = 0; i < cells(); ++i) {
    for (auto j : row(i)) t.emplace_back(Eigen::Index(i), j, 1.0);
  }
  Eigen::SparseMatrix<double> a(Eigen::Index(cells()), n_nodes_);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

AssignmentMatrix build_assignment(const Dims& grid, std::span<const Eigen::Vector3d> centroids,
                                  const MappingParams& params) {
  const int n = static_cast<int>(centroids.size());
  if (params.k < 1 || params.k > n) {
    throw ParameterError("kNN mapping needs 1 <= k <= node count (k=" + std::to_string(params.k) +
                         ", nodes=" + std::to_string(n) + ")");
  }
  const int k = params.k;
  std::vector<std::int32_t> table(grid.size() * std::size_t(k));
  std::vector<std::pair<double, std::int32_t>> dist(static_cast<std::size_t>(n));
  for (int z = 0; z < grid.d; ++z) {
    for (int y = 0; y < grid.h; ++y) {
      for (int x = 0; x < grid.w; ++x) {
        const Eigen::Vector3d p(z, y, x);
        for (int j = 0; j < n; ++j) dist[std::size_t(j)] = {(centroids[std::size_t(j)] - p).squaredNorm(), j};
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        const auto base = grid.index(z, y, x) * std::size_t(k);
        for (int r = 0; r < k; ++r) table[base + std::size_t(r)] = dist[std::size_t(r)].second;
      }
    }
  }
  return AssignmentMatrix(grid, n, k, std::move(table));
}

std::vector<Eigen::Vector3d> level_centroids(std::span<const Eigen::Vector3d> centroids, int level) {
  const double scale = std::ldexp(1.0, -level);
  std::vector<Eigen::Vector3d> out;
  out.reserve(centroids.size());
  for (const auto& c : centroids) out.push_back(c * scale);
  return out;
}

template <typename Scalar>
MappingPair<Scalar> make_mapping(const AssignmentMatrix& a, int level) {
  MappingPair<Scalar> pair;
  pair.k = a.k();
  pair.level = level;
  pair.grid = a.grid();
  const auto cols = a.column_sums();
  pair.empty_nodes.resize(cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) pair.empty_nodes[j] = cols[j] == 0;

  using T = Eigen::Triplet<Scalar>;
  std::vector<T> fwd;
  std::vector<T> bwd;
  fwd.reserve(a.cells() * std::size_t(a.k()));
  bwd.reserve(a.cells() * std::size_t(a.k()));
  const Scalar inv_k = Scalar(1) / Scalar(a.k());
  for (std::size_t i = 0; i < a.cells(); ++i) {
    for (auto j : a.row(i)) {
      fwd.emplace_back(j, Eigen::Index(i), Scalar(1) / Scalar(cols[std::size_t(j)]));
      bwd.emplace_back(Eigen::Index(i), j, inv_k);
    }
  }
  pair.forward_t.resize(a.nodes(), Eigen::Index(a.cells()));
  pair.forward_t.setFromTriplets(fwd.begin(), fwd.end());
  pair.backward.resize(Eigen::Index(a.cells()), a.nodes());
  pair.backward.setFromTriplets(bwd.begin(), bwd.end());
  return pair;
}

template <typename Scalar>
MatrixX<Scalar> forward_map(const MatrixX<Scalar>& features, const MappingPair<Scalar>& pair) {
  if (std::size_t(features.rows()) != pair.cells()) {
    throw ContractError("forward_map: feature rows " + std::to_string(features.rows()) +
                        " != grid cells " + std::to_string(pair.cells()));
  }
  return pair.forward_t * features;
}

template <typename Scalar>
MatrixX<Scalar> backward_map(const MatrixX<Scalar>& nodes, const MappingPair<Scalar>& pair) {
  if (std::size_t(nodes.rows()) != pair.nodes()) {
    throw ContractError("backward_map: node rows " + std::to_string(nodes.rows()) +
                        " != node count " + std::to_string(pair.nodes()));
  }
  return pair.backward * nodes;
}

template struct MappingPair<float>;
template struct MappingPair<double>;
template MappingPair<float> make_mapping<float>(const AssignmentMatrix&, int);
template MappingPair<double> make_mapping<double>(const AssignmentMatrix&, int);
template MatrixX<float> forward_map(const MatrixX<float>&, const MappingPair<float>&);
template MatrixX<double> forward_map(const MatrixX<double>&, const MappingPair<double>&);
template MatrixX<float> backward_map(const MatrixX<float>&, const MappingPair<float>&);
template MatrixX<double> backward_map(const MatrixX<double>&, const MappingPair<double>&);

}  // namespace vgseg
