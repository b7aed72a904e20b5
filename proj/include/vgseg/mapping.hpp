#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <span>
#include <vector>

#include "vgseg/volume.hpp"

namespace vgseg {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

struct MappingParams {
  int k = 3;
};

// 0/1 cell-to-node assignment: row i marks the k node centroids nearest to
// the center of grid cell i (ties to the lower node id). Stored compactly as
// k node ids per cell, nearest first.
class AssignmentMatrix {
 public:
  AssignmentMatrix(Dims grid, int n_nodes, int k, std::vector<std::int32_t> neighbors);

  [[nodiscard]] const Dims& grid() const { return grid_; }
  [[nodiscard]] std::size_t cells() const { return grid_.size(); }
  [[nodiscard]] int nodes() const { return n_nodes_; }
  [[nodiscard]] int k() const { return k_; }
  [[nodiscard]] std::span<const std::int32_t> row(std::size_t cell) const {
    return {neighbors_.data() + cell * k_, static_cast<std::size_t>(k_)};
  }
  // Lambda^f diagonal: number of cells assigned to each node.
  [[nodiscard]] std::vector<std::int64_t> column_sums() const;
  [[nodiscard]] Eigen::SparseMatrix<double> to_sparse() const;

 private:
  Dims grid_;
  int n_nodes_ = 0;
  int k_ = 0;
  std::vector<std::int32_t> neighbors_;
};

// Node centroids given in level-l grid coordinates (z, y, x).
AssignmentMatrix build_assignment(const Dims& grid, std::span<const Eigen::Vector3d> centroids,
                                  const MappingParams& params);

// Level-0 centroids divided by 2^level.
std::vector<Eigen::Vector3d> level_centroids(std::span<const Eigen::Vector3d> centroids, int level);

// Q^f = A (Lambda^f)^-1 and Q^r = (Lambda^r)^-1 A, kept in the orientation
// they are applied in: forward_t = (Q^f)^T (nodes x cells), backward = Q^r
// (cells x nodes). Nodes without assigned cells get an all-zero column and
// are flagged in `empty_nodes`.
template <typename Scalar>
struct MappingPair {
  using Sparse = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

  Sparse forward_t;
  Sparse backward;
  std::vector<std::uint8_t> empty_nodes;
  int k = 0;
  int level = 0;
  Dims grid;

  [[nodiscard]] std::size_t cells() const { return std::size_t(backward.rows()); }
  [[nodiscard]] std::size_t nodes() const { return std::size_t(forward_t.rows()); }
};

template <typename Scalar>
MappingPair<Scalar> make_mapping(const AssignmentMatrix& a, int level = 0);

// phi_k(F) = (Q^f)^T F; F has one row per grid cell.
template <typename Scalar>
MatrixX<Scalar> forward_map(const MatrixX<Scalar>& features, const MappingPair<Scalar>& pair);

// psi_k(Z) = Q^r Z; Z has one row per node.
template <typename Scalar>
MatrixX<Scalar> backward_map(const MatrixX<Scalar>& nodes, const MappingPair<Scalar>& pair);

}  // namespace vgseg
