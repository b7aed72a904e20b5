#pragma once

#include <Eigen/SparseCore>

#include <cstdint>
#include <utility>
#include <vector>

#include "vgseg/autodiff/tape.hpp"

namespace vgseg::ad {

template <typename Scalar>
using SparseRowMajor = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

using EdgeList = std::vector<std::pair<int, int>>;
using IndexList = std::vector<int>;

enum class Upsample { Nearest, Trilinear };

// Elementwise; shapes must match exactly (no broadcasting).
template <typename S> Var<S> add(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> sub(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> mul(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> div(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> scale(const Var<S>& a, S s);
template <typename S> Var<S> add_scalar(const Var<S>& a, S s);

template <typename S> Var<S> relu(const Var<S>& x);
template <typename S> Var<S> sigmoid(const Var<S>& x);
template <typename S> Var<S> log(const Var<S>& x);
// log(1 + exp(x)), stable for large |x|.
template <typename S> Var<S> softplus(const Var<S>& x);
// Gradient passes only where lo <= x <= hi.
template <typename S> Var<S> clamp(const Var<S>& x, S lo, S hi);

template <typename S> Var<S> reduce_sum(const Var<S>& x);
template <typename S> Var<S> reduce_mean(const Var<S>& x);

// x {Cin,D,H,W}, w {Cout,Cin,k,k,k} with odd k, optional bias {Cout}.
// Stride 1, zero padding k/2.
template <typename S> Var<S> conv3d(const Var<S>& x, const Var<S>& w, const Var<S>& bias = {});
// 2x2x2 max pooling, stride 2; spatial dims must be even.
template <typename S> Var<S> maxpool3d(const Var<S>& x);
// Factor-2 upsampling. Trilinear uses half-pixel centers with edge clamping.
template <typename S> Var<S> upsample2(const Var<S>& x, Upsample mode = Upsample::Nearest);
template <typename S> Var<S> concat_channels(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> slice_channel(const Var<S>& x, int channel);
template <typename S> Var<S> channel_softmax(const Var<S>& x);

template <typename S> Var<S> reshape(const Var<S>& x, Shape shape);
// Matrix product of the matrix views; result is {rows(a), cols(b)}.
template <typename S> Var<S> matmul(const Var<S>& a, const Var<S>& b);
// m * x(matrix view) for a constant sparse m. `m` is referenced, not copied,
// and must outlive the tape's backward pass.
template <typename S> Var<S> sparse_matmul(const SparseRowMajor<S>& m, const Var<S>& x);

// Node-feature row ops on {N, C} tensors.
template <typename S> Var<S> gather_rows(const Var<S>& x, const IndexList& rows);
template <typename S> Var<S> scatter_rows(const Var<S>& x, const IndexList& rows, int n_rows);
// Rows [start, start + count) of a {rows, cols} tensor.
template <typename S> Var<S> slice_rows(const Var<S>& x, int start, int count);
// out(i, :) = x(i, :) * s(i); s has N entries.
template <typename S> Var<S> scale_rows(const Var<S>& x, const Var<S>& s);

// out = D^-1/2 (A_w + I) D^-1/2 h for the undirected graph `edges` with
// per-edge weights w {E, 1}; D is the degree of A_w + I.
template <typename S>
Var<S> graph_propagate(const Var<S>& h, const Var<S>& w, const EdgeList& edges);

template <typename S> Var<S> operator+(const Var<S>& a, const Var<S>& b) { return add(a, b); }
template <typename S> Var<S> operator-(const Var<S>& a, const Var<S>& b) { return sub(a, b); }
template <typename S> Var<S> operator*(const Var<S>& a, const Var<S>& b) { return mul(a, b); }
template <typename S> Var<S> operator/(const Var<S>& a, const Var<S>& b) { return div(a, b); }
template <typename S> Var<S> operator*(S s, const Var<S>& a) { return scale(a, s); }
template <typename S> Var<S> operator*(const Var<S>& a, S s) { return scale(a, s); }
template <typename S> Var<S> operator+(const Var<S>& a, S s) { return add_scalar(a, s); }
template <typename S> Var<S> operator-(S s, const Var<S>& a) { return add_scalar(scale(a, S(-1)), s); }

}  // namespace vgseg::ad
