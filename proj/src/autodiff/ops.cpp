#include "vgseg/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vgseg::ad {

namespace {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
Tape<S>& tape_of(const Var<S>& v) {
  if (!v.valid()) throw ContractError("operation on an empty variable");
  return v.tape();
}

template <typename S>
void require_grid(const Tensor<S>& t, const char* op) {
  if (!t.is_grid()) {
    throw ContractError(std::string(op) + ": expected {C,D,H,W}, got " + to_string(t.shape()));
  }
}

template <typename S>
void require_matrix(const Tensor<S>& t, const char* op) {
  if (t.rank() != 2) {
    throw ContractError(std::string(op) + ": expected {rows, cols}, got " + to_string(t.shape()));
  }
}

// ---------------------------------------------------------------------------
// im2col helpers for conv3d. Work is chunked by x-lines (line = z*H + y) so a
// chunk's column matrix stays cache resident. Column (ci * k^3 + tap) holds
// channel ci shifted by tap for the voxels of lines [l0, l1).

// src may be -1 legitimately (first line, dx = -1)
constexpr Eigen::Index kOutside = std::numeric_limits<Eigen::Index>::min();

template <typename S, typename Fn>
void for_each_tap_line(const Dims& dims, int cin, int k, int l0, int l1, Fn&& fn) {
  const int pad = k / 2;
  const int k3 = k * k * k;
  for (int ci = 0; ci < cin; ++ci) {
    for (int kz = 0; kz < k; ++kz) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const int dz = kz - pad, dy = ky - pad, dx = kx - pad;
          const Eigen::Index col = Eigen::Index(ci) * k3 + (kz * k + ky) * k + kx;
          const int xlo = std::max(0, -dx), xhi = std::max(xlo, std::min(dims.w, dims.w - dx));
          for (int l = l0; l < l1; ++l) {
            const int zz = l / dims.h + dz, yy = l % dims.h + dy;
            const bool inside = zz >= 0 && zz < dims.d && yy >= 0 && yy < dims.h;
            const Eigen::Index src = inside ? (Eigen::Index(ci) * dims.d + zz) * dims.h * dims.w +
                                                  Eigen::Index(yy) * dims.w + dx
                                            : kOutside;
            fn(col, Eigen::Index(l - l0) * dims.w, src, xlo, xhi);
          }
        }
      }
    }
  }
}

template <typename S>
void im2col(const S* x, const Dims& dims, int cin, int k, int l0, int l1, Matrix<S>& cols) {
  cols.resize(Eigen::Index(l1 - l0) * dims.w, Eigen::Index(cin) * k * k * k);
  const int w = dims.w;
  for_each_tap_line<S>(dims, cin, k, l0, l1,
                       [&](Eigen::Index col, Eigen::Index row, Eigen::Index src, int xlo, int xhi) {
                         S* d = cols.col(col).data() + row;
                         if (src == kOutside) {
                           std::fill(d, d + w, S(0));
                           return;
                         }
                         std::fill(d, d + xlo, S(0));
                         std::copy(x + src + xlo, x + src + xhi, d + xlo);
                         std::fill(d + xhi, d + w, S(0));
                       });
}

template <typename S>
void col2im_add(const Matrix<S>& cols, const Dims& dims, int cin, int k, int l0, int l1, S* gx) {
  for_each_tap_line<S>(dims, cin, k, l0, l1,
                       [&](Eigen::Index col, Eigen::Index row, Eigen::Index src, int xlo, int xhi) {
                         if (src == kOutside) return;
                         const S* s = cols.col(col).data() + row;
                         S* d = gx + src;
                         for (int xq = xlo; xq < xhi; ++xq) d[xq] += s[xq];
                       });
}

int chunk_lines(const Dims& dims, Eigen::Index k_cols) {
  constexpr Eigen::Index kBudget = 1 << 18;  // elements per column chunk
  const Eigen::Index per_line = Eigen::Index(dims.w) * std::max<Eigen::Index>(1, k_cols);
  return int(std::clamp<Eigen::Index>(kBudget / per_line, 1, Eigen::Index(dims.d) * dims.h));
}

// Per-axis linear interpolation taps for trilinear x2 upsampling.
struct Taps {
  std::vector<int> i0, i1;
  std::vector<double> w1;  // weight of i1; i0 gets 1 - w1
};

Taps upsample_taps(int n_in) {
  const int n_out = 2 * n_in;
  Taps t;
  t.i0.resize(std::size_t(n_out));
  t.i1.resize(std::size_t(n_out));
  t.w1.resize(std::size_t(n_out));
  for (int o = 0; o < n_out; ++o) {
    const double src = std::max(0.0, (o + 0.5) / 2.0 - 0.5);
    const int i0 = std::min(int(std::floor(src)), n_in - 1);
    const int i1 = std::min(i0 + 1, n_in - 1);
    t.i0[std::size_t(o)] = i0;
    t.i1[std::size_t(o)] = i1;
    t.w1[std::size_t(o)] = i1 == i0 ? 0.0 : src - i0;
  }
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<S> out(a.shape());
  out.data() = a.value().data() + b.value().data();
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<S> out(a.shape());
  out.data() = a.value().data() - b.value().data();
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate(ia, g);
    t.accumulate_with(ib, [&](Tensor<S>& gb) { gb.data() -= g.data(); });
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<S> out(a.shape());
  out.data() = a.value().data() * b.value().data();
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ia, [&](Tensor<S>& ga) { ga.data() += g.data() * t.value(ib).data(); });
    t.accumulate_with(ib, [&](Tensor<S>& gb) { gb.data() += g.data() * t.value(ia).data(); });
  });
}

template <typename S>
Var<S> div(const Var<S>& a, const Var<S>& b) {
  require_same_shape(a.shape(), b.shape(), "div");
  if ((b.value().data() == S(0)).any()) throw DataError("division by zero");
  Tensor<S> out(a.shape());
  out.data() = a.value().data() / b.value().data();
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape<S>& t, const Tensor<S>& g) {
    const auto& bv = t.value(ib).data();
    t.accumulate_with(ia, [&](Tensor<S>& ga) { ga.data() += g.data() / bv; });
    t.accumulate_with(ib, [&](Tensor<S>& gb) { gb.data() -= g.data() * t.value(ia).data() / bv.square(); });
  });
}

template <typename S>
Var<S> scale(const Var<S>& a, S s) {
  Tensor<S> out(a.shape());
  out.data() = a.value().data() * s;
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a}, [ia, s](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ia, [&](Tensor<S>& ga) { ga.data() += g.data() * s; });
  });
}

template <typename S>
Var<S> add_scalar(const Var<S>& a, S s) {
  Tensor<S> out(a.shape());
  out.data() = a.value().data() + s;
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a}, [ia](Tape<S>& t, const Tensor<S>& g) { t.accumulate(ia, g); });
}

template <typename S>
Var<S> relu(const Var<S>& x) {
  Tensor<S> out(x.shape());
  out.data() = x.value().data().max(S(0));
  const int ix = x.id();
  return tape_of(x).record(std::move(out), {x}, [ix](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ix, [&](Tensor<S>& gx) {
      gx.data() += (t.value(ix).data() > S(0)).select(g.data(), S(0));
    });
  });
}

template <typename S>
Var<S> sigmoid(const Var<S>& x) {
  Tensor<S> out(x.shape());
  const auto& xv = x.value().data();
  for (Eigen::Index i = 0; i < xv.size(); ++i) {
    const S v = xv[i];
    out[i] = v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
  }
  const int ix = x.id();
  Tensor<S> y = out;
  return tape_of(x).record(std::move(out), {x}, [ix, y = std::move(y)](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ix, [&](Tensor<S>& gx) {
      gx.data() += g.data() * y.data() * (S(1) - y.data());
    });
  });
}

template <typename S>
Var<S> softplus(const Var<S>& x) {
  Tensor<S> out(x.shape());
  const auto& xv = x.value().data();
  out.data() = xv.max(S(0)) + (-xv.abs()).exp().log1p();
  const int ix = x.id();
  return tape_of(x).record(std::move(out), {x}, [ix](Tape<S>& t, const Tensor<S>& g) {
    const auto& xv = t.value(ix).data();
    t.accumulate_with(ix, [&](Tensor<S>& gx) {
      for (Eigen::Index i = 0; i < xv.size(); ++i) {
        const S v = xv[i];
        const S s = v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
        gx[i] += g[i] * s;
      }
    });
  });
}

template <typename S>
Var<S> log(const Var<S>& x) {
  if ((x.value().data() <= S(0)).any()) throw DataError("log of a non-positive value");
  Tensor<S> out(x.shape());
  out.data() = x.value().data().log();
  const int ix = x.id();
  return tape_of(x).record(std::move(out), {x}, [ix](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ix, [&](Tensor<S>& gx) { gx.data() += g.data() / t.value(ix).data(); });
  });
}

template <typename S>
Var<S> clamp(const Var<S>& x, S lo, S hi) {
  Tensor<S> out(x.shape());
  out.data() = x.value().data().max(lo).min(hi);
  const int ix = x.id();
  return tape_of(x).record(std::move(out), {x}, [ix, lo, hi](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ix, [&](Tensor<S>& gx) {
      const auto& v = t.value(ix).data();
      gx.data() += (v >= lo && v <= hi).select(g.data(), S(0));
    });
  });
}

template <typename S>
Var<S> reduce_sum(const Var<S>& x) {
  auto out = Tensor<S>::scalar(x.value().data().sum());
  const int ix = x.id();
  return tape_of(x).record(std::move(out), {x}, [ix](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ix, [&](Tensor<S>& gx) { gx.data() += g[0]; });
  });
}

template <typename S>
Var<S> reduce_mean(const Var<S>& x) {
  const auto n = S(x.value().numel());
  auto out = Tensor<S>::scalar(x.value().data().sum() / n);
  const int ix = x.id();
  return tape_of(x).record(std::move(out), {x}, [ix, n](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ix, [&](Tensor<S>& gx) { gx.data() += g[0] / n; });
  });
}

// ---------------------------------------------------------------------------
// Grid ops

template <typename S>
Var<S> conv3d(const Var<S>& x, const Var<S>& w, const Var<S>& bias) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  require_grid(xv, "conv3d");
  if (wv.rank() != 5 || wv.dim(2) != wv.dim(3) || wv.dim(3) != wv.dim(4) || wv.dim(2) % 2 == 0) {
    throw ContractError("conv3d: weight must be {Cout,Cin,k,k,k} with odd k, got " + to_string(wv.shape()));
  }
  const int cout = wv.dim(0), cin = wv.dim(1), k = wv.dim(2);
  if (cin != xv.channels()) {
    throw ContractError("conv3d: input " + to_string(xv.shape()) + " vs weight " + to_string(wv.shape()));
  }
  if (bias.valid() && bias.shape() != Shape{cout}) {
    throw ContractError("conv3d: bias " + to_string(bias.shape()) + " vs weight " + to_string(wv.shape()));
  }
  const Dims dims = xv.grid_dims();
  const Eigen::Index kcols = Eigen::Index(cin) * k * k * k;
  Eigen::Map<const Matrix<S>> wm(wv.data().data(), kcols, cout);

  Tensor<S> out = Tensor<S>::grid(cout, dims);
  auto om = out.mat();
  if (k == 1) {
    om.noalias() = xv.mat() * wm;
  } else {
    const int step = chunk_lines(dims, kcols);
    const int lines = dims.d * dims.h;
    Matrix<S> cols;
    for (int l0 = 0; l0 < lines; l0 += step) {
      const int l1 = std::min(lines, l0 + step);
      im2col(xv.data().data(), dims, cin, k, l0, l1, cols);
      om.middleRows(Eigen::Index(l0) * dims.w, cols.rows()).noalias() = cols * wm;
    }
  }
  if (bias.valid()) om.rowwise() += bias.value().data().matrix().transpose();

  std::vector<Var<S>> inputs{x, w};
  if (bias.valid()) inputs.push_back(bias);
  const int ix = x.id(), iw = w.id(), ib = bias.valid() ? bias.id() : -1;
  return tape_of(x).record(std::move(out), inputs, [=](Tape<S>& t, const Tensor<S>& g) {
    const auto& xv = t.value(ix);
    const auto& wv = t.value(iw);
    Eigen::Map<const Matrix<S>> wm(wv.data().data(), kcols, cout);
    const auto gm = g.mat();
    if (ib >= 0) {
      t.accumulate_with(ib, [&](Tensor<S>& gb) { gb.data() += gm.colwise().sum().transpose().array(); });
    }
    const bool need_x = t.requires_grad(ix);
    const bool need_w = t.requires_grad(iw);
    if (k == 1) {
      if (need_w) {
        t.accumulate_with(iw, [&](Tensor<S>& gw) {
          Eigen::Map<Matrix<S>>(gw.data().data(), kcols, cout).noalias() += xv.mat().transpose() * gm;
        });
      }
      if (need_x) t.accumulate_with(ix, [&](Tensor<S>& gx) { gx.mat().noalias() += gm * wm.transpose(); });
      return;
    }
    const int step = chunk_lines(dims, kcols);
    const int lines = dims.d * dims.h;
    Matrix<S> cols, gcols;
    Matrix<S> gw_acc = Matrix<S>::Zero(kcols, cout);
    Tensor<S> gx_acc;
    if (need_x) gx_acc = Tensor<S>(xv.shape());
    for (int l0 = 0; l0 < lines; l0 += step) {
      const int l1 = std::min(lines, l0 + step);
      const auto gslab = gm.middleRows(Eigen::Index(l0) * dims.w, Eigen::Index(l1 - l0) * dims.w);
      if (need_w) {
        im2col(xv.data().data(), dims, cin, k, l0, l1, cols);
        gw_acc.noalias() += cols.transpose() * gslab;
      }
      if (need_x) {
        gcols.noalias() = gslab * wm.transpose();
        col2im_add(gcols, dims, cin, k, l0, l1, gx_acc.data().data());
      }
    }
    if (need_w) {
      t.accumulate_with(iw, [&](Tensor<S>& gw) {
        Eigen::Map<Matrix<S>>(gw.data().data(), kcols, cout) += gw_acc;
      });
    }
    if (need_x) t.accumulate(ix, gx_acc);
  });
}

template <typename S>
Var<S> maxpool3d(const Var<S>& x) {
  const auto& xv = x.value();
  require_grid(xv, "maxpool3d");
  const Dims in = xv.grid_dims();
  if (in.d % 2 || in.h % 2 || in.w % 2) {
    throw ContractError("maxpool3d: spatial dims must be even, got " + to_string(xv.shape()));
  }
  const Dims od = in.halved();
  const int c = xv.channels();
  Tensor<S> out = Tensor<S>::grid(c, od);
  std::vector<std::int64_t> arg(std::size_t(out.numel()));
  const auto n_in = Eigen::Index(in.size());
  const auto n_out = Eigen::Index(od.size());
  for (int ch = 0; ch < c; ++ch) {
    for (int z = 0; z < od.d; ++z) {
      for (int y = 0; y < od.h; ++y) {
        for (int xx = 0; xx < od.w; ++xx) {
          S best = -std::numeric_limits<S>::infinity();
          std::int64_t best_i = 0;
          for (int dz = 0; dz < 2; ++dz) {
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const auto i = ch * n_in + Eigen::Index(in.index(2 * z + dz, 2 * y + dy, 2 * xx + dx));
                if (xv[i] > best) {
                  best = xv[i];
                  best_i = i;
                }
              }
            }
          }
          const auto o = ch * n_out + Eigen::Index(od.index(z, y, xx));
          out[o] = best;
          arg[std::size_t(o)] = best_i;
        }
      }
    }
  }
  const int ix = x.id();
  return tape_of(x).record(std::move(out), {x}, [ix, arg = std::move(arg)](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ix, [&](Tensor<S>& gx) {
      for (std::size_t o = 0; o < arg.size(); ++o) gx[arg[o]] += g[Eigen::Index(o)];
    });
  });
}

template <typename S>
Var<S> upsample2(const Var<S>& x, Upsample mode) {
  const auto& xv = x.value();
  require_grid(xv, "upsample2");
  const Dims in = xv.grid_dims();
  const Dims od{2 * in.d, 2 * in.h, 2 * in.w};
  const int c = xv.channels();
  const auto n_in = Eigen::Index(in.size());
  const auto n_out = Eigen::Index(od.size());
  Tensor<S> out = Tensor<S>::grid(c, od);
  const int ix = x.id();
  if (mode == Upsample::Nearest) {
    for (int ch = 0; ch < c; ++ch) {
      for (int z = 0; z < od.d; ++z) {
        for (int y = 0; y < od.h; ++y) {
          for (int xx = 0; xx < od.w; ++xx) {
            out[ch * n_out + Eigen::Index(od.index(z, y, xx))] =
                xv[ch * n_in + Eigen::Index(in.index(z / 2, y / 2, xx / 2))];
          }
        }
      }
    }
    return tape_of(x).record(std::move(out), {x}, [=](Tape<S>& t, const Tensor<S>& g) {
      t.accumulate_with(ix, [&](Tensor<S>& gx) {
        for (int ch = 0; ch < c; ++ch) {
          for (int z = 0; z < od.d; ++z) {
            for (int y = 0; y < od.h; ++y) {
              for (int xx = 0; xx < od.w; ++xx) {
                gx[ch * n_in + Eigen::Index(in.index(z / 2, y / 2, xx / 2))] +=
                    g[ch * n_out + Eigen::Index(od.index(z, y, xx))];
              }
            }
          }
        }
      });
    });
  }
  const Taps tz = upsample_taps(in.d), ty = upsample_taps(in.h), tx = upsample_taps(in.w);
  // Visits the 8 (input index, weight) taps of every output voxel.
  auto for_each_tap = [=](auto&& fn) {
    for (int ch = 0; ch < c; ++ch) {
      for (int z = 0; z < od.d; ++z) {
        const int zi[2] = {tz.i0[std::size_t(z)], tz.i1[std::size_t(z)]};
        const double zw[2] = {1.0 - tz.w1[std::size_t(z)], tz.w1[std::size_t(z)]};
        for (int y = 0; y < od.h; ++y) {
          const int yi[2] = {ty.i0[std::size_t(y)], ty.i1[std::size_t(y)]};
          const double yw[2] = {1.0 - ty.w1[std::size_t(y)], ty.w1[std::size_t(y)]};
          for (int xx = 0; xx < od.w; ++xx) {
            const int xi[2] = {tx.i0[std::size_t(xx)], tx.i1[std::size_t(xx)]};
            const double xw[2] = {1.0 - tx.w1[std::size_t(xx)], tx.w1[std::size_t(xx)]};
            const auto o = ch * n_out + Eigen::Index(od.index(z, y, xx));
            for (int a = 0; a < 2; ++a)
              for (int b = 0; b < 2; ++b)
                for (int e = 0; e < 2; ++e)
                  fn(o, ch * n_in + Eigen::Index(in.index(zi[a], yi[b], xi[e])), S(zw[a] * yw[b] * xw[e]));
          }
        }
      }
    }
  };
  for_each_tap([&](Eigen::Index o, Eigen::Index i, S wgt) { out[o] += wgt * xv[i]; });
  return tape_of(x).record(std::move(out), {x}, [=](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ix, [&](Tensor<S>& gx) {
      for_each_tap([&](Eigen::Index o, Eigen::Index i, S wgt) { gx[i] += wgt * g[o]; });
    });
  });
}

template <typename S>
Var<S> concat_channels(const Var<S>& a, const Var<S>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_grid(av, "concat_channels");
  require_grid(bv, "concat_channels");
  if (!(av.grid_dims() == bv.grid_dims())) {
    throw ContractError("concat_channels: " + to_string(av.shape()) + " vs " + to_string(bv.shape()));
  }
  Tensor<S> out = Tensor<S>::grid(av.channels() + bv.channels(), av.grid_dims());
  out.data().head(av.numel()) = av.data();
  out.data().tail(bv.numel()) = bv.data();
  const int ia = a.id(), ib = b.id();
  const auto na = av.numel(), nb = bv.numel();
  return tape_of(a).record(std::move(out), {a, b}, [=](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ia, [&](Tensor<S>& ga) { ga.data() += g.data().head(na); });
    t.accumulate_with(ib, [&](Tensor<S>& gb) { gb.data() += g.data().tail(nb); });
  });
}

template <typename S>
Var<S> slice_channel(const Var<S>& x, int channel) {
  const auto& xv = x.value();
  require_grid(xv, "slice_channel");
  if (channel < 0 || channel >= xv.channels()) {
    throw ContractError("slice_channel: channel " + std::to_string(channel) + " out of " + to_string(xv.shape()));
  }
  const Dims dims = xv.grid_dims();
  const auto n = Eigen::Index(dims.size());
  Tensor<S> out = Tensor<S>::grid(1, dims);
  out.data() = xv.data().segment(channel * n, n);
  const int ix = x.id();
  return tape_of(x).record(std::move(out), {x}, [=](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ix, [&](Tensor<S>& gx) { gx.data().segment(channel * n, n) += g.data(); });
  });
}

template <typename S>
Var<S> channel_softmax(const Var<S>& x) {
  const auto& xv = x.value();
  require_grid(xv, "channel_softmax");
  Tensor<S> out(xv.shape());
  auto om = out.mat();
  const auto xm = xv.mat();
  om = (xm.colwise() - xm.rowwise().maxCoeff()).array().exp().matrix();
  const Matrix<S> denom = om.rowwise().sum();
  for (Eigen::Index c = 0; c < om.cols(); ++c) om.col(c).array() /= denom.array();
  auto& tape = tape_of(x);
  const int ix = x.id();
  // The backward rule needs the output; keep a copy in the closure.
  Tensor<S> y = out;
  return tape.record(std::move(out), {x}, [ix, y = std::move(y)](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ix, [&](Tensor<S>& gx) {
      const auto ym = y.mat();
      const auto gm = g.mat();
      const Matrix<S> dot = (ym.array() * gm.array()).rowwise().sum().matrix();
      gx.mat().array() += ym.array() * (gm.colwise() - dot.col(0)).array();
    });
  });
}

// ---------------------------------------------------------------------------
// Matrix / graph ops

template <typename S>
Var<S> reshape(const Var<S>& x, Shape shape) {
  Tensor<S> out = x.value().reshaped(shape);
  const int ix = x.id();
  return tape_of(x).record(std::move(out), {x}, [ix](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ix, [&](Tensor<S>& gx) { gx.data() += g.data(); });
  });
}

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  const auto am = a.value().mat();
  const auto bm = b.value().mat();
  if (am.cols() != bm.rows()) {
    throw ContractError("matmul: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  Tensor<S> out(Shape{int(am.rows()), int(bm.cols())});
  out.mat().noalias() = am * bm;
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ia, [&](Tensor<S>& ga) { ga.mat().noalias() += g.mat() * t.value(ib).mat().transpose(); });
    t.accumulate_with(ib, [&](Tensor<S>& gb) { gb.mat().noalias() += t.value(ia).mat().transpose() * g.mat(); });
  });
}

template <typename S>
Var<S> sparse_matmul(const SparseRowMajor<S>& m, const Var<S>& x) {
  const auto xm = x.value().mat();
  if (m.cols() != xm.rows()) {
    throw ContractError("sparse_matmul: [" + std::to_string(m.rows()) + "," + std::to_string(m.cols()) +
                        "] x " + to_string(x.shape()));
  }
  Tensor<S> out(Shape{int(m.rows()), int(xm.cols())});
  out.mat().noalias() = m * xm;
  const int ix = x.id();
  const auto* mp = &m;
  return tape_of(x).record(std::move(out), {x}, [ix, mp](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ix, [&](Tensor<S>& gx) { gx.mat().noalias() += mp->transpose() * g.mat(); });
  });
}

template <typename S>
Var<S> gather_rows(const Var<S>& x, const IndexList& rows) {
  const auto& xv = x.value();
  require_matrix(xv, "gather_rows");
  const auto xm = xv.mat();
  Tensor<S> out(Shape{int(rows.size()), xv.dim(1)});
  auto om = out.mat();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= xm.rows()) throw ContractError("gather_rows: row index out of range");
    om.row(Eigen::Index(r)) = xm.row(rows[r]);
  }
  const int ix = x.id();
  return tape_of(x).record(std::move(out), {x}, [ix, rows](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ix, [&](Tensor<S>& gx) {
      auto gm = gx.mat();
      const auto gg = g.mat();
      for (std::size_t r = 0; r < rows.size(); ++r) gm.row(rows[r]) += gg.row(Eigen::Index(r));
    });
  });
}

template <typename S>
Var<S> scatter_rows(const Var<S>& x, const IndexList& rows, int n_rows) {
  const auto& xv = x.value();
  require_matrix(xv, "scatter_rows");
  if (Eigen::Index(rows.size()) != xv.mat().rows()) {
    throw ContractError("scatter_rows: " + std::to_string(rows.size()) + " indices for " + to_string(xv.shape()));
  }
  Tensor<S> out(Shape{n_rows, xv.dim(1)});
  auto om = out.mat();
  std::vector<bool> seen(std::size_t(n_rows), false);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= n_rows) throw ContractError("scatter_rows: row index out of range");
    if (seen[std::size_t(rows[r])]) throw ContractError("scatter_rows: duplicate row index");
    seen[std::size_t(rows[r])] = true;
    om.row(rows[r]) = xv.mat().row(Eigen::Index(r));
  }
  const int ix = x.id();
  return tape_of(x).record(std::move(out), {x}, [ix, rows](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ix, [&](Tensor<S>& gx) {
      auto gm = gx.mat();
      const auto gg = g.mat();
      for (std::size_t r = 0; r < rows.size(); ++r) gm.row(Eigen::Index(r)) += gg.row(rows[r]);
    });
  });
}

template <typename S>
Var<S> slice_rows(const Var<S>& x, int start, int count) {
  const auto& xv = x.value();
  require_matrix(xv, "slice_rows");
  if (start < 0 || count < 0 || start + count > xv.dim(0)) {
    throw ContractError("slice_rows: rows [" + std::to_string(start) + "," + std::to_string(start + count) +
                        ") out of " + to_string(xv.shape()));
  }
  Tensor<S> out(Shape{count, xv.dim(1)});
  out.mat() = xv.mat().middleRows(start, count);
  const int ix = x.id();
  return tape_of(x).record(std::move(out), {x}, [=](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ix, [&](Tensor<S>& gx) { gx.mat().middleRows(start, count) += g.mat(); });
  });
}

template <typename S>
Var<S> scale_rows(const Var<S>& x, const Var<S>& s) {
  const auto& xv = x.value();
  require_matrix(xv, "scale_rows");
  if (s.value().numel() != xv.mat().rows()) {
    throw ContractError("scale_rows: " + to_string(x.shape()) + " with scales " + to_string(s.shape()));
  }
  Tensor<S> out(xv.shape());
  out.mat() = s.value().data().matrix().asDiagonal() * xv.mat();
  const int ix = x.id(), is = s.id();
  return tape_of(x).record(std::move(out), {x, s}, [ix, is](Tape<S>& t, const Tensor<S>& g) {
    t.accumulate_with(ix, [&](Tensor<S>& gx) {
      gx.mat().noalias() += t.value(is).data().matrix().asDiagonal() * g.mat();
    });
    t.accumulate_with(is, [&](Tensor<S>& gs) {
      gs.data() += (g.mat().array() * t.value(ix).mat().array()).rowwise().sum();
    });
  });
}

template <typename S>
Var<S> graph_propagate(const Var<S>& h, const Var<S>& w, const EdgeList& edges) {
  const auto& hv = h.value();
  require_matrix(hv, "graph_propagate");
  if (w.value().numel() != Eigen::Index(edges.size())) {
    throw ContractError("graph_propagate: " + std::to_string(edges.size()) + " edges but weights " +
                        to_string(w.shape()));
  }
  const auto n = hv.mat().rows();
  for (const auto& [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n || j >= n || i == j) throw ContractError("graph_propagate: bad edge");
  }
  const auto& wv = w.value().data();
  Eigen::Array<S, Eigen::Dynamic, 1> deg = Eigen::Array<S, Eigen::Dynamic, 1>::Ones(n);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    deg[edges[e].first] += wv[Eigen::Index(e)];
    deg[edges[e].second] += wv[Eigen::Index(e)];
  }
  const Eigen::Array<S, Eigen::Dynamic, 1> inv_sqrt = deg.rsqrt();
  // out = norm(h) where norm(v)_i = v_i/d_i + sum_j w_ij v_j / sqrt(d_i d_j)
  auto propagate = [edges, inv_sqrt](const auto& v, auto& out, const auto& wts) {
    out = (inv_sqrt.square()).matrix().asDiagonal() * v;
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const auto [i, j] = edges[e];
      const S c = wts[Eigen::Index(e)] * inv_sqrt[i] * inv_sqrt[j];
      out.row(i) += c * v.row(j);
      out.row(j) += c * v.row(i);
    }
  };
  Tensor<S> out(hv.shape());
  {
    Matrix<S> om;
    propagate(hv.mat(), om, wv);
    out.mat() = om;
  }
  Tensor<S> y = out;
  const int ih = h.id(), iw = w.id();
  return tape_of(h).record(std::move(out), {h, w}, [=, y = std::move(y)](Tape<S>& t, const Tensor<S>& g) {
    const auto& wts = t.value(iw).data();
    Matrix<S> ag;
    propagate(g.mat(), ag, wts);  // symmetric operator
    t.accumulate_with(ih, [&](Tensor<S>& gh) { gh.mat() += ag; });
    t.accumulate_with(iw, [&](Tensor<S>& gw) {
      const auto hm = t.value(ih).mat();
      const auto gm = g.mat();
      const auto ym = y.mat();
      // dL/dd_a = -1/(2 d_a) * (g_a . y_a + h_a . (A g)_a)
      Eigen::Array<S, Eigen::Dynamic, 1> dd(n);
      for (Eigen::Index a = 0; a < n; ++a) {
        dd[a] = -S(0.5) * inv_sqrt[a] * inv_sqrt[a] * (gm.row(a).dot(ym.row(a)) + hm.row(a).dot(ag.row(a)));
      }
      for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto [i, j] = edges[e];
        const S direct = (gm.row(i).dot(hm.row(j)) + gm.row(j).dot(hm.row(i))) * inv_sqrt[i] * inv_sqrt[j];
        gw[Eigen::Index(e)] += direct + dd[i] + dd[j];
      }
    });
  });
}

#define VGSEG_INSTANTIATE_OPS(S)                                                          \
  template Var<S> add(const Var<S>&, const Var<S>&);                                      \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                      \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                      \
  template Var<S> div(const Var<S>&, const Var<S>&);                                      \
  template Var<S> scale(const Var<S>&, S);                                                \
  template Var<S> add_scalar(const Var<S>&, S);                                           \
  template Var<S> relu(const Var<S>&);                                                    \
  template Var<S> sigmoid(const Var<S>&);                                                 \
  template Var<S> log(const Var<S>&);                                                     \
  template Var<S> softplus(const Var<S>&);                                                \
  template Var<S> clamp(const Var<S>&, S, S);                                             \
  template Var<S> reduce_sum(const Var<S>&);                                              \
  template Var<S> reduce_mean(const Var<S>&);                                             \
  template Var<S> conv3d(const Var<S>&, const Var<S>&, const Var<S>&);                    \
  template Var<S> maxpool3d(const Var<S>&);                                               \
  template Var<S> upsample2(const Var<S>&, Upsample);                                     \
  template Var<S> concat_channels(const Var<S>&, const Var<S>&);                          \
  template Var<S> slice_channel(const Var<S>&, int);                                      \
  template Var<S> channel_softmax(const Var<S>&);                                         \
  template Var<S> reshape(const Var<S>&, Shape);                                          \
  template Var<S> matmul(const Var<S>&, const Var<S>&);                                   \
  template Var<S> sparse_matmul(const SparseRowMajor<S>&, const Var<S>&);                 \
  template Var<S> gather_rows(const Var<S>&, const IndexList&);                           \
  template Var<S> scatter_rows(const Var<S>&, const IndexList&, int);                     \
  template Var<S> slice_rows(const Var<S>&, int, int);                                    \
  template Var<S> scale_rows(const Var<S>&, const Var<S>&);                               \
  template Var<S> graph_propagate(const Var<S>&, const Var<S>&, const EdgeList&);

VGSEG_INSTANTIATE_OPS(float)
VGSEG_INSTANTIATE_OPS(double)

}  // namespace vgseg::ad
