#include "vgseg/gradsuite.hpp"

#include <cmath>
#include <algorithm>
#include <functional>
#include <random>

#include "vgseg/autodiff/gradcheck.hpp"
#include "vgseg/model/cascade.hpp"
#include "vgseg/model/losses.hpp"

namespace vgseg {

namespace {

using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using T = Tensor<double>;
using V = Var<double>;
using Inputs = std::span<const V>;

// Inputs with |x| in [0.1, 1] so kinks at zero are never crossed.
T away_from_zero(Shape s, std::mt19937_64& rng) {
  T t(std::move(s));
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (Eigen::Index i = 0; i < t.numel(); ++i) t[i] = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

T uniform(Shape s, double lo, double hi, std::mt19937_64& rng) {
  T t(std::move(s));
  std::uniform_real_distribution<double> u(lo, hi);
  for (Eigen::Index i = 0; i < t.numel(); ++i) t[i] = u(rng);
  return t;
}

// A permutation of well separated values, so max pooling never flips.
// Output projections start at zero, which would hide the graph path.
void randomize_outputs(model::FusionLevel<double>& level, std::mt19937_64& rng) {
  level.enc_out->value = away_from_zero(level.enc_out->value.shape(), rng);
  level.dec_out->value = away_from_zero(level.dec_out->value.shape(), rng);
}

T distinct(Shape s, std::mt19937_64& rng) {
  T t(std::move(s));
  std::vector<double> v(std::size_t(t.numel()));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = -1.0 + 0.05 * double(i);
  std::shuffle(v.begin(), v.end(), rng);
  for (Eigen::Index i = 0; i < t.numel(); ++i) t[i] = v[std::size_t(i)];
  return t;
}

// Reduces any output to a scalar with fixed random weights.
V project(Tape<double>& tape, const V& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  return ad::reduce_sum(out * tape.constant(uniform(out.shape(), -1.0, 1.0, rng)));
}

struct Case {
  std::string name;
  double eps;
  // Fills inputs/params for a seed and returns the check function.
  std::function<ad::CheckFn(std::mt19937_64&, std::vector<T>&, ad::ParameterStore<double>&, std::uint64_t)> setup;
};

ad::EdgeList path_edges(int n) {
  ad::EdgeList e;
  for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  if (n > 3) e.emplace_back(0, n - 1);
  return e;
}

// A 6^3 grid with 4 (or 8) nodes at fixed positions and a k=2 mapping.
model::LevelGraph<double> toy_level(std::mt19937_64& rng, std::vector<Eigen::Vector3d>& centroids, int nodes = 4) {
  centroids = {{1, 1, 1}, {1, 4, 4}, {4, 1, 4}, {4, 4, 1}};
  if (nodes == 8) {
    const std::vector<Eigen::Vector3d> more{{1, 1, 4}, {1, 4, 1}, {4, 1, 1}, {4, 4, 4}};
    centroids.insert(centroids.end(), more.begin(), more.end());
  }
  model::LevelGraph<double> g;
  g.level = 0;
  for (int i = 0; i < nodes; ++i) g.node_ids.push_back(i);
  g.edges = path_edges(nodes);
  if (nodes == 8) {
    for (auto e : {std::pair{0, 4}, {1, 5}, {2, 6}, {3, 7}}) g.edges.push_back(e);
  }
  const auto a = build_assignment(Dims{6, 6, 6}, centroids, MappingParams{2});
  g.mapping = std::make_shared<MappingPair<double>>(make_mapping<double>(a, 0));
  g.gray = uniform({nodes, 1}, 0.0, 1.0, rng);
  return g;
}

std::vector<Case> cases() {
  std::vector<Case> c;
  auto unary = [&](std::string name, std::function<T(std::mt19937_64&)> gen, std::function<V(const V&)> op,
                   double eps = 1e-3) {
    c.push_back({std::move(name), eps, [gen, op](std::mt19937_64& rng, std::vector<T>& in, auto&, std::uint64_t s) {
                   in.push_back(gen(rng));
                   return ad::CheckFn([op, s](Tape<double>& t, Inputs x) { return project(t, op(x[0]), s); });
                 }});
  };
  auto binary = [&](std::string name, std::function<T(std::mt19937_64&)> ga, std::function<T(std::mt19937_64&)> gb,
                    std::function<V(const V&, const V&)> op) {
    c.push_back({std::move(name), 1e-3, [ga, gb, op](std::mt19937_64& rng, std::vector<T>& in, auto&, std::uint64_t s) {
                   in.push_back(ga(rng));
                   in.push_back(gb(rng));
                   return ad::CheckFn([op, s](Tape<double>& t, Inputs x) { return project(t, op(x[0], x[1]), s); });
                 }});
  };
  auto nz = [](Shape s) { return [s](std::mt19937_64& r) { return away_from_zero(s, r); }; };
  auto pos = [](Shape s) { return [s](std::mt19937_64& r) { return uniform(s, 0.5, 2.0, r); }; };

  binary("add", nz({3, 4}), nz({3, 4}), [](const V& a, const V& b) { return a + b; });
  binary("sub", nz({3, 4}), nz({3, 4}), [](const V& a, const V& b) { return a - b; });
  binary("mul", nz({3, 4}), nz({3, 4}), [](const V& a, const V& b) { return a * b; });
  binary("div", nz({3, 4}), pos({3, 4}), [](const V& a, const V& b) { return a / b; });
  unary("scale", nz({5}), [](const V& a) { return a * 1.7; });
  unary("add_scalar", nz({5}), [](const V& a) { return a + 0.3; });
  unary("relu", nz({2, 3, 3, 3}), [](const V& a) { return ad::relu(a); });
  unary("sigmoid", nz({2, 3, 3, 3}), [](const V& a) { return ad::sigmoid(a); });
  unary("softplus", [](std::mt19937_64& r) { return uniform({2, 3, 3, 3}, -8.0, 8.0, r); },
        [](const V& a) { return ad::softplus(a); });
  unary("log", pos({4, 3}), [](const V& a) { return ad::log(a); });
  unary("clamp", nz({4, 3}), [](const V& a) { return ad::clamp(a, -0.05, 0.05); });
  unary("reduce_sum", nz({2, 2, 2, 2}), [](const V& a) { return ad::reduce_sum(a) * ad::reduce_sum(a); });
  unary("reduce_mean", nz({2, 2, 2, 2}), [](const V& a) { return ad::reduce_mean(a) * ad::reduce_mean(a); });
  binary("conv3d_3x3x3", nz({2, 4, 3, 5}), nz({3, 2, 3, 3, 3}),
         [](const V& x, const V& w) { return ad::conv3d(x, w); });
  c.push_back({"conv3d_bias", 1e-3, [](std::mt19937_64& rng, std::vector<T>& in, auto&, std::uint64_t s) {
                 in.push_back(away_from_zero({2, 3, 3, 3}, rng));
                 in.push_back(away_from_zero({2, 2, 3, 3, 3}, rng));
                 in.push_back(away_from_zero({2}, rng));
                 return ad::CheckFn(
                     [s](Tape<double>& t, Inputs x) { return project(t, ad::conv3d(x[0], x[1], x[2]), s); });
               }});
  binary("conv3d_1x1x1", nz({3, 2, 3, 4}), nz({2, 3, 1, 1, 1}),
         [](const V& x, const V& w) { return ad::conv3d(x, w); });
  unary("maxpool3d", [](std::mt19937_64& r) { return distinct({2, 4, 2, 4}, r); },
        [](const V& a) { return ad::maxpool3d(a); });
  unary("upsample_nearest", nz({2, 2, 3, 2}), [](const V& a) { return ad::upsample2(a, ad::Upsample::Nearest); });
  unary("upsample_trilinear", nz({2, 2, 3, 2}),
        [](const V& a) { return ad::upsample2(a, ad::Upsample::Trilinear); });
  binary("concat_channels", nz({2, 2, 2, 3}), nz({1, 2, 2, 3}),
         [](const V& a, const V& b) { return ad::concat_channels(a, b); });
  unary("slice_channel", nz({3, 2, 2, 2}), [](const V& a) { return ad::slice_channel(a, 1); });
  unary("channel_softmax", nz({3, 2, 3, 2}), [](const V& a) { return ad::channel_softmax(a); });
  unary("reshape", nz({2, 2, 3, 1}), [](const V& a) { return ad::reshape(a, Shape{6, 2}); });
  binary("matmul", nz({4, 3}), nz({3, 5}), [](const V& a, const V& b) { return ad::matmul(a, b); });
  c.push_back({"sparse_matmul", 1e-3, [](std::mt19937_64& rng, std::vector<T>& in, auto&, std::uint64_t s) {
                 auto m = std::make_shared<ad::SparseRowMajor<double>>(5, 6);
                 std::vector<Eigen::Triplet<double>> trip;
                 std::uniform_real_distribution<double> u(-1.0, 1.0);
                 for (int i = 0; i < 5; ++i) {
                   trip.emplace_back(i, i, u(rng));
                   trip.emplace_back(i, (i + 2) % 6, u(rng));
                 }
                 m->setFromTriplets(trip.begin(), trip.end());
                 in.push_back(away_from_zero({6, 3}, rng));
                 return ad::CheckFn(
                     [m, s](Tape<double>& t, Inputs x) { return project(t, ad::sparse_matmul(*m, x[0]), s); });
               }});
  unary("gather_rows", nz({5, 3}), [](const V& a) { return ad::gather_rows(a, {4, 0, 0, 2}); });
  unary("scatter_rows", nz({3, 2}), [](const V& a) { return ad::scatter_rows(a, {4, 1, 2}, 6); });
  unary("slice_rows", nz({5, 3}), [](const V& a) { return ad::slice_rows(a, 1, 3); });
  binary("scale_rows", nz({4, 3}), nz({4, 1}), [](const V& a, const V& b) { return ad::scale_rows(a, b); });
  binary("graph_propagate", nz({5, 3}), [](std::mt19937_64& r) { return uniform({5, 1}, 0.1, 1.0, r); },
         [](const V& h, const V& w) { return ad::graph_propagate(h, w, path_edges(5)); });

  c.push_back({"weighted_bce", 1e-4, [](std::mt19937_64& rng, std::vector<T>& in, auto&, std::uint64_t) {
                 in.push_back(uniform({1, 2, 2, 3}, 0.05, 0.95, rng));
                 T y({1, 2, 2, 3});
                 std::bernoulli_distribution b(0.5);
                 for (Eigen::Index i = 0; i < y.numel(); ++i) y[i] = b(rng);
                 return ad::CheckFn([y](Tape<double>&, Inputs x) { return model::weighted_bce(x[0], y, 5.0); });
               }});
  c.push_back({"weighted_bce_logits", 1e-4, [](std::mt19937_64& rng, std::vector<T>& in, auto&, std::uint64_t) {
                 in.push_back(uniform({1, 2, 2, 3}, -6.0, 6.0, rng));
                 T y({1, 2, 2, 3});
                 std::bernoulli_distribution b(0.5);
                 for (Eigen::Index i = 0; i < y.numel(); ++i) y[i] = b(rng);
                 return ad::CheckFn([y](Tape<double>&, Inputs x) { return model::weighted_bce_logits(x[0], y, 5.0); });
               }});
  c.push_back({"dice_loss", 1e-4, [](std::mt19937_64& rng, std::vector<T>& in, auto&, std::uint64_t) {
                 in.push_back(uniform({1, 2, 2, 3}, 0.05, 0.95, rng));
                 T y({1, 2, 2, 3});
                 std::bernoulli_distribution b(0.5);
                 for (Eigen::Index i = 0; i < y.numel(); ++i) y[i] = b(rng);
                 y[0] = 1;
                 return ad::CheckFn([y](Tape<double>&, Inputs x) { return model::dice_loss(x[0], y); });
               }});

  // Graph and fusion blocks; these contain relu and top-k selections inside,
  // so they use a smaller step.
  constexpr double kBlockEps = 1e-4;
  c.push_back({"edge_weights", kBlockEps, [](std::mt19937_64& rng, std::vector<T>& in, auto& store, std::uint64_t s) {
                 auto head = std::make_shared<model::EdgeHead<double>>(store, "head", 3, rng);
                 in.push_back(away_from_zero({5, 3}, rng));
                 in.push_back(uniform({5, 1}, 0.0, 1.0, rng));
                 return ad::CheckFn([head, s](Tape<double>& t, Inputs x) {
                   return project(t, model::edge_weights(t, x[0], x[1], *head, path_edges(5)), s);
                 });
               }});
  c.push_back({"graph_residual", kBlockEps, [](std::mt19937_64& rng, std::vector<T>& in, auto& store, std::uint64_t s) {
                 auto omega = std::make_shared<model::GraphResidual<double>>(store, "omega", 3, rng);
                 in.push_back(away_from_zero({5, 3}, rng));
                 in.push_back(uniform({5, 1}, 0.1, 1.0, rng));
                 return ad::CheckFn([omega, s](Tape<double>& t, Inputs x) {
                   return project(t, (*omega)(t, x[0], x[1], path_edges(5)), s);
                 });
               }});
  c.push_back({"gpool", kBlockEps, [](std::mt19937_64& rng, std::vector<T>& in, auto& store, std::uint64_t s) {
                 auto pool = std::make_shared<model::GraphPool<double>>(store, "pool", 3, rng);
                 in.push_back(away_from_zero({6, 3}, rng));
                 return ad::CheckFn([pool, s](Tape<double>& t, Inputs x) {
                   auto r = (*pool)(t, x[0], 0.5);
                   return project(t, model::gunpool(r.h, r.selected, 6), s);
                 });
               }});
  c.push_back({"encoder_fuse", kBlockEps, [](std::mt19937_64& rng, std::vector<T>& in, auto& store, std::uint64_t s) {
                 auto level = std::make_shared<model::FusionLevel<double>>(store, "l0", 0, 3, 4, rng);
                 randomize_outputs(*level, rng);
                 std::vector<Eigen::Vector3d> cent;
                 auto g = std::make_shared<model::LevelGraph<double>>(toy_level(rng, cent));
                 in.push_back(away_from_zero({3, 6, 6, 6}, rng));
                 in.push_back(away_from_zero({4, 4}, rng));
                 return ad::CheckFn([level, g, s](Tape<double>& t, Inputs x) {
                   auto r = model::encoder_fuse(t, *level, *g, x[0], x[1]);
                   return project(t, r.e, s) + project(t, r.e_g, s + 1);
                 });
               }});
  c.push_back({"decoder_fuse", kBlockEps, [](std::mt19937_64& rng, std::vector<T>& in, auto& store, std::uint64_t s) {
                 auto level = std::make_shared<model::FusionLevel<double>>(store, "l0", 0, 3, 4, rng);
                 randomize_outputs(*level, rng);
                 std::vector<Eigen::Vector3d> cent;
                 auto g = std::make_shared<model::LevelGraph<double>>(toy_level(rng, cent));
                 in.push_back(away_from_zero({3, 6, 6, 6}, rng));  // E_l^c
                 in.push_back(away_from_zero({3, 6, 6, 6}, rng));  // D_l^c
                 in.push_back(away_from_zero({4, 4}, rng));        // up(D_{l+1}^g)
                 return ad::CheckFn([level, g, s](Tape<double>& t, Inputs x) {
                   auto enc = model::encoder_fuse(t, *level, *g, x[0], V{});
                   auto dec = model::decoder_fuse(t, *level, *g, x[1], x[2], enc);
                   return project(t, dec.d, s) + project(t, dec.d_g, s + 1);
                 });
               }});
  c.push_back({"pooled_level_fuse", kBlockEps,
               [](std::mt19937_64& rng, std::vector<T>& in, auto& store, std::uint64_t s) {
                 auto l0 = std::make_shared<model::FusionLevel<double>>(store, "l0", 0, 2, 4, rng);
                 auto l1 = std::make_shared<model::FusionLevel<double>>(store, "l1", 1, 3, 4, rng);
                 randomize_outputs(*l0, rng);
                 randomize_outputs(*l1, rng);
                 auto cent = std::make_shared<std::vector<Eigen::Vector3d>>();
                 auto g0 = std::make_shared<model::LevelGraph<double>>(toy_level(rng, *cent, 8));
                 in.push_back(away_from_zero({2, 6, 6, 6}, rng));
                 in.push_back(away_from_zero({3, 3, 3, 3}, rng));
                 // level-1 graphs must outlive the backward pass of each call
                 auto keep = std::make_shared<std::vector<std::shared_ptr<model::LevelGraph<double>>>>();
                 return ad::CheckFn([l0, l1, g0, cent, keep, s](Tape<double>& t, Inputs x) {
                   auto e0 = model::encoder_fuse(t, *l0, *g0, x[0], V{});
                   auto pooled = l1->pool(t, e0.e_g, 0.5);
                   auto g1 = std::make_shared<model::LevelGraph<double>>(
                       model::pooled_level(*g0, pooled.selected, 1, Dims{3, 3, 3}, *cent, 2));
                   auto e1 = model::encoder_fuse(t, *l1, *g1, x[1], pooled.h);
                   auto d1 = model::decoder_fuse(t, *l1, *g1, x[1], V{}, e1);
                   auto up = model::gunpool(d1.d_g, g1->selected, 8);
                   auto d0 = model::decoder_fuse(t, *l0, *g0, x[0], up, e0);
                   keep->push_back(g1);
                   return project(t, d0.d, s);
                 });
               }});
  return c;
}

}  // namespace

std::vector<GradCase> run_gradient_suite(int seeds) {
  std::vector<GradCase> out;
  for (const auto& c : cases()) {
    for (int seed = 0; seed < seeds; ++seed) {
      std::mt19937_64 rng(0xC0FFEEULL + std::uint64_t(seed) * 7919ULL);
      std::vector<T> inputs;
      ad::ParameterStore<double> store;
      auto fn = c.setup(rng, inputs, store, std::uint64_t(seed));
      const auto r = ad::grad_check(fn, std::move(inputs), store.size() ? &store : nullptr, c.eps);
      out.push_back({c.name, seed, c.eps, r.max_rel_error, r.worst, r.checked, r.retried});
    }
  }
  return out;
}

}  // namespace vgseg
