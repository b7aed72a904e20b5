#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "vgseg/autodiff/checkpoint.hpp"
#include "vgseg/autodiff/gradcheck.hpp"
#include "vgseg/autodiff/ops.hpp"
#include "vgseg/autodiff/optimizer.hpp"

using namespace vgseg;
using namespace vgseg::ad;

namespace {

Tensor<double> rand_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(s));
  std::uniform_real_distribution<double> u(lo, hi);
  for (Eigen::Index i = 0; i < t.numel(); ++i) t[i] = u(rng);
  return t;
}

// Direct 7-loop convolution with zero padding.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w) {
  const int cin = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int cout = w.dim(0), k = w.dim(2), r = k / 2;
  Tensor<double> out(Shape{cout, D, H, W});
  auto xi = [&](int c, int z, int y, int xx) { return x[((Eigen::Index(c) * D + z) * H + y) * W + xx]; };
  for (int o = 0; o < cout; ++o)
    for (int z = 0; z < D; ++z)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          double s = 0.0;
          for (int c = 0; c < cin; ++c)
            for (int a = 0; a < k; ++a)
              for (int b = 0; b < k; ++b)
                for (int e = 0; e < k; ++e) {
                  const int zz = z + a - r, yy = y + b - r, x3 = xx + e - r;
                  if (zz < 0 || zz >= D || yy < 0 || yy >= H || x3 < 0 || x3 >= W) continue;
                  s += w[(((Eigen::Index(o) * cin + c) * k + a) * k + b) * k + e] * xi(c, zz, yy, x3);
                }
          out[((Eigen::Index(o) * D + z) * H + y) * W + xx] = s;
        }
  return out;
}

}  // namespace

TEST_CASE("gradients of simple reductions") {
  std::mt19937_64 rng(1);
  Tape<double> tape;
  const auto xv = rand_tensor({3, 4}, rng);
  auto x = tape.input(xv);
  tape.backward(reduce_sum(x));
  CHECK((x.grad().data() == 1.0).all());

  Tape<double> t2;
  auto y = t2.input(xv);
  t2.backward(reduce_sum(y * y));
  CHECK((y.grad().data() - 2.0 * xv.data()).abs().maxCoeff() == 0.0);
}

TEST_CASE("parameter gradients accumulate until zero_grad") {
  ParameterStore<double> store;
  auto& p = store.add("p", Tensor<double>({2}, 1.5));
  for (int i = 0; i < 2; ++i) {
    Tape<double> tape;
    tape.backward(reduce_sum(tape.param(p) * 3.0));
  }
  CHECK((p.grad.data() == 6.0).all());
  store.zero_grad();
  CHECK((p.grad.data() == 0.0).all());
  CHECK_THROWS_AS(store.add("p", Tensor<double>({1})), ContractError);
}

TEST_CASE("op values") {
  Tape<double> tape;
  CHECK(sigmoid(tape.constant(Tensor<double>::scalar(0.0))).value().item() == 0.5);

  SUBCASE("identity 1x1x1 kernel") {
    std::mt19937_64 rng(2);
    const auto xv = rand_tensor({2, 3, 4, 5}, rng);
    Tensor<double> w({2, 2, 1, 1, 1});
    w[0] = 1.0;
    w[3] = 1.0;
    CHECK(conv3d(tape.constant(xv), tape.constant(w)).value() == xv);
  }
  SUBCASE("3x3x3 matches direct convolution") {
    std::mt19937_64 rng(3);
    const auto xv = rand_tensor({3, 5, 4, 6}, rng);
    const auto wv = rand_tensor({2, 3, 3, 3, 3}, rng);
    const auto got = conv3d(tape.constant(xv), tape.constant(wv)).value();
    CHECK((got.data() - naive_conv(xv, wv).data()).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("maxpool of a constant") {
    const auto out = maxpool3d(tape.constant(Tensor<double>({2, 4, 4, 6}, 0.7))).value();
    CHECK(out.shape() == Shape{2, 2, 2, 3});
    CHECK((out.data() == 0.7).all());
  }
  SUBCASE("nearest and trilinear upsampling") {
    Tensor<double> x({1, 1, 1, 2});
    x[0] = 0.0;
    x[1] = 1.0;
    const auto near = upsample2(tape.constant(x)).value();
    CHECK(near.shape() == Shape{1, 2, 2, 4});
    CHECK(near[0] == 0.0);
    CHECK(near[1] == 0.0);
    CHECK(near[2] == 1.0);
    const auto tri = upsample2(tape.constant(x), Upsample::Trilinear).value();
    // half-pixel centres: 0, 0.25, 0.75, 1 along x
    CHECK(tri[0] == doctest::Approx(0.0));
    CHECK(tri[1] == doctest::Approx(0.25));
    CHECK(tri[2] == doctest::Approx(0.75));
    CHECK(tri[3] == doctest::Approx(1.0));
  }
  SUBCASE("channel softmax sums to one") {
    std::mt19937_64 rng(4);
    const auto out = channel_softmax(tape.constant(rand_tensor({3, 2, 2, 2}, rng, -5, 5))).value();
    const auto m = out.mat();
    CHECK((m.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("division by zero and log of non-positive values") {
    CHECK_THROWS_AS(div(tape.constant(Tensor<double>({2}, 1.0)), tape.constant(Tensor<double>({2}, 0.0))), DataError);
    CHECK_THROWS_AS(ad::log(tape.constant(Tensor<double>({2}, 0.0))), DataError);
    CHECK_THROWS_AS(add(tape.constant(Tensor<double>({2})), tape.constant(Tensor<double>({3}))), ContractError);
  }
}

TEST_CASE("sparse product agrees with the dense product") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    SparseRowMajor<double> m(50, 50);
    std::vector<Eigen::Triplet<double>> trip;
    std::uniform_int_distribution<int> idx(0, 49);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < 300; ++i) trip.emplace_back(idx(rng), idx(rng), u(rng));
    m.setFromTriplets(trip.begin(), trip.end());
    const auto xv = rand_tensor({50, 4}, rng);
    Tape<double> tape;
    const auto got = sparse_matmul(m, tape.constant(xv)).value();
    const Eigen::MatrixXd dense = Eigen::MatrixXd(m) * xv.to_matrix();
    CHECK((got.to_matrix() - dense).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("graph propagation matches the dense normalised adjacency") {
  std::mt19937_64 rng(6);
  const EdgeList edges{{0, 1}, {1, 2}, {0, 3}};
  const auto h = rand_tensor({4, 2}, rng);
  const auto w = rand_tensor({3, 1}, rng, 0.1, 1.0);
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(4, 4);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    a(edges[e].first, edges[e].second) += w[Eigen::Index(e)];
    a(edges[e].second, edges[e].first) += w[Eigen::Index(e)];
  }
  const Eigen::VectorXd dinv = a.rowwise().sum().array().rsqrt();
  const Eigen::MatrixXd expect = dinv.asDiagonal() * a * dinv.asDiagonal() * h.to_matrix();
  Tape<double> tape;
  const auto got = graph_propagate(tape.constant(h), tape.constant(w), edges).value();
  CHECK((got.to_matrix() - expect).cwiseAbs().maxCoeff() < 1e-12);

  // no edges: self loops only
  const auto alone = graph_propagate(tape.constant(h), tape.constant(Tensor<double>({0, 1})), EdgeList{}).value();
  CHECK(alone == h);
}

TEST_CASE("grad_check oracle") {
  std::mt19937_64 rng(7);
  const auto linear = grad_check([](Tape<double>& t, std::span<const Var<double>> x) {
    return reduce_sum(x[0] * 3.0 + 1.0);
  }, {rand_tensor({5}, rng)});
  CHECK(linear.max_rel_error < 1e-9);

  const auto chain = grad_check([](Tape<double>&, std::span<const Var<double>> x) {
    return reduce_sum(sigmoid(sigmoid(x[0]) * x[1]));
  }, {rand_tensor({6}, rng), rand_tensor({6}, rng)});
  CHECK(chain.max_rel_error < 1e-6);
  CHECK(chain.checked == 12);

  // a deliberately wrong backward is caught
  const auto wrong = grad_check([](Tape<double>& t, std::span<const Var<double>> x) {
    auto v = x[0];
    auto y = t.record(v.value(), {v}, [id = v.id()](Tape<double>& tp, const Tensor<double>& g) {
      Tensor<double> twice = g;
      twice.data() *= 2.0;
      tp.accumulate(id, twice);
    });
    return reduce_sum(y);
  }, {rand_tensor({3}, rng)});
  CHECK(wrong.max_rel_error > 0.4);
  CHECK(wrong.retried == 3);

  // relu kink 5e-5 from the point: eps = 1e-4 straddles it, eps / 100 does not
  Tensor<double> near_kink(Shape{2});
  near_kink[0] = 5e-5;
  near_kink[1] = 0.5;
  const auto kink = grad_check([](Tape<double>&, std::span<const Var<double>> x) {
    return reduce_sum(relu(x[0]));
  }, {near_kink}, nullptr, 1e-4);
  CHECK(kink.max_rel_error < 1e-9);
  CHECK(kink.retried == 1);
}

TEST_CASE("forward results are bit-identical across runs") {
  std::mt19937_64 rng(8);
  const auto xv = rand_tensor({2, 6, 6, 6}, rng);
  const auto wv = rand_tensor({3, 2, 3, 3, 3}, rng);
  auto run = [&] {
    Tape<double> t;
    return channel_softmax(conv3d(maxpool3d(t.constant(xv)), t.constant(wv))).value();
  };
  CHECK(run() == run());
}

TEST_CASE("step schedule") {
  StepSchedule s{1e-4, 40, 0.1};
  CHECK(s.lr_at(0) == doctest::Approx(1e-4));
  CHECK(s.lr_at(39) == doctest::Approx(1e-4));
  CHECK(s.lr_at(40) == doctest::Approx(1e-5));
  CHECK(s.lr_at(85) == doctest::Approx(1e-6));
}

TEST_CASE("AdamW step matches a hand computation") {
  ParameterStore<float> store;
  auto& p = store.add("w", Tensor<float>({2}, 1.0f));
  AdamW opt(store, AdamWParams{0.9, 0.999, 1e-8, 0.01});
  p.grad[0] = 0.5f;
  p.grad[1] = -2.0f;
  opt.step(0.1);
  // first step: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
  const double decayed = 1.0 * (1.0 - 0.1 * 0.01);
  CHECK(p.value[0] == doctest::Approx(decayed - 0.1 * 0.5 / (0.5 + 1e-8)));
  CHECK(p.value[1] == doctest::Approx(decayed + 0.1 * 2.0 / (2.0 + 1e-8)));
  CHECK(opt.steps() == 1);
}

TEST_CASE("checkpoint round trip and mismatch errors") {
  testing::TempDir tmp("ckpt");
  std::mt19937_64 rng(9);
  ParameterStore<float> a;
  a.add("x.w", rand_tensor({3, 2, 3, 3, 3}, rng).cast<float>());
  a.add("x.b", rand_tensor({3}, rng).cast<float>());
  a.add("s", Tensor<float>::scalar(0.25f));
  save_checkpoint(tmp.path / "m.ckpt", a);

  ParameterStore<float> b;
  b.add("x.w", Tensor<float>({3, 2, 3, 3, 3}));
  b.add("x.b", Tensor<float>({3}));
  b.add("s", Tensor<float>::scalar(0.0f));
  load_checkpoint(tmp.path / "m.ckpt", b);
  for (const auto& p : a) CHECK(b.at(p->name).value == p->value);

  ParameterStore<float> wrong_shape;
  wrong_shape.add("x.w", Tensor<float>({3, 2, 1, 1, 1}));
  wrong_shape.add("x.b", Tensor<float>({3}));
  wrong_shape.add("s", Tensor<float>::scalar(0.0f));
  CHECK_THROWS_AS(load_checkpoint(tmp.path / "m.ckpt", wrong_shape), FormatError);

  ParameterStore<float> missing;
  missing.add("x.w", Tensor<float>({3, 2, 3, 3, 3}));
  CHECK_THROWS_AS(load_checkpoint(tmp.path / "m.ckpt", missing), FormatError);

  std::filesystem::resize_file(tmp.path / "m.ckpt.bin", 12);
  CHECK_THROWS_AS(load_checkpoint(tmp.path / "m.ckpt", b), FormatError);
}
