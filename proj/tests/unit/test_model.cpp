#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "vgseg/model/cascade.hpp"
#include "vgseg/model/losses.hpp"
#include "vgseg/model/trainer.hpp"
#include "vgseg/phantom.hpp"

using namespace vgseg;
using namespace vgseg::model;
using ad::Shape;

namespace {

Tensor<double> tensor(Shape s, std::initializer_list<double> v) {
  Tensor<double> t(std::move(s));
  Eigen::Index i = 0;
  for (double x : v) t[i++] = x;
  return t;
}

void zero(Parameter<double>& p) { p.value.data().setZero(); }

void set_identity(Parameter<double>& p) {
  p.value.data().setZero();
  p.value.mat().setIdentity();
}

LevelGraph<double> toy_level() {
  const std::vector<Eigen::Vector3d> c{{1, 1, 1}, {1, 4, 4}, {4, 1, 4}, {4, 4, 1}};
  LevelGraph<double> g;
  g.node_ids = {0, 1, 2, 3};
  g.edges = {{0, 1}, {1, 2}, {2, 3}};
  g.mapping = std::make_shared<MappingPair<double>>(make_mapping<double>(build_assignment({6, 6, 6}, c, MappingParams{2})));
  g.gray = Tensor<double>({4, 1}, 0.5);
  return g;
}

NetworkConfig small_net() {
  NetworkConfig cfg;
  cfg.levels = 2;
  cfg.base_channels = 2;
  cfg.node_dim = 4;
  cfg.input = {8, 8, 8};
  return cfg;
}

Sample phantom_sample(const NetworkConfig& net, std::uint64_t seed, bool with_graph) {
  PhantomConfig pc;
  pc.dims = net.input;
  pc.seed = seed;
  pc.radius_min = 1.0;
  pc.radius_max = 1.5;
  auto ph = generate_phantom(pc);
  Sample s{"s", ph.volume, ph.mask, std::nullopt};
  if (with_graph) {
    ProbabilityMap a0(pc.dims, {}, 0.1f);
    for (std::size_t i = 0; i < a0.size(); ++i) a0[i] = ph.mask[i] ? 0.9f : 0.1f;
    SlicParams slic;
    slic.n_segments = 8;
    GraphBuildParams build;
    build.candidate_radius = 6.0;
    const auto g = build_graph(ph.volume, ph.mask, a0, slic, build);
    s.graph = make_graph_input<float>(g, ph.volume, ph.mask, a0, net.k);
  }
  return s;
}

}  // namespace

TEST_CASE("weighted BCE scalar values") {
  Tape<double> tape;
  const auto p = tape.constant(tensor({1}, {0.5}));
  CHECK(weighted_bce(p, tensor({1}, {1.0}), 5.0).value().item() == doctest::Approx(5.0 * std::numbers::ln2).epsilon(1e-9));

  const auto pv = tensor({4}, {0.1, 0.7, 0.4, 0.95});
  const auto yv = tensor({4}, {0.0, 1.0, 1.0, 0.0});
  double plain = 0.0;
  for (int i = 0; i < 4; ++i) plain -= yv[i] * std::log(pv[i]) + (1 - yv[i]) * std::log(1 - pv[i]);
  CHECK(weighted_bce(tape.constant(pv), yv, 1.0).value().item() == doctest::Approx(plain / 4).epsilon(1e-7));

  const auto perfect = weighted_bce(tape.constant(yv), yv, 5.0).value().item();
  CHECK(perfect <= 5.0 * -std::log(1.0 - 1e-6) + 1e-12);
  CHECK_THROWS_AS(weighted_bce(tape.constant(pv), tensor({4}, {0, 2, 0, 0})), ContractError);
}

TEST_CASE("weighted BCE from logits") {
  Tape<double> tape;
  CHECK(weighted_bce_logits(tape.constant(tensor({1}, {0.0})), tensor({1}, {1.0}), 5.0).value().item() ==
        doctest::Approx(5.0 * std::numbers::ln2).epsilon(1e-12));

  const auto zv = tensor({4}, {-2.0, 0.3, 1.7, -0.4});
  const auto yv = tensor({4}, {0.0, 1.0, 1.0, 0.0});
  const double from_logits = weighted_bce_logits(tape.constant(zv), yv, 5.0).value().item();
  const double from_probs = weighted_bce(ad::sigmoid(tape.constant(zv)), yv, 5.0).value().item();
  CHECK(from_logits == doctest::Approx(from_probs).epsilon(1e-9));

  // confidently wrong: the probability form is clamped flat, the logit form is not
  Tape<double> t2;
  auto z = t2.input(tensor({2}, {-40.0, 40.0}));
  t2.backward(weighted_bce_logits(z, tensor({2}, {1.0, 0.0}), 5.0));
  CHECK(z.grad()[0] == doctest::Approx(-2.5).epsilon(1e-9));
  CHECK(z.grad()[1] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(std::isfinite(ad::softplus(t2.constant(tensor({1}, {800.0}))).value().item()));
}

TEST_CASE("dice loss scalar values") {
  Tape<double> tape;
  const auto y = tensor({4}, {1, 1, 0, 0});
  CHECK(dice_loss(tape.constant(y), y).value().item() <= 1e-5);
  CHECK(dice_loss(tape.constant(tensor({4}, {0, 0, 1, 1})), y).value().item() == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(dice_loss(tape.constant(tensor({2}, {0.5, 0.5})), tensor({2}, {1, 0})).value().item() ==
        doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("edge weights") {
  ParameterStore<double> store;
  std::mt19937_64 rng(1);
  EdgeHead<double> head(store, "h", 2, rng);
  const ad::EdgeList edges{{0, 1}};
  // a tape snapshots parameter values, so each evaluation gets its own
  auto eval = [&](const Tensor<double>& fx, const ad::EdgeList& e) {
    Tape<double> tape;
    const auto fv = tape.constant(tensor({2, 2}, {1, 0, 0, 1}));  // column-major: row0 = [1,0], row1 = [0,1]
    return edge_weights(tape, fv, tape.constant(fx), head, e).value()[0];
  };
  const auto fx = tensor({2, 1}, {0, 0});

  zero(*head.ws);
  zero(*head.wg);
  CHECK(eval(fx, edges) == 0.25);

  head.ws->value.data().setOnes();
  const double e = eval(fx, edges);
  CHECK(e == doctest::Approx(0.5 / (1 + std::exp(-2.0))).epsilon(1e-9));
  CHECK(e == doctest::Approx(0.4404).epsilon(1e-4));

  // symmetric halves make the weight independent of edge direction
  std::normal_distribution<double> n(0, 1);
  for (int i = 0; i < 2; ++i) head.ws->value[i] = head.ws->value[i + 2] = n(rng);
  head.wg->value[0] = head.wg->value[1] = n(rng);
  const auto fx2 = tensor({2, 1}, {0.3, 0.8});
  const double fwd = eval(fx2, {{0, 1}});
  const double rev = eval(fx2, {{1, 0}});
  CHECK(fwd == doctest::Approx(rev).epsilon(1e-12));
  CHECK(fwd > 0.0);
  CHECK(fwd < 1.0);
}

TEST_CASE("residual graph convolution") {
  ParameterStore<double> store;
  std::mt19937_64 rng(2);
  GraphResidual<double> omega(store, "o", 2, rng);
  Tape<double> tape;
  const auto h = tape.constant(tensor({3, 2}, {0.5, -1.0, 2.0, 1.5, 0.25, -0.75}));
  const auto w = tape.constant(tensor({2, 1}, {0.6, 0.3}));
  const ad::EdgeList path{{0, 1}, {1, 2}};

  SUBCASE("zero weights give the identity") {
    zero(omega.w1());
    zero(omega.w2());
    const auto out = omega(tape, h, w, path);
    CHECK(out.value() == h.value());
  }
  SUBCASE("3-node path against dense matrices") {
    Eigen::Matrix3d a = Eigen::Matrix3d::Identity();
    a(0, 1) = a(1, 0) = 0.6;
    a(1, 2) = a(2, 1) = 0.3;
    const Eigen::Vector3d dinv = a.rowwise().sum().array().rsqrt();
    const Eigen::Matrix3d an = dinv.asDiagonal() * a * dinv.asDiagonal();
    const Eigen::MatrixXd H = h.value().to_matrix();
    const Eigen::MatrixXd W1 = omega.w1().value.to_matrix(), W2 = omega.w2().value.to_matrix();
    const Eigen::MatrixXd inner = (an * H * W1).cwiseMax(0.0);
    const Eigen::MatrixXd expect = H + (an * inner * W2).cwiseMax(0.0);
    CHECK((omega(tape, h, w, path).value().to_matrix() - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("no edges reduces to a per-node residual MLP") {
    const Eigen::MatrixXd H = h.value().to_matrix();
    const Eigen::MatrixXd W1 = omega.w1().value.to_matrix(), W2 = omega.w2().value.to_matrix();
    const Eigen::MatrixXd expect = H + ((H * W1).cwiseMax(0.0) * W2).cwiseMax(0.0);
    const auto got = omega(tape, h, tape.constant(Tensor<double>({0, 1})), {}).value().to_matrix();
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("top-k pooling") {
  Eigen::VectorXd s(4);
  s << 4, 3, 2, 1;
  CHECK(topk_indices(s, 0.5) == ad::IndexList{0, 1});
  s << 1, 5, 5, 2;
  CHECK(topk_indices(s, 0.25) == ad::IndexList{1});
  CHECK(topk_indices(s, 0.5) == ad::IndexList{1, 2});
  CHECK(topk_indices(s, 0.6) == ad::IndexList{1, 2, 3});
  CHECK(topk_indices(s, 1.0) == ad::IndexList{0, 1, 2, 3});
  CHECK_THROWS_AS(topk_indices(s, 0.2), ParameterError);

  CHECK(induced_subgraph({{0, 1}, {1, 2}, {2, 3}, {1, 3}}, {1, 3}) == ad::EdgeList{{0, 1}});

  ParameterStore<double> store;
  std::mt19937_64 rng(3);
  GraphPool<double> pool(store, "p", 3, rng);
  Tape<double> tape;
  Tensor<double> hv({6, 3});
  std::uniform_real_distribution<double> u(0.5, 1.0);
  for (Eigen::Index i = 0; i < hv.numel(); ++i) hv[i] = u(rng);
  const auto r = pool(tape, tape.constant(hv), 0.5);
  CHECK(r.selected.size() == 3);
  const auto back = gunpool(r.h, r.selected, 6).value().to_matrix();
  for (int i = 0; i < 6; ++i) {
    const bool sel = std::find(r.selected.begin(), r.selected.end(), i) != r.selected.end();
    CHECK((back.row(i).cwiseAbs().maxCoeff() > 0.0) == sel);
  }
  const auto all = pool(tape, tape.constant(hv), 1.0);
  CHECK(all.selected == ad::IndexList{0, 1, 2, 3, 4, 5});
}

TEST_CASE("encoder and decoder fusion degenerate cases") {
  ParameterStore<double> store;
  std::mt19937_64 rng(4);
  FusionLevel<double> lvl(store, "l0", 0, 3, 3, rng);
  const auto g = toy_level();
  Tape<double> tape;
  Tensor<double> ev({3, 6, 6, 6});
  std::uniform_real_distribution<double> u(-1, 1);
  for (Eigen::Index i = 0; i < ev.numel(); ++i) ev[i] = u(rng);
  const auto e_c = tape.constant(ev);

  CHECK((lvl.enc_out->value.data() == 0.0).all());
  CHECK((lvl.dec_out->value.data() == 0.0).all());
  for (auto* p : {lvl.enc_out, lvl.dec_out})
    for (Eigen::Index i = 0; i < p->value.numel(); ++i) p->value[i] = u(rng);
  zero(lvl.enc_omega.w1());
  zero(lvl.enc_omega.w2());
  zero(lvl.dec_omega.w1());
  zero(lvl.dec_omega.w2());

  SUBCASE("zero omega: E = g(f(E^c)) + E^c") {
    const auto enc = encoder_fuse(tape, lvl, g, e_c, Var<double>{});
    const Eigen::MatrixXd qf = Eigen::MatrixXd(g.mapping->forward_t), qr = Eigen::MatrixXd(g.mapping->backward);
    const Eigen::MatrixXd P = lvl.enc_in->value.to_matrix(), Pr = lvl.enc_out->value.to_matrix();
    const Eigen::MatrixXd expect = qr * (qf * ev.to_matrix() * P) * Pr + ev.to_matrix();
    CHECK(enc.e.value().shape() == ev.shape());
    CHECK(enc.e_g.value().shape() == Shape{4, 3});
    CHECK((enc.e.value().to_matrix() - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("constant input with identity projections doubles") {
    set_identity(*lvl.enc_in);
    set_identity(*lvl.enc_out);
    const auto enc = encoder_fuse(tape, lvl, g, tape.constant(Tensor<double>({3, 6, 6, 6}, 0.8)), Var<double>{});
    CHECK((enc.e.value().data() - 1.6).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("zero graph path on the decoder: D = D^c + E") {
    zero(*lvl.dec_out);
    const auto enc = encoder_fuse(tape, lvl, g, e_c, Var<double>{});
    Tensor<double> dv({3, 6, 6, 6});
    for (Eigen::Index i = 0; i < dv.numel(); ++i) dv[i] = u(rng);
    const auto dec = decoder_fuse(tape, lvl, g, tape.constant(dv), Var<double>{}, enc);
    CHECK(dec.d.value().shape() == dv.shape());
    CHECK(dec.d_g.value().shape() == Shape{4, 3});
    CHECK((dec.d.value().data() - (dv.data() + enc.e.value().data())).abs().maxCoeff() == 0.0);
  }
}

TEST_CASE("U-Net shapes and outputs") {
  NetworkConfig cfg;
  cfg.input = {32, 32, 32};
  ParameterStore<float> store;
  std::mt19937_64 rng(5);
  Unet<float> net(cfg, store, "u", rng);
  Tape<float> tape;
  auto out = net.forward(tape, tape.constant(Tensor<float>({1, 32, 32, 32})));
  REQUIRE(out.encoder.size() == 3);
  CHECK(out.encoder[2].shape() == Shape{32, 8, 8, 8});
  CHECK(out.decoder[0].shape() == Shape{8, 32, 32, 32});
  CHECK((out.vessel.value().data() == 0.5f).all());

  Tape<float> t2;
  std::mt19937_64 r2(6);
  auto x = testing::random_volume(cfg.input, r2);
  auto o2 = net.forward(t2, t2.constant(volume_tensor(x)));
  const auto probs = o2.probs.value().mat();
  CHECK((probs.rowwise().sum().array() - 1.0f).abs().maxCoeff() < 1e-6f);
  CHECK((o2.vessel.value().data() > 0.0f).all());
  CHECK((o2.vessel.value().data() < 1.0f).all());
}

TEST_CASE("cascade gradient flow") {
  const auto cfg = small_net();
  const auto s = phantom_sample(cfg, 1, true);
  ParameterStore<float> store;
  std::mt19937_64 rng(7);
  CascadeModel<float> net(cfg, store, rng, true);

  auto unet1_grad = [&](bool freeze) {
    store.zero_grad();
    Tape<float> tape;
    auto out = net.forward(tape, tape.constant(volume_tensor(s.volume)), &*s.graph, freeze);
    tape.backward(segmentation_loss(out.final, mask_tensor(s.mask)));
    double n = 0.0;
    for (const auto& p : store)
      if (p->name.rfind("unet1.", 0) == 0) n += p->grad.data().cast<double>().square().sum();
    return n;
  };
  CHECK(unet1_grad(false) > 0.0);
  CHECK(unet1_grad(true) == 0.0);

  Tape<float> tape;
  CHECK_THROWS_AS(net.forward(tape, tape.constant(volume_tensor(s.volume)), nullptr), StageError);
  auto out = net.forward(tape, tape.constant(volume_tensor(s.volume)), &*s.graph);
  CHECK(out.graphs.size() == 2);
  CHECK(out.graphs[1].node_ids.size() == (out.graphs[0].node_ids.size() + 1) / 2);
}

TEST_CASE("training: overfit, determinism and frozen first stage") {
  const auto cfg = small_net();
  const std::vector<Sample> one{phantom_sample(cfg, 2, true)};
  TrainSchedule sch;
  sch.epochs = 20;
  sch.lr = 1e-3;
  sch.seed = 3;

  auto run = [&](const TrainSchedule& s, ParameterStore<float>& store) {
    std::mt19937_64 rng(11);
    CascadeModel<float> net(cfg, store, rng, true);
    return train_cascade(net, store, one, s);
  };
  ParameterStore<float> a, b;
  const auto ra = run(sch, a);
  const auto rb = run(sch, b);
  REQUIRE(ra.step_losses.size() == 20);
  CHECK(ra.step_losses == rb.step_losses);
  for (std::size_t i = 1; i < ra.step_losses.size(); ++i) CHECK(ra.step_losses[i] < ra.step_losses[i - 1]);

  auto frozen = sch;
  frozen.epochs = 2;
  frozen.lambda = 0.0;
  frozen.freeze_first = true;
  ParameterStore<float> c;
  std::mt19937_64 rng(11);
  CascadeModel<float> net(cfg, c, rng, true);
  train_cascade(net, c, one, frozen);
  for (const auto& p : c)
    if (p->name.rfind("unet1.", 0) == 0) CHECK((p->grad.data() == 0.0f).all());
}
