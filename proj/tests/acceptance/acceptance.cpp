// Acceptance suite. One PASS/FAIL line per criterion; run with criterion
// numbers as arguments to select a subset (default: all).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vgseg/autodiff/checkpoint.hpp"
#include "vgseg/geodesic.hpp"
#include "vgseg/gradsuite.hpp"
#include "vgseg/graph.hpp"
#include "vgseg/mapping.hpp"
#include "vgseg/metrics.hpp"
#include "vgseg/model/cascade.hpp"
#include "vgseg/model/losses.hpp"
#include "vgseg/model/trainer.hpp"
#include "vgseg/morphology.hpp"
#include "vgseg/phantom.hpp"
#include "vgseg/pipeline.hpp"
#include "vgseg/supervoxel.hpp"
#include "vgseg/volume_io.hpp"

using namespace vgseg;
namespace fs = std::filesystem;

namespace {

// tolerances and budgets
constexpr double kMappingTol = 1e-6;
constexpr double kMappingBudget = 10.0;  // seconds
constexpr double kGeodesicTol = 1e-6;
constexpr double kDoublingTol = 1e-9;
constexpr double kGeodesicBudget = 30.0;
constexpr double kGradBudget = 300.0;
constexpr double kSupervoxelBudget = 300.0;
constexpr int kDensityVolumes = 20;
constexpr int kDensityRequired = 18;
constexpr double kDensityBudget = 600.0;
constexpr double kHalfTubeTol = 0.1;
constexpr double kLossTol = 1e-6;
constexpr double kPerfectDiceTol = 1e-5;
constexpr int kAblationSeeds = 3;
constexpr double kAblationBudget = 7200.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Volume3D random_volume(const Dims& d, std::mt19937_64& rng) {
  Volume3D v(d, {});
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = u(rng);
  return v;
}

// Noisy preliminary probability built from a ground-truth mask.
ProbabilityMap soft_truth(const SegMask& mask, std::mt19937_64& rng, double noise) {
  ProbabilityMap p(mask.dims(), mask.spacing());
  std::normal_distribution<double> n(0.0, noise);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = float(std::clamp((mask[i] ? 0.85 : 0.1) + n(rng), 0.0, 1.0));
  }
  return p;
}

// ---------------------------------------------------------------------------

Outcome mapping_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> side(1, 6), nodes(1, 10);
  double worst_sum = 0.0, worst_const = 0.0;
  int empty = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Dims d{side(rng), side(rng), side(rng)};
    const int n = nodes(rng);
    std::vector<Eigen::Vector3d> c;
    std::uniform_real_distribution<double> uz(0, d.d - 1), uy(0, d.h - 1), ux(0, d.w - 1);
    for (int j = 0; j < n; ++j) c.emplace_back(uz(rng), uy(rng), ux(rng));
    const int k = std::uniform_int_distribution<int>(1, std::min(3, n))(rng);
    const auto m = make_mapping<double>(build_assignment(d, c, MappingParams{k}));
    const Eigen::MatrixXd qf = Eigen::MatrixXd(m.forward_t).transpose();  // cells x nodes
    const Eigen::MatrixXd qr = Eigen::MatrixXd(m.backward);
    for (int j = 0; j < n; ++j) {
      const double s = qf.col(j).sum();
      if (m.empty_nodes[std::size_t(j)]) {
        ++empty;
        worst_sum = std::max(worst_sum, std::abs(s));
      } else {
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      }
    }
    for (Eigen::Index i = 0; i < qr.rows(); ++i) worst_sum = std::max(worst_sum, std::abs(qr.row(i).sum() - 1.0));

    const double v = std::uniform_real_distribution<double>(-3, 3)(rng);
    const auto f = forward_map(MatrixX<double>(MatrixX<double>::Constant(Eigen::Index(d.size()), 2, v)), m);
    for (int j = 0; j < n; ++j) {
      if (!m.empty_nodes[std::size_t(j)]) worst_const = std::max(worst_const, (f.row(j).array() - v).abs().maxCoeff());
    }
    const auto b = backward_map(MatrixX<double>(MatrixX<double>::Constant(n, 2, v)), m);
    worst_const = std::max(worst_const, (b.array() - v).abs().maxCoeff());
  }

  // one node at every cell centre with k = 1
  double worst_identity = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Dims d{side(rng), side(rng), side(rng)};
    std::vector<Eigen::Vector3d> c;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto [z, y, x] = d.coords(i);
      c.emplace_back(z, y, x);
    }
    const auto m = make_mapping<double>(build_assignment(d, c, MappingParams{1}));
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(Eigen::Index(d.size()), Eigen::Index(d.size()));
    worst_identity = std::max(worst_identity, (Eigen::MatrixXd(m.forward_t) - eye).cwiseAbs().maxCoeff());
    worst_identity = std::max(worst_identity, (Eigen::MatrixXd(m.backward) - eye).cwiseAbs().maxCoeff());
  }
  const double t = seconds_since(t0);
  const bool pass = worst_sum <= kMappingTol && worst_const <= kMappingTol && worst_identity == 0.0 && t < kMappingBudget;
  return {pass, "100 instances, " + std::to_string(empty) + " empty nodes; max sum error " + fmt("%.2e", worst_sum) +
                    ", constant error " + fmt("%.2e", worst_const) + ", identity error " +
                    fmt("%.1e", worst_identity) + ", " + fmt("%.2f s", t)};
}

// ---------------------------------------------------------------------------

// Floyd-Warshall on the 26-connected grid with the step cost written out
// directly: w(q) |S(q) - S(p)| / |q - p|, S = X + X Y0.
std::vector<double> all_pairs_oracle(const Volume3D& v, const SegMask& y0, const ProbabilityMap& a0, GeodesicMode mode) {
  const Dims& d = v.dims();
  const std::size_t n = d.size();
  std::vector<double> dist(n * n, std::numeric_limits<double>::infinity());
  auto s = [&](std::size_t i) { return double(v[i]) * (1.0 + double(y0[i])); };
  for (std::size_t i = 0; i < n; ++i) {
    dist[i * n + i] = 0.0;
    const auto [z, y, x] = d.coords(i);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if ((dz | dy | dx) == 0 || !d.contains(z + dz, y + dy, x + dx)) continue;
          const auto j = d.index(z + dz, y + dy, x + dx);
          const double w = mode == GeodesicMode::NodeDensity ? double(a0[j]) : 1.0 - double(a0[j]);
          dist[i * n + j] = w * std::abs(s(j) - s(i)) / std::sqrt(double(dz * dz + dy * dy + dx * dx));
        }
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) dist[i * n + j] = std::min(dist[i * n + j], dist[i * n + k] + dist[k * n + j]);
  return dist;
}

Outcome geodesic_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  const Dims d{4, 4, 4};
  double worst = 0.0, worst_double = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto v = random_volume(d, rng);
    SegMask y0(d, {});
    ProbabilityMap a0(d, {});
    std::bernoulli_distribution coin(0.4);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (std::size_t i = 0; i < d.size(); ++i) {
      y0[i] = coin(rng);
      a0[i] = u(rng);
    }
    const auto mode = trial % 2 ? GeodesicMode::EdgeConnect : GeodesicMode::NodeDensity;
    const auto oracle = all_pairs_oracle(v, y0, a0, mode);

    const int n_seeds = std::uniform_int_distribution<int>(1, 3)(rng);
    std::vector<Voxel> seeds;
    std::vector<std::size_t> seed_idx;
    for (int s = 0; s < n_seeds; ++s) {
      const auto i = std::uniform_int_distribution<std::size_t>(0, d.size() - 1)(rng);
      const auto [z, y, x] = d.coords(i);
      seeds.push_back({z, y, x});
      seed_idx.push_back(i);
    }
    const auto f = geodesic_from_seeds(GeodesicCost(v, y0, a0, mode), seeds);
    for (std::size_t j = 0; j < d.size(); ++j) {
      double want = std::numeric_limits<double>::infinity();
      for (auto s : seed_idx) want = std::min(want, oracle[s * d.size() + j]);
      worst = std::max(worst, std::abs(f.dist[j] - want));
    }

    // a full Y0 doubles S and with it every distance
    const auto base = geodesic_from_seeds(GeodesicCost(v, SegMask(d, {}, 0), a0, mode), seeds);
    const auto twice = geodesic_from_seeds(GeodesicCost(v, SegMask(d, {}, 1), a0, mode), seeds);
    for (std::size_t j = 0; j < d.size(); ++j) {
      worst_double = std::max(worst_double, std::abs(twice.dist[j] - 2.0 * base.dist[j]));
    }
  }
  const double t = seconds_since(t0);
  return {worst <= kGeodesicTol && worst_double <= kDoublingTol && t < kGeodesicBudget,
          "100 volumes; max |dijkstra - oracle| " + fmt("%.2e", worst) + ", doubling error " +
              fmt("%.2e", worst_double) + ", " + fmt("%.2f s", t)};
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = run_gradient_suite(3);
  int failed = 0;
  double worst = 0.0;
  std::string worst_name;
  std::size_t retried = 0;
  for (const auto& c : cases) {
    retried += c.retried;
    if (!c.passed()) {
      ++failed;
      std::cerr << "  gradient case " << c.name << " seed " << c.seed << " failed: " << c.worst << "\n";
    }
    if (c.max_rel_error >= worst) {
      worst = c.max_rel_error;
      worst_name = c.name;
    }
  }
  const double t = seconds_since(t0);
  return {failed == 0 && !cases.empty() && t < kGradBudget,
          std::to_string(cases.size()) + " checks, " + std::to_string(failed) + " failed, " + std::to_string(retried) + " entries re-differenced; worst " + worst_name + " " +
              fmt("%.2e", worst) + " (limit " + fmt("%.0e", kGradTolerance) + "), " + fmt("%.1f s", t)};
}

// ---------------------------------------------------------------------------

Outcome supervoxel_invariants() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(404);
  int ok = 0, classic_equal = 0;
  std::string first_problem;
  for (int trial = 0; trial < 20; ++trial) {
    PhantomConfig pc;
    pc.dims = {32, 32, 32};
    pc.seed = rng();
    pc.tubes_max = 3;
    pc.orientation = trial % 2 ? TubeOrientation::Axial : TubeOrientation::Random;
    const auto ph = generate_phantom(pc);
    const auto pre = preseg_maps(soft_truth(ph.mask, rng, 0.05), PresegConfig{});
    SlicParams p;
    p.n_segments = std::uniform_int_distribution<int>(20, 80)(rng);
    const auto map = run_slic(ph.volume, pre.a0, pre.y0, p);
    const auto r = check_partition(map);
    const bool min_ok = double(r.min_size) >= p.min_size_factor * double(pc.dims.size()) / map.count;
    if (r.complete && r.nonempty && r.connected && map.count <= p.n_segments && min_ok) {
      ++ok;
    } else if (first_problem.empty()) {
      first_problem = "; trial " + std::to_string(trial) + " violated an invariant";
    }
    const auto geo_off = run_slic(ph.volume, ProbabilityMap(pc.dims, {}, 0.0f), pre.y0, p);
    const auto classic = run_classic_slic(ph.volume, p);
    if (geo_off.count == classic.count && geo_off.labels == classic.labels) ++classic_equal;
  }
  const double t = seconds_since(t0);
  return {ok == 20 && classic_equal == 20 && t < kSupervoxelBudget,
          "invariants on " + std::to_string(ok) + "/20, geodesic-off equals classic on " +
              std::to_string(classic_equal) + "/20, " + fmt("%.1f s", t) + first_problem};
}

// ---------------------------------------------------------------------------

// Supervoxels intersecting a region, per voxel of that region.
double label_density(const SupervoxelMap& map, const SegMask& region, bool inside) {
  std::set<std::uint32_t> labels;
  std::size_t voxels = 0;
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (bool(region[i]) != inside) continue;
    labels.insert(map.labels[i]);
    ++voxels;
  }
  return voxels ? double(labels.size()) / double(voxels) : 0.0;
}

Outcome density_bias() {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg;
  const auto slic = cfg.resolved_slic();
  const auto build = cfg.resolved_graph();
  int node_ok = 0, edge_ok = 0;
  double ratio_sum = 0.0, classic_ratio_sum = 0.0, edge_lift = 0.0;
  for (int i = 0; i < kDensityVolumes; ++i) {
    auto pc = cfg.phantom;
    pc.seed = volume_seed(505, i);
    const auto ph = generate_phantom(pc);
    ProbabilityMap truth(pc.dims, ph.mask.spacing());
    for (std::size_t v = 0; v < truth.size(); ++v) truth[v] = ph.mask[v] ? 1.0f : 0.0f;
    const auto pre = preseg_maps(truth, cfg.preseg);
    const SegMask& region = pre.y0;  // dilated vessel region

    const auto map = run_slic(ph.volume, pre.a0, pre.y0, slic);
    const double in = label_density(map, region, true), out = label_density(map, region, false);
    if (in > out) ++node_ok;
    ratio_sum += in / out;
    const auto classic = run_classic_slic(ph.volume, slic);
    classic_ratio_sum += label_density(classic, region, true) / label_density(classic, region, false);

    const auto g = build_graph(ph.volume, pre.y0, pre.a0, slic, build);
    std::vector<int> inside;
    for (const auto& n : g.nodes) {
      const int z = int(std::lround(n.centroid[0])), y = int(std::lround(n.centroid[1])),
                x = int(std::lround(n.centroid[2]));
      inside.push_back(region(z, y, x));
    }
    const double n_in = std::count(inside.begin(), inside.end(), 1);
    const double n_all = double(g.nodes.size());
    const double pair_frac = n_all > 1 ? n_in * (n_in - 1) / (n_all * (n_all - 1)) : 0.0;
    double both = 0.0;
    for (const auto& e : g.edges) both += inside[std::size_t(e.i)] && inside[std::size_t(e.j)];
    const double edge_frac = g.edges.empty() ? 0.0 : both / double(g.edges.size());
    if (edge_frac > pair_frac) ++edge_ok;
    if (pair_frac > 0) edge_lift += edge_frac / pair_frac;
    std::cerr << "  density " << volume_id(i) << ": nodes in/out " << in << " / " << out << ", edges both-in "
              << edge_frac << " vs pairs " << pair_frac << "\n";
  }
  const double t = seconds_since(t0);
  const int n = kDensityVolumes;
  return {node_ok >= kDensityRequired && edge_ok >= kDensityRequired && t < kDensityBudget,
          "node density higher inside on " + std::to_string(node_ok) + "/" + std::to_string(n) +
              " (mean ratio " + fmt("%.2f", ratio_sum / n) + ", classic SLIC " + fmt("%.2f", classic_ratio_sum / n) +
              "), within-vessel edge fraction higher on " + std::to_string(edge_ok) + "/" + std::to_string(n) +
              " (mean lift " + fmt("%.2f", edge_lift / n) + "), " + fmt("%.0f s", t)};
}

// ---------------------------------------------------------------------------

SegMask x_tube(const Dims& d, double radius, int x0, int x1) {
  SegMask m(d, {});
  const double cz = (d.d - 1) / 2.0, cy = (d.h - 1) / 2.0;
  for (int z = 0; z < d.d; ++z)
    for (int y = 0; y < d.h; ++y)
      for (int x = x0; x < x1; ++x)
        if ((z - cz) * (z - cz) + (y - cy) * (y - cy) <= radius * radius) m(z, y, x) = 1;
  return m;
}

Outcome metric_fixed_points() {
  int fixed = 0, skel_ok = 0;
  for (int i = 0; i < 20; ++i) {
    PhantomConfig pc;
    pc.dims = {32, 32, 32};
    pc.seed = volume_seed(606, i);
    const auto ph = generate_phantom(pc);
    const auto r = evaluate_masks(ph.mask, ph.mask);
    if (r.dice == 1.0 && r.assd_mm == 0.0 && r.sr == 1.0 && r.sp == 1.0) ++fixed;
    const auto sk = skeletonize3d(ph.mask);
    if (skeletonize3d(sk) == sk && count_components26(sk) == count_components26(ph.mask)) ++skel_ok;
  }
  double worst_half = 0.0;
  int tubes = 0;
  for (double radius : {1.5, 2.5, 3.5}) {
    for (int len : {20, 32, 44}) {
      const Dims d{11, 11, len + 4};
      const auto g = x_tube(d, radius, 2, len + 2);
      const auto half = x_tube(d, radius, 2, 2 + len / 2);
      worst_half = std::max(worst_half, std::abs(skeleton_recall(half, g) - 0.5));
      ++tubes;
    }
  }
  return {fixed == 20 && skel_ok == 20 && worst_half <= kHalfTubeTol,
          "S = G fixed points on " + std::to_string(fixed) + "/20, skeleton idempotent and topology-preserving on " +
              std::to_string(skel_ok) + "/20, half-tube |SR - 0.5| <= " + fmt("%.3f", worst_half) + " over " +
              std::to_string(tubes) + " tubes"};
}

// ---------------------------------------------------------------------------

Outcome scalar_oracles() {
  using ad::Tensor;
  ad::Tape<double> tape;
  const double wbce =
      model::weighted_bce(tape.constant(Tensor<double>({1}, 0.5)), Tensor<double>({1}, 1.0), 5.0).value().item();
  const double wbce_err = std::abs(wbce - 5.0 * std::numbers::ln2);

  Tensor<double> y({8});
  for (int i = 0; i < 8; ++i) y[i] = i % 3 == 0 ? 1.0 : 0.0;
  const double dice = model::dice_loss(tape.constant(y), y).value().item();

  ad::ParameterStore<double> store;
  std::mt19937_64 rng(707);
  model::EdgeHead<double> head(store, "head", 3, rng);
  head.ws->value.data().setZero();
  head.wg->value.data().setZero();
  Tensor<double> fv({4, 3}), fx({4, 1});
  std::normal_distribution<double> n(0, 1);
  for (Eigen::Index i = 0; i < fv.numel(); ++i) fv[i] = n(rng);
  for (Eigen::Index i = 0; i < fx.numel(); ++i) fx[i] = n(rng);
  const auto ew = model::edge_weights(tape, tape.constant(fv), tape.constant(fx), head, {{0, 1}, {1, 2}, {0, 3}});
  const bool quarter = (ew.value().data() == 0.25).all();
  return {wbce_err <= kLossTol && dice <= kPerfectDiceTol && quarter,
          "wbce(1, 0.5, 5) = " + fmt("%.9f", wbce) + " (5 ln 2 = " + fmt("%.9f", 5.0 * std::numbers::ln2) +
              "), perfect dice loss " + fmt("%.2e", dice) + ", zero-head e_w " + (quarter ? "0.25" : "not 0.25")};
}

// ---------------------------------------------------------------------------

Outcome ablation_experiment() {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg;  // 50 phantoms at 48^3, 35 train / 15 test
  cfg.seed = 2024;
  std::cerr << "  preparing " << cfg.dataset.count << " volumes\n";
  const auto data = prepare_dataset(cfg, &std::cerr);
  std::cerr << "  dataset ready after " << seconds_since(t0) << " s\n";
  int wins = 0;
  std::ostringstream detail;
  for (int s = 0; s < kAblationSeeds; ++s) {
    const std::uint64_t seed = 1000 + std::uint64_t(s);
    const auto full = run_cascade_experiment(cfg, data, true, seed, &std::cerr);
    const auto ablated = run_cascade_experiment(cfg, data, false, seed, &std::cerr);
    const bool win = full.mean_dice > ablated.mean_dice && full.mean_sr > ablated.mean_sr;
    wins += win;
    detail << (s ? "; " : "") << "seed " << seed << " dice " << fmt("%.4f", full.mean_dice) << " vs "
           << fmt("%.4f", ablated.mean_dice) << ", sr " << fmt("%.4f", full.mean_sr) << " vs "
           << fmt("%.4f", ablated.mean_sr);
    std::cerr << "  " << detail.str() << " (" << seconds_since(t0) << " s)\n";
  }
  const double t = seconds_since(t0);
  return {wins == kAblationSeeds && t <= kAblationBudget,
          "full beats ablated on " + std::to_string(wins) + "/" + std::to_string(kAblationSeeds) + " seeds (" +
              detail.str() + "), " + fmt("%.0f s", t)};
}

// ---------------------------------------------------------------------------

model::NetworkConfig small_network() {
  model::NetworkConfig net;
  net.levels = 2;
  net.base_channels = 4;
  net.node_dim = 8;
  net.input = {16, 16, 16};
  return net;
}

Outcome determinism_and_persistence() {
  const auto tmp = fs::temp_directory_path() / ("vgseg_acceptance_" + std::to_string(std::random_device{}()));
  fs::create_directories(tmp);
  const auto net = small_network();

  PhantomConfig pc;
  pc.dims = net.input;
  pc.seed = 909;
  pc.radius_min = 1.0;
  pc.radius_max = 2.0;
  const auto ph = generate_phantom(pc);
  std::mt19937_64 rng(909);
  const auto pre = preseg_maps(soft_truth(ph.mask, rng, 0.05), PresegConfig{});
  SlicParams slic;
  slic.n_segments = 16;
  GraphBuildParams build;
  build.candidate_radius = default_candidate_radius(pc.dims, slic.n_segments);
  const auto graph = build_graph(ph.volume, pre.y0, pre.a0, slic, build);
  model::Sample sample{"s", ph.volume, ph.mask, model::make_graph_input<float>(graph, ph.volume, pre.y0, pre.a0, net.k)};
  const std::vector<model::Sample> train{sample};

  model::TrainSchedule sch;
  sch.epochs = 4;
  sch.seed = 5;
  auto train_once = [&](ad::ParameterStore<float>& store) {
    std::mt19937_64 init(77);
    auto m = std::make_unique<model::CascadeModel<float>>(net, store, init, true);
    auto r = model::train_cascade(*m, store, train, sch);
    return std::make_pair(std::move(m), r.step_losses);
  };
  ad::ParameterStore<float> a, b;
  auto [model_a, losses_a] = train_once(a);
  auto [model_b, losses_b] = train_once(b);
  const bool trajectories = !losses_a.empty() && losses_a == losses_b;

  ad::save_checkpoint(tmp / "model.ckpt", a);
  ad::ParameterStore<float> c;
  std::mt19937_64 other(12345);
  model::CascadeModel<float> model_c(net, c, other, true);
  ad::load_checkpoint(tmp / "model.ckpt", c);
  const auto pa = model::predict_cascade(*model_a, sample);
  const auto pc_out = model::predict_cascade(model_c, sample);
  const bool checkpoint = pa == pc_out;

  std::mt19937_64 vr(910);
  const Dims d{7, 5, 9};
  Volume3D vol(d, Spacing{0.7, 0.8, 1.3});
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (std::size_t i = 0; i < vol.size(); ++i) vol[i] = u(vr);
  SegMask mask(d, vol.spacing());
  LabelVolume labels(d, vol.spacing());
  for (std::size_t i = 0; i < vol.size(); ++i) {
    mask[i] = vr() % 2;
    labels[i] = std::uint32_t(vr() % 100000);
  }
  save_volume(vol, tmp / "v.f32");
  save_volume(mask, tmp / "m.u8");
  save_volume(labels, tmp / "l.u32");
  save_volume(pre.a0, tmp / "a.f32");
  const bool volumes = load_volume(tmp / "v.f32") == vol && load_mask(tmp / "m.u8") == mask &&
                       load_labels(tmp / "l.u32") == labels && load_probability(tmp / "a.f32") == pre.a0;
  serialize_graph(graph, tmp / "g.vgraph");
  const bool graphs = deserialize_graph(tmp / "g.vgraph") == graph;

  std::error_code ec;
  fs::remove_all(tmp, ec);
  auto yn = [](bool b) { return b ? "ok" : "MISMATCH"; };
  return {trajectories && checkpoint && volumes && graphs,
          std::string("loss trajectories (") + std::to_string(losses_a.size()) + " steps) " + yn(trajectories) +
              ", checkpoint forward " + yn(checkpoint) + ", volume files " + yn(volumes) + ", graph file (" +
              std::to_string(graph.nodes.size()) + " nodes, " + std::to_string(graph.edges.size()) + " edges) " +
              yn(graphs)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "mapping correctness", mapping_correctness},
      {2, "geodesic oracle", geodesic_oracle},
      {3, "gradient suite", gradient_suite},
      {4, "supervoxel invariants", supervoxel_invariants},
      {5, "node and edge density bias", density_bias},
      {6, "metric fixed points", metric_fixed_points},
      {7, "loss and scalar oracles", scalar_oracles},
      {8, "directional ablation", ablation_experiment},
      {9, "determinism and persistence", determinism_and_persistence},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail
              << std::endl;
  }
  return failures ? 1 : 0;
}
