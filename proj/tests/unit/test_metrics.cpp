#include <doctest.h>

#include "support.hpp"
#include "vgseg/metrics.hpp"
#include "vgseg/phantom.hpp"

using namespace vgseg;

namespace {

SegMask plane(const Dims& d, int z) {
  SegMask m(d, {});
  for (int y = 0; y < d.h; ++y)
    for (int x = 0; x < d.w; ++x) m(z, y, x) = 1;
  return m;
}

SegMask straight_tube(const Dims& d, double radius, int x0 = 0, int x1 = -1) {
  if (x1 < 0) x1 = d.w - 1;
  SegMask m(d, {});
  const double cz = (d.d - 1) / 2.0, cy = (d.h - 1) / 2.0;
  for (int z = 0; z < d.d; ++z)
    for (int y = 0; y < d.h; ++y)
      for (int x = x0; x <= x1; ++x)
        if ((z - cz) * (z - cz) + (y - cy) * (y - cy) <= radius * radius) m(z, y, x) = 1;
  return m;
}

// Brute-force ASSD over explicit surface voxel lists.
double brute_assd(const SegMask& s, const SegMask& g, const Spacing& sp) {
  auto pts = [&](const SegMask& m) {
    std::vector<Eigen::Vector3d> p;
    const auto surf = surface_voxels(m);
    for (std::size_t i = 0; i < surf.size(); ++i)
      if (surf[i]) {
        const auto [z, y, x] = m.dims().coords(i);
        p.emplace_back(z * sp.z, y * sp.y, x * sp.x);
      }
    return p;
  };
  const auto a = pts(s), b = pts(g);
  double total = 0.0;
  for (const auto& from : {std::pair{&a, &b}, std::pair{&b, &a}}) {
    for (const auto& p : *from.first) {
      double best = 1e300;
      for (const auto& q : *from.second) best = std::min(best, (p - q).norm());
      total += best;
    }
  }
  return total / double(a.size() + b.size());
}

std::array<std::uint8_t, 27> cube_of(std::initializer_list<int> on) {
  std::array<std::uint8_t, 27> c{};
  for (int i : on) c[std::size_t(i)] = 1;
  return c;
}

}  // namespace

TEST_CASE("dice") {
  const Dims d{1, 1, 4};
  SegMask s(d, {}), g(d, {});
  CHECK(dice_metric(s, g) == 1.0);
  s[0] = s[1] = s[2] = 1;
  g[1] = g[2] = g[3] = 1;
  CHECK(dice_metric(s, g) == doctest::Approx(2.0 / 3.0));
  CHECK(dice_metric(s, s) == 1.0);
  SegMask a(d, {}), b(d, {});
  a[0] = 1;
  b[3] = 1;
  CHECK(dice_metric(a, b) == 0.0);
}

TEST_CASE("surface voxels") {
  SegMask cube({5, 5, 5}, {});
  for (int z = 1; z < 4; ++z)
    for (int y = 1; y < 4; ++y)
      for (int x = 1; x < 4; ++x) cube(z, y, x) = 1;
  const auto s = surface_voxels(cube);
  CHECK(count_nonzero(s) == 26);
  CHECK(s(2, 2, 2) == 0);
  CHECK(count_nonzero(surface_voxels(SegMask({2, 2, 2}, {}, 1))) == 8);
}

TEST_CASE("ASSD") {
  const Dims d{7, 5, 5};
  const auto a = plane(d, 1), b = plane(d, 4);
  CHECK(assd(a, a, {}) == 0.0);
  CHECK(assd(a, b, {}) == doctest::Approx(3.0));
  CHECK(assd(a, b, Spacing{2, 2, 2}) == doctest::Approx(6.0));
  CHECK_THROWS_AS(assd(a, SegMask(d, {}), {}), MetricError);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const auto s = testing::random_mask({6, 5, 4}, rng, 0.3);
    const auto g = testing::random_mask({6, 5, 4}, rng, 0.3);
    const Spacing sp{1.5, 1.0, 0.5};
    CHECK(assd(s, g, sp) == doctest::Approx(brute_assd(s, g, sp)).epsilon(1e-9));
  }
}

TEST_CASE("simple points") {
  // center index 13
  CHECK(is_simple_point(cube_of({13, 12})));          // end of a line
  CHECK_FALSE(is_simple_point(cube_of({13, 12, 14})));  // middle of a line
  CHECK_FALSE(is_simple_point(cube_of({13})));          // isolated point
  std::array<std::uint8_t, 27> full{};
  full.fill(1);
  CHECK_FALSE(is_simple_point(full));  // interior point would open a cavity
  auto half = cube_of({});
  for (int i = 0; i < 27; ++i)
    if (i / 9 <= 1) half[std::size_t(i)] = 1;  // z <= 0 slab incl. center
  CHECK(is_simple_point(half));
}

TEST_CASE("skeletonization") {
  SUBCASE("a one-voxel line is unchanged") {
    SegMask line({5, 5, 9}, {});
    for (int x = 1; x < 8; ++x) line(2, 2 + (x % 2), x) = 1;
    CHECK(skeletonize3d(line) == line);
  }
  SUBCASE("empty stays empty") {
    const SegMask e({4, 4, 4}, {});
    CHECK(skeletonize3d(e) == e);
  }
  SUBCASE("solid tube thins to a connected curve") {
    const Dims d{11, 11, 20};
    const auto tube = straight_tube(d, 3.0, 2, 17);
    const auto sk = skeletonize3d(tube);
    CHECK(count_components26(sk) == count_components26(tube));
    CHECK(count_nonzero(sk) > 0);
    // width at most one: every skeleton voxel has at most two 26-neighbours
    // except at its ends, and no x column holds more than one voxel
    int xmin = d.w, xmax = -1;
    for (int x = 0; x < d.w; ++x) {
      int col = 0;
      for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y) col += sk(z, y, x);
      CHECK(col <= 1);
      if (col) xmin = std::min(xmin, x), xmax = std::max(xmax, x);
    }
    // thinning eats roughly one radius off each flat end cap
    CHECK(xmax - xmin >= 15 - 2 * 3);
    CHECK(skeletonize3d(sk) == sk);
  }
}

TEST_CASE("skeleton recall and precision") {
  const Dims d{9, 9, 24};
  const auto g = straight_tube(d, 2.0);
  CHECK(skeleton_recall(g, g) == 1.0);
  CHECK(skeleton_precision(g, g) == 1.0);

  const auto left = straight_tube(d, 2.0, 0, 11);
  const auto sk = skeletonize3d(g);
  const double len = double(count_nonzero(sk));
  CHECK(std::abs(skeleton_recall(left, g) - 0.5) <= 1.0 / len + 1e-12);

  auto bigger = g;
  for (int z = 0; z < 3; ++z)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) bigger(z, y, x) = 1;
  CHECK(skeleton_recall(bigger, g) == 1.0);
  CHECK(skeleton_precision(bigger, g) < 1.0);
  CHECK_THROWS_AS(skeleton_recall(g, SegMask(d, {})), MetricError);
  CHECK_THROWS_AS(skeleton_precision(SegMask(d, {}), g), MetricError);
}

TEST_CASE("fixed points on phantoms") {
  for (std::uint64_t seed : {1, 2}) {
    PhantomConfig pc;
    pc.dims = {24, 24, 24};
    pc.seed = seed;
    const auto m = generate_phantom(pc).mask;
    const auto r = evaluate_masks(m, m);
    CHECK(r.dice == 1.0);
    CHECK(r.assd_mm.value() == 0.0);
    CHECK(r.sr.value() == 1.0);
    CHECK(r.sp.value() == 1.0);
    const auto sk = skeletonize3d(m);
    CHECK(count_components26(sk) == count_components26(m));
    CHECK(skeletonize3d(sk) == sk);
  }
}

TEST_CASE("graph stats and report json") {
  VesselGraph g;
  g.nodes.resize(4);
  CHECK(graph_stats(g).mean_degree == 0.0);
  g.edges = {{0, 1, 0.1f}, {1, 2, 0.1f}};
  const auto s = graph_stats(g);
  CHECK(s.nodes == 4);
  CHECK(s.edges == 2);
  CHECK(s.mean_degree == 1.0);

  MetricsReport r;
  r.dice = 0.5;
  r.sr = 1.0;
  const auto j = r.to_json();
  CHECK(j.find("\"dice\":0.5") != std::string::npos);
  CHECK(j.find("\"assd_mm\":null") != std::string::npos);
  CHECK(j.find('\n') == std::string::npos);
}
