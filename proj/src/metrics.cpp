#include "vgseg/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include <json.hpp>

namespace vgseg {

double dice_metric(const SegMask& s, const SegMask& g) {
  require_same_grid(s, g, "dice_metric");
  std::size_t inter = 0, ns = 0, ng = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    ns += s[i];
    ng += g[i];
    inter += s[i] & g[i];
  }
  if (ns + ng == 0) return 1.0;
  return 2.0 * double(inter) / double(ns + ng);
}

SegMask surface_voxels(const SegMask& m) {
  const Dims d = m.dims();
  SegMask out(d, m.spacing());
  static constexpr int off[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
  for (int z = 0; z < d.d; ++z) {
    for (int y = 0; y < d.h; ++y) {
      for (int x = 0; x < d.w; ++x) {
        if (!m(z, y, x)) continue;
        for (const auto& o : off) {
          const int zz = z + o[0], yy = y + o[1], xx = x + o[2];
          if (!d.contains(zz, yy, xx) || !m(zz, yy, xx)) {
            out(z, y, x) = 1;
            break;
          }
        }
      }
    }
  }
  return out;
}

namespace {

std::vector<Eigen::Vector3d> surface_points(const SegMask& m, const Spacing& sp) {
  const SegMask s = surface_voxels(m);
  std::vector<Eigen::Vector3d> pts;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!s[i]) continue;
    const auto [z, y, x] = s.dims().coords(i);
    pts.emplace_back(z * sp.z, y * sp.y, x * sp.x);
  }
  return pts;
}

double sum_nearest(const std::vector<Eigen::Vector3d>& from, const std::vector<Eigen::Vector3d>& to) {
  double total = 0.0;
  for (const auto& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
    total += std::sqrt(best);
  }
  return total;
}

std::size_t count_set(const SegMask& m) { return count_nonzero(m); }

}  // namespace

double assd(const SegMask& s, const SegMask& g, const Spacing& spacing) {
  require_same_grid(s, g, "assd");
  if (count_set(s) == 0 || count_set(g) == 0) throw MetricError("assd needs two nonempty masks");
  const auto ps = surface_points(s, spacing);
  const auto pg = surface_points(g, spacing);
  return (sum_nearest(ps, pg) + sum_nearest(pg, ps)) / double(ps.size() + pg.size());
}

namespace {

constexpr int cube_index(int dz, int dy, int dx) { return (dz + 1) * 9 + (dy + 1) * 3 + (dx + 1); }

struct CubeTables {
  std::array<std::vector<int>, 27> adj26;
  std::array<std::vector<int>, 27> adj6;
  std::array<bool, 27> in_n18{};
};

const CubeTables& cube_tables() {
  static const CubeTables t = [] {
    CubeTables t;
    for (int a = 0; a < 27; ++a) {
      const int az = a / 9 - 1, ay = a / 3 % 3 - 1, ax = a % 3 - 1;
      t.in_n18[std::size_t(a)] = a != 13 && std::abs(az) + std::abs(ay) + std::abs(ax) <= 2;
      for (int b = 0; b < 27; ++b) {
        if (a == b) continue;
        const int dz = std::abs(b / 9 - 1 - az), dy = std::abs(b / 3 % 3 - 1 - ay), dx = std::abs(b % 3 - 1 - ax);
        if (std::max({dz, dy, dx}) == 1) t.adj26[std::size_t(a)].push_back(b);
        if (dz + dy + dx == 1) t.adj6[std::size_t(a)].push_back(b);
      }
    }
    return t;
  }();
  return t;
}

// Components among `member` cells (center excluded) under `adj`; when
// `touching` is set only components containing one of those cells count.
int count_local_components(const std::array<bool, 27>& member, const std::array<std::vector<int>, 27>& adj,
                           const std::vector<int>* touching) {
  std::array<int, 27> label{};
  label.fill(-1);
  int count = 0;
  std::array<int, 27> stack{};
  for (int s = 0; s < 27; ++s) {
    if (!member[std::size_t(s)] || label[std::size_t(s)] >= 0) continue;
    int top = 0;
    stack[std::size_t(top++)] = s;
    label[std::size_t(s)] = s;
    bool touches = touching == nullptr;
    while (top) {
      const int c = stack[std::size_t(--top)];
      if (touching && !touches) {
        for (int t : *touching) touches = touches || t == c;
      }
      for (int nb : adj[std::size_t(c)]) {
        if (member[std::size_t(nb)] && label[std::size_t(nb)] < 0) {
          label[std::size_t(nb)] = s;
          stack[std::size_t(top++)] = nb;
        }
      }
    }
    if (touches) ++count;
  }
  return count;
}

}  // namespace

bool is_simple_point(const std::array<std::uint8_t, 27>& cube) {
  const auto& t = cube_tables();
  std::array<bool, 27> object{}, background{};
  for (int i = 0; i < 27; ++i) {
    if (i == 13) continue;
    object[std::size_t(i)] = cube[std::size_t(i)] != 0;
    background[std::size_t(i)] = cube[std::size_t(i)] == 0 && t.in_n18[std::size_t(i)];
  }
  if (count_local_components(object, t.adj26, nullptr) != 1) return false;
  static const std::vector<int> faces = {cube_index(-1, 0, 0), cube_index(1, 0, 0), cube_index(0, -1, 0),
                                         cube_index(0, 1, 0),  cube_index(0, 0, -1), cube_index(0, 0, 1)};
  return count_local_components(background, t.adj6, &faces) == 1;
}

namespace {

std::array<std::uint8_t, 27> neighborhood(const SegMask& m, int z, int y, int x) {
  std::array<std::uint8_t, 27> c{};
  const Dims d = m.dims();
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int zz = z + dz, yy = y + dy, xx = x + dx;
        c[std::size_t(cube_index(dz, dy, dx))] = d.contains(zz, yy, xx) ? m(zz, yy, xx) : 0;
      }
  return c;
}

bool deletable(const SegMask& m, int z, int y, int x) {
  const auto c = neighborhood(m, z, y, x);
  int n = 0;
  for (int i = 0; i < 27; ++i) n += i != 13 && c[std::size_t(i)];
  if (n < 2) return false;
  return is_simple_point(c);
}

}  // namespace

SegMask skeletonize3d(const SegMask& m) {
  validate(m);
  SegMask out = m;
  const Dims d = m.dims();
  static constexpr int dirs[6][3] = {{0, -1, 0}, {0, 1, 0}, {0, 0, 1}, {0, 0, -1}, {-1, 0, 0}, {1, 0, 0}};
  std::vector<std::size_t> candidates;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& dir : dirs) {
      candidates.clear();
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (!out[i]) continue;
        const auto [z, y, x] = d.coords(i);
        const int zz = z + dir[0], yy = y + dir[1], xx = x + dir[2];
        if (d.contains(zz, yy, xx) && out(zz, yy, xx)) continue;
        if (deletable(out, z, y, x)) candidates.push_back(i);
      }
      for (std::size_t i : candidates) {
        const auto [z, y, x] = d.coords(i);
        if (deletable(out, z, y, x)) {
          out[i] = 0;
          changed = true;
        }
      }
    }
  }
  return out;
}

double skeleton_recall(const SegMask& s, const SegMask& g) {
  require_same_grid(s, g, "skeleton_recall");
  if (count_set(g) == 0) throw MetricError("skeleton recall needs a nonempty reference mask");
  const SegMask q = skeletonize3d(g);
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    total += q[i];
    hit += q[i] & s[i];
  }
  return double(hit) / double(total);
}

double skeleton_precision(const SegMask& s, const SegMask& g) {
  require_same_grid(s, g, "skeleton_precision");
  if (count_set(s) == 0) throw MetricError("skeleton precision needs a nonempty prediction");
  const SegMask q = skeletonize3d(s);
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    total += q[i];
    hit += q[i] & g[i];
  }
  return double(hit) / double(total);
}

int count_components26(const SegMask& m) {
  const Dims d = m.dims();
  std::vector<std::uint8_t> seen(m.size(), 0);
  std::vector<std::size_t> stack;
  int count = 0;
  for (std::size_t s = 0; s < m.size(); ++s) {
    if (!m[s] || seen[s]) continue;
    ++count;
    seen[s] = 1;
    stack.push_back(s);
    while (!stack.empty()) {
      const auto [z, y, x] = d.coords(stack.back());
      stack.pop_back();
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int zz = z + dz, yy = y + dy, xx = x + dx;
            if (!d.contains(zz, yy, xx)) continue;
            const auto j = d.index(zz, yy, xx);
            if (m[j] && !seen[j]) {
              seen[j] = 1;
              stack.push_back(j);
            }
          }
    }
  }
  return count;
}

GraphStats graph_stats(const VesselGraph& g) {
  GraphStats s;
  s.nodes = g.nodes.size();
  s.edges = g.edges.size();
  s.mean_degree = s.nodes ? 2.0 * double(s.edges) / double(s.nodes) : 0.0;
  return s;
}

std::string MetricsReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["dice"] = dice;
  j["assd_mm"] = opt(assd_mm);
  j["sr"] = opt(sr);
  j["sp"] = opt(sp);
  j["nodes"] = graph ? nlohmann::json(graph->nodes) : nlohmann::json(nullptr);
  j["mean_degree"] = graph ? nlohmann::json(graph->mean_degree) : nlohmann::json(nullptr);
  return j.dump();
}

MetricsReport evaluate_masks(const SegMask& pred, const SegMask& truth, const VesselGraph* graph) {
  MetricsReport r;
  r.dice = dice_metric(pred, truth);
  const bool has_pred = count_set(pred) > 0, has_truth = count_set(truth) > 0;
  if (has_pred && has_truth) r.assd_mm = assd(pred, truth, truth.spacing());
  if (has_truth) r.sr = skeleton_recall(pred, truth);
  if (has_pred) r.sp = skeleton_precision(pred, truth);
  if (graph) r.graph = graph_stats(*graph);
  return r;
}

}  // namespace vgseg
