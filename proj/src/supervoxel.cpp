#include "vgseg/supervoxel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "vgseg/geodesic.hpp"

namespace vgseg {

namespace {

constexpr std::uint32_t kUnlabelled = std::numeric_limits<std::uint32_t>::max();

double lattice_step(const Dims& dims, int n_segments) {
  return std::cbrt(double(dims.size()) / double(n_segments));
}

// Per-axis seed counts: product <= n_segments, grown greedily along the axis
// with the longest cell edge.
std::array<int, 3> lattice_counts(const Dims& dims, int n_segments) {
  const double s = lattice_step(dims, n_segments);
  const std::array<int, 3> extent{dims.d, dims.h, dims.w};
  std::array<int, 3> n{};
  for (int a = 0; a < 3; ++a) n[a] = std::clamp(int(std::floor(extent[a] / s)), 1, extent[a]);
  auto product = [&] { return std::int64_t(n[0]) * n[1] * n[2]; };
  while (product() > n_segments) {
    int best = -1;
    for (int a = 0; a < 3; ++a) {
      if (n[a] > 1 && (best < 0 || double(extent[a]) / n[a] < double(extent[best]) / n[best])) best = a;
    }
    if (best < 0) break;
    --n[best];
  }
  for (;;) {
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return double(extent[a]) / n[a] > double(extent[b]) / n[b];
    });
    bool grown = false;
    for (int a : order) {
      if (n[a] + 1 > extent[a]) continue;
      ++n[a];
      if (product() <= n_segments) {
        grown = true;
        break;
      }
      --n[a];
    }
    if (!grown) break;
  }
  return n;
}

double gradient_sq(const Volume3D& vol, int z, int y, int x) {
  const Dims& d = vol.dims();
  auto at = [&](int zz, int yy, int xx) {
    return double(vol(std::clamp(zz, 0, d.d - 1), std::clamp(yy, 0, d.h - 1),
                      std::clamp(xx, 0, d.w - 1)));
  };
  const double gz = at(z + 1, y, x) - at(z - 1, y, x);
  const double gy = at(z, y + 1, x) - at(z, y - 1, x);
  const double gx = at(z, y, x + 1) - at(z, y, x - 1);
  return gz * gz + gy * gy + gx * gx;
}

Voxel nearest_voxel(const Eigen::Vector3d& p, const Dims& dims) {
  return {std::clamp(int(std::lround(p[0])), 0, dims.d - 1),
          std::clamp(int(std::lround(p[1])), 0, dims.h - 1),
          std::clamp(int(std::lround(p[2])), 0, dims.w - 1)};
}

int window_half(const Dims& dims, const SlicParams& params) {
  const double s = lattice_step(dims, params.n_segments);
  return std::max(1, int(std::lround(params.search_radius_factor * s / 2.0)));
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  [[nodiscard]] double normalize(double v) const { return hi > lo ? (v - lo) / (hi - lo) : 0.0; }
};

void update_centroids(const Volume3D& vol, const std::vector<std::uint32_t>& label,
                      std::vector<Centroid>& centroids) {
  const Dims& dims = vol.dims();
  const auto k = centroids.size();
  std::vector<Eigen::Vector3d> pos(k, Eigen::Vector3d::Zero());
  std::vector<double> gray(k, 0.0);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < label.size(); ++i) {
    const auto l = label[i];
    if (l == kUnlabelled) continue;
    const auto c = dims.coords(i);
    pos[l] += Eigen::Vector3d(c[0], c[1], c[2]);
    gray[l] += vol[i];
    ++count[l];
  }
  for (std::size_t l = 0; l < k; ++l) {
    if (count[l] == 0) continue;
    centroids[l].pos = pos[l] / double(count[l]);
    centroids[l].gray = gray[l] / double(count[l]);
  }
}

// ---------------------------------------------------------------------------
// Region adjacency graph used for connectivity repair and size enforcement.

class RegionGraph {
 public:
  RegionGraph(const LabelVolume& regions, std::size_t n_regions, const Volume3D& vol)
      : parent_(n_regions), size_(n_regions, 0), gray_(n_regions, 0.0), adj_(n_regions) {
    std::iota(parent_.begin(), parent_.end(), 0);
    const Dims& dims = regions.dims();
    const auto& nbrs = neighbors26();
    for (int z = 0; z < dims.d; ++z) {
      for (int y = 0; y < dims.h; ++y) {
        for (int x = 0; x < dims.w; ++x) {
          const auto i = dims.index(z, y, x);
          const auto r = regions[i];
          ++size_[r];
          gray_[r] += vol[i];
          for (const auto& o : nbrs) {
            const int qz = z + o.dz, qy = y + o.dy, qx = x + o.dx;
            if (!dims.contains(qz, qy, qx)) continue;
            const auto q = regions(qz, qy, qx);
            if (q != r) adj_[r].insert(q);
          }
        }
      }
    }
  }

  std::size_t find(std::size_t r) {
    while (parent_[r] != r) {
      parent_[r] = parent_[parent_[r]];
      r = parent_[r];
    }
    return r;
  }

  [[nodiscard]] std::size_t size(std::size_t root) const { return size_[root]; }
  [[nodiscard]] double mean_gray(std::size_t root) const { return gray_[root] / double(size_[root]); }

  // Live neighbour roots of `root`.
  std::set<std::size_t> neighbors(std::size_t root) {
    std::set<std::size_t> out;
    for (auto q : adj_[root]) {
      const auto rq = find(q);
      if (rq != root) out.insert(rq);
    }
    adj_[root] = out;
    return out;
  }

  // Most similar neighbour by mean gray; ties to the lowest root id. Returns
  // `root` itself when isolated. `allowed` filters candidates.
  template <typename Pred>
  std::size_t most_similar(std::size_t root, Pred allowed) {
    const double g = mean_gray(root);
    std::size_t best = root;
    double best_diff = std::numeric_limits<double>::infinity();
    for (auto q : neighbors(root)) {
      if (!allowed(q)) continue;
      const double diff = std::abs(mean_gray(q) - g);
      if (diff < best_diff) {
        best_diff = diff;
        best = q;
      }
    }
    return best;
  }

  // Absorbs `from` into `into`; both must be roots.
  void merge(std::size_t from, std::size_t into) {
    parent_[from] = into;
    size_[into] += size_[from];
    gray_[into] += gray_[from];
    for (auto q : adj_[from]) adj_[into].insert(q);
    adj_[from].clear();
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
  std::vector<double> gray_;
  std::vector<std::set<std::size_t>> adj_;
};

// 26-connected components of equal label. Returns per-voxel component id.
std::vector<std::uint32_t> label_components(const LabelVolume& labels, std::size_t& n_components) {
  const Dims& dims = labels.dims();
  std::vector<std::uint32_t> comp(labels.size(), kUnlabelled);
  std::vector<std::size_t> stack;
  const auto& nbrs = neighbors26();
  std::uint32_t next = 0;
  for (std::size_t seed = 0; seed < labels.size(); ++seed) {
    if (comp[seed] != kUnlabelled) continue;
    const auto l = labels[seed];
    comp[seed] = next;
    stack.push_back(seed);
    while (!stack.empty()) {
      const auto i = stack.back();
      stack.pop_back();
      const auto c = dims.coords(i);
      for (const auto& o : nbrs) {
        const int qz = c[0] + o.dz, qy = c[1] + o.dy, qx = c[2] + o.dx;
        if (!dims.contains(qz, qy, qx)) continue;
        const auto q = dims.index(qz, qy, qx);
        if (comp[q] == kUnlabelled && labels[q] == l) {
          comp[q] = next;
          stack.push_back(q);
        }
      }
    }
    ++next;
  }
  n_components = next;
  return comp;
}

// Renumbers roots to 0..K-1 in order of first appearance.
SupervoxelMap compact(const LabelVolume& regions, RegionGraph& graph) {
  SupervoxelMap out{LabelVolume(regions.dims(), regions.spacing()), 0};
  std::vector<std::uint32_t> remap;
  std::vector<std::int64_t> id_of;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto root = graph.find(regions[i]);
    if (root >= id_of.size()) id_of.resize(root + 1, -1);
    if (id_of[root] < 0) id_of[root] = out.count++;
    out.labels[i] = static_cast<std::uint32_t>(id_of[root]);
  }
  return out;
}

void merge_small(RegionGraph& graph, std::vector<std::size_t>& roots, std::size_t n_voxels,
                 double factor) {
  if (factor <= 0.0) return;
  for (;;) {
    if (roots.size() <= 1) return;
    const double threshold = factor * double(n_voxels) / double(roots.size());
    std::size_t victim = roots.size();
    for (std::size_t r = 0; r < roots.size(); ++r) {
      if (double(graph.size(roots[r])) < threshold &&
          (victim == roots.size() || graph.size(roots[r]) < graph.size(roots[victim]))) {
        victim = r;
      }
    }
    if (victim == roots.size()) return;
    const auto from = roots[victim];
    const auto into = graph.most_similar(from, [](std::size_t) { return true; });
    if (into == from) return;
    graph.merge(from, into);
    roots.erase(roots.begin() + static_cast<std::ptrdiff_t>(victim));
  }
}

// Shared by both SLIC variants. `geo` may be null (two-term distance).
class SlicAssigner {
 public:
  SlicAssigner(const Volume3D& vol, const SlicParams& params) : vol_(vol), params_(params) {
    half_ = window_half(vol.dims(), params);
  }

  std::vector<std::uint32_t> assign_geodesic(const std::vector<Centroid>& centroids,
                                             const GeodesicCost& cost) {
    const Dims& dims = vol_.dims();
    WindowedGeodesic geo(cost);
    struct Candidate {
      std::size_t voxel;
      double gray, dis, geo;
    };
    std::vector<std::vector<Candidate>> per_centroid(centroids.size());
    Range rg, rd, rgeo;
    for (std::size_t k = 0; k < centroids.size(); ++k) {
      const auto& c = centroids[k];
      const Voxel seed = nearest_voxel(c.pos, dims);
      const Box box = Box::around(seed, half_, dims);
      geo.run(seed, box);
      auto& cand = per_centroid[k];
      for (int z = box.z0; z <= box.z1; ++z) {
        for (int y = box.y0; y <= box.y1; ++y) {
          for (int x = box.x0; x <= box.x1; ++x) {
            const auto i = dims.index(z, y, x);
            const double dg = std::abs(double(vol_[i]) - c.gray);
            const double dd = (Eigen::Vector3d(z, y, x) - c.pos).norm();
            const double dq = geo.at(z, y, x);
            rg.add(dg);
            rd.add(dd);
            rgeo.add(dq);
            cand.push_back({i, dg, dd, dq});
          }
        }
      }
    }
    std::vector<double> best(vol_.size(), std::numeric_limits<double>::infinity());
    std::vector<std::uint32_t> label(vol_.size(), kUnlabelled);
    for (std::size_t k = 0; k < centroids.size(); ++k) {
      for (const auto& cd : per_centroid[k]) {
        const double d = rg.normalize(cd.gray) + rd.normalize(cd.dis) + rgeo.normalize(cd.geo);
        if (d < best[cd.voxel]) {
          best[cd.voxel] = d;
          label[cd.voxel] = static_cast<std::uint32_t>(k);
        }
      }
    }
    return label;
  }

  // Voxel-major two-term assignment.
  std::vector<std::uint32_t> assign_classic(const std::vector<Centroid>& centroids) {
    const Dims& dims = vol_.dims();
    std::vector<Box> boxes;
    boxes.reserve(centroids.size());
    for (const auto& c : centroids) boxes.push_back(Box::around(nearest_voxel(c.pos, dims), half_, dims));
    Range rg, rd;
    for (std::size_t k = 0; k < centroids.size(); ++k) {
      const Box& b = boxes[k];
      for (int z = b.z0; z <= b.z1; ++z) {
        for (int y = b.y0; y <= b.y1; ++y) {
          for (int x = b.x0; x <= b.x1; ++x) {
            rg.add(std::abs(double(vol_(z, y, x)) - centroids[k].gray));
            rd.add((Eigen::Vector3d(z, y, x) - centroids[k].pos).norm());
          }
        }
      }
    }
    std::vector<std::uint32_t> label(vol_.size(), kUnlabelled);
    for (int z = 0; z < dims.d; ++z) {
      for (int y = 0; y < dims.h; ++y) {
        for (int x = 0; x < dims.w; ++x) {
          double best = std::numeric_limits<double>::infinity();
          for (std::size_t k = 0; k < centroids.size(); ++k) {
            if (!boxes[k].contains(z, y, x)) continue;
            const double dg = std::abs(double(vol_(z, y, x)) - centroids[k].gray);
            const double dd = (Eigen::Vector3d(z, y, x) - centroids[k].pos).norm();
            const double d = rg.normalize(dg) + rd.normalize(dd);
            if (d < best) {
              best = d;
              label[dims.index(z, y, x)] = static_cast<std::uint32_t>(k);
            }
          }
        }
      }
    }
    return label;
  }

 private:
  const Volume3D& vol_;
  const SlicParams& params_;
  int half_ = 1;
};

LabelVolume to_label_volume(const Volume3D& vol, std::vector<std::uint32_t> label) {
  LabelVolume out(vol.dims(), vol.spacing());
  for (std::size_t i = 0; i < label.size(); ++i) out[i] = label[i];
  return out;
}

}  // namespace

void SlicParams::validate() const {
  if (n_segments < 1) throw ParameterError("n_segments must be >= 1");
  if (min_size_factor < 0.0 || min_size_factor >= 1.0) {
    throw ParameterError("min_size_factor must lie in [0, 1)");
  }
  if (iterations < 1) throw ParameterError("SLIC iterations must be >= 1");
  if (search_radius_factor <= 0.0) throw ParameterError("search_radius_factor must be > 0");
}

int desk_n_segments(const Dims& dims) {
  const double ref = 256.0 * 256.0 * 256.0;
  return std::max(1, int(std::lround(14000.0 * double(dims.size()) / ref)));
}

std::vector<std::size_t> SupervoxelMap::sizes() const {
  std::vector<std::size_t> out(static_cast<std::size_t>(count), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < out.size()) ++out[labels[i]];
  }
  return out;
}

std::vector<Centroid> init_centroids(const Volume3D& vol, const SlicParams& params) {
  params.validate();
  const Dims& dims = vol.dims();
  if (std::size_t(params.n_segments) > dims.size()) {
    throw ParameterError("n_segments (" + std::to_string(params.n_segments) +
                         ") exceeds voxel count " + std::to_string(dims.size()));
  }
  const auto n = lattice_counts(dims, params.n_segments);
  const std::array<int, 3> extent{dims.d, dims.h, dims.w};
  std::vector<Centroid> out;
  out.reserve(std::size_t(n[0]) * n[1] * n[2]);
  auto center = [&](int axis, int i) { return int(std::floor((i + 0.5) * extent[axis] / n[axis])); };
  for (int iz = 0; iz < n[0]; ++iz) {
    for (int iy = 0; iy < n[1]; ++iy) {
      for (int ix = 0; ix < n[2]; ++ix) {
        int z = center(0, iz), y = center(1, iy), x = center(2, ix);
        double best = gradient_sq(vol, z, y, x);
        int bz = z, by = y, bx = x;
        for (int dz = -1; dz <= 1; ++dz) {
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const int qz = z + dz, qy = y + dy, qx = x + dx;
              if (!dims.contains(qz, qy, qx)) continue;
              const double g = gradient_sq(vol, qz, qy, qx);
              if (g < best) {
                best = g;
                bz = qz, by = qy, bx = qx;
              }
            }
          }
        }
        out.push_back({Eigen::Vector3d(bz, by, bx), double(vol(bz, by, bx))});
      }
    }
  }
  return out;
}

SupervoxelMap run_slic(const Volume3D& vol, const ProbabilityMap& prob, const SegMask& mask,
                       const SlicParams& params) {
  require_same_grid(vol, prob, "run_slic");
  require_same_grid(vol, mask, "run_slic");
  auto centroids = init_centroids(vol, params);
  const GeodesicCost cost(vol, mask, prob, GeodesicMode::NodeDensity);
  SlicAssigner assigner(vol, params);
  std::vector<std::uint32_t> label;
  for (int it = 0; it < params.iterations; ++it) {
    label = assigner.assign_geodesic(centroids, cost);
    update_centroids(vol, label, centroids);
  }
  return enforce_connectivity(to_label_volume(vol, std::move(label)), vol, params);
}

SupervoxelMap run_classic_slic(const Volume3D& vol, const SlicParams& params) {
  auto centroids = init_centroids(vol, params);
  SlicAssigner assigner(vol, params);
  std::vector<std::uint32_t> label;
  for (int it = 0; it < params.iterations; ++it) {
    label = assigner.assign_classic(centroids);
    update_centroids(vol, label, centroids);
  }
  return enforce_connectivity(to_label_volume(vol, std::move(label)), vol, params);
}

SupervoxelMap enforce_connectivity(const LabelVolume& raw, const Volume3D& vol,
                                   const SlicParams& params) {
  require_same_grid(raw, vol, "enforce_connectivity");
  std::size_t n_comp = 0;
  const auto comp = label_components(raw, n_comp);
  LabelVolume regions(raw.dims(), raw.spacing());
  for (std::size_t i = 0; i < comp.size(); ++i) regions[i] = comp[i];
  RegionGraph graph(regions, n_comp, vol);

  // Largest component per label survives; ties to the earliest component.
  std::vector<std::int64_t> keeper;
  std::vector<std::uint32_t> comp_label(n_comp);
  for (std::size_t i = 0; i < comp.size(); ++i) comp_label[comp[i]] = raw[i];
  std::vector<bool> kept(n_comp, false);
  {
    std::vector<std::pair<std::uint32_t, std::size_t>> best;  // label -> component
    std::vector<std::int64_t> best_of;
    for (std::size_t c = 0; c < n_comp; ++c) {
      const auto l = comp_label[c];
      if (l == kUnlabelled) continue;
      if (l >= best_of.size()) best_of.resize(l + 1, -1);
      if (best_of[l] < 0 || graph.size(c) > graph.size(std::size_t(best_of[l]))) best_of[l] = std::int64_t(c);
    }
    for (auto c : best_of) {
      if (c >= 0) kept[std::size_t(c)] = true;
    }
  }
  // Absorb orphans, largest first, preferring kept neighbours.
  std::vector<std::size_t> orphans;
  for (std::size_t c = 0; c < n_comp; ++c) {
    if (!kept[c]) orphans.push_back(c);
  }
  std::stable_sort(orphans.begin(), orphans.end(),
                   [&](auto a, auto b) { return graph.size(a) > graph.size(b); });
  std::vector<bool> root_kept = kept;
  bool progress = true;
  while (!orphans.empty() && progress) {
    progress = false;
    std::vector<std::size_t> pending;
    for (auto c : orphans) {
      const auto root = graph.find(c);
      if (root_kept[root]) continue;
      auto into = graph.most_similar(root, [&](std::size_t q) { return root_kept[q]; });
      if (into == root) {
        pending.push_back(c);
        continue;
      }
      graph.merge(root, into);
      progress = true;
    }
    orphans = std::move(pending);
  }
  // Whatever remains (no kept region reachable) merges with any neighbour;
  // if there are no kept regions at all the orphans become regions.
  for (auto c : orphans) {
    const auto root = graph.find(c);
    if (root_kept[root]) continue;
    const auto into = graph.most_similar(root, [](std::size_t) { return true; });
    if (into != root) {
      graph.merge(root, into);
    } else {
      root_kept[root] = true;
    }
  }

  std::vector<std::size_t> roots;
  {
    std::vector<bool> seen(n_comp, false);
    for (std::size_t i = 0; i < regions.size(); ++i) {
      const auto r = graph.find(regions[i]);
      if (!seen[r]) {
        seen[r] = true;
        roots.push_back(r);
      }
    }
  }
  merge_small(graph, roots, vol.size(), params.min_size_factor);
  return compact(regions, graph);
}

SupervoxelMap enforce_min_size(const SupervoxelMap& map, const Volume3D& vol,
                               const SlicParams& params) {
  require_same_grid(map.labels, vol, "enforce_min_size");
  RegionGraph graph(map.labels, std::size_t(map.count), vol);
  std::vector<std::size_t> roots;
  {
    std::vector<bool> seen(std::size_t(map.count), false);
    for (std::size_t i = 0; i < map.labels.size(); ++i) {
      const auto r = map.labels[i];
      if (!seen[r]) {
        seen[r] = true;
        roots.push_back(r);
      }
    }
  }
  merge_small(graph, roots, vol.size(), params.min_size_factor);
  return compact(map.labels, graph);
}

PartitionReport check_partition(const SupervoxelMap& map) {
  PartitionReport rep;
  const auto k = std::size_t(map.count);
  for (std::size_t i = 0; i < map.labels.size(); ++i) {
    if (map.labels[i] >= k) rep.complete = false;
  }
  if (!rep.complete) return rep;
  const auto sizes = map.sizes();
  rep.min_size = sizes.empty() ? 0 : *std::min_element(sizes.begin(), sizes.end());
  for (auto s : sizes) rep.nonempty = rep.nonempty && s > 0;
  std::size_t n_comp = 0;
  label_components(map.labels, n_comp);
  rep.connected = n_comp == k;
  return rep;
}

}  // namespace vgseg
