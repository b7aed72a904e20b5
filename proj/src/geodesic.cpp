#include "vgseg/geodesic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <utility>

namespace vgseg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::array<NeighborOffset, 26> make_neighbors() {
  std::array<NeighborOffset, 26> out{};
  int n = 0;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dz == 0 && dy == 0 && dx == 0) continue;
        out[n++] = {dz, dy, dx, std::sqrt(double(dz * dz + dy * dy + dx * dx))};
      }
    }
  }
  return out;
}

// Dijkstra over the voxels of `box`; `dist` is box-local, z-major.
void dijkstra(const GeodesicCost& cost, std::span<const Voxel> seeds, const Box& box,
              double cutoff, std::vector<double>& dist) {
  const int bd = box.z1 - box.z0 + 1;
  const int bh = box.y1 - box.y0 + 1;
  const int bw = box.x1 - box.x0 + 1;
  const std::size_t n = std::size_t(bd) * bh * bw;
  dist.assign(n, kInf);
  const Dims& dims = cost.dims();
  auto local = [&](int z, int y, int x) {
    return (std::size_t(z - box.z0) * bh + (y - box.y0)) * bw + (x - box.x0);
  };

  using Entry = std::pair<double, std::uint32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  for (const auto& s : seeds) {
    if (!box.contains(s.z, s.y, s.x)) continue;
    const auto li = local(s.z, s.y, s.x);
    if (dist[li] > 0.0) {
      dist[li] = 0.0;
      queue.emplace(0.0, static_cast<std::uint32_t>(li));
    }
  }
  const auto& nbrs = neighbors26();
  while (!queue.empty()) {
    const auto [d, li] = queue.top();
    queue.pop();
    if (d > dist[li]) continue;
    const int lx = int(li % bw);
    const int ly = int((li / bw) % bh);
    const int lz = int(li / (std::size_t(bw) * bh));
    const int z = lz + box.z0, y = ly + box.y0, x = lx + box.x0;
    const std::size_t gp = dims.index(z, y, x);
    const double sp = cost.signal(gp);
    for (const auto& o : nbrs) {
      const int qz = z + o.dz, qy = y + o.dy, qx = x + o.dx;
      if (!box.contains(qz, qy, qx)) continue;
      const std::size_t gq = dims.index(qz, qy, qx);
      const double nd = d + cost.weight(gq) * std::abs(cost.signal(gq) - sp) / o.length;
      if (nd >= cutoff) continue;
      const auto lq = local(qz, qy, qx);
      if (nd < dist[lq]) {
        dist[lq] = nd;
        queue.emplace(nd, static_cast<std::uint32_t>(lq));
      }
    }
  }
}

Box clip(const Box& b, const Dims& dims) {
  return {std::max(0, b.z0), std::max(0, b.y0), std::max(0, b.x0),
          std::min(dims.d - 1, b.z1), std::min(dims.h - 1, b.y1), std::min(dims.w - 1, b.x1)};
}

}  // namespace

Box Box::around(const Voxel& c, int radius, const Dims& dims) {
  return clip({c.z - radius, c.y - radius, c.x - radius, c.z + radius, c.y + radius,
               c.x + radius},
              dims);
}

const std::array<NeighborOffset, 26>& neighbors26() {
  static const auto table = make_neighbors();
  return table;
}

GeodesicCost::GeodesicCost(const Volume3D& vol, const SegMask& mask, const ProbabilityMap& prob,
                           GeodesicMode mode)
    : dims_(vol.dims()), mode_(mode), signal_(vol.size()), weight_(vol.size()) {
  require_same_grid(vol, mask, "geodesic cost");
  require_same_grid(vol, prob, "geodesic cost");
  for (std::size_t i = 0; i < vol.size(); ++i) {
    const double x = vol[i];
    signal_[i] = x + x * double(mask[i]);
    const double a = prob[i];
    weight_[i] = mode == GeodesicMode::NodeDensity ? a : 1.0 - a;
  }
}

double GeodesicCost::step(const Voxel& p, const Voxel& q) const {
  const int dz = q.z - p.z, dy = q.y - p.y, dx = q.x - p.x;
  if (!dims_.contains(p.z, p.y, p.x) || !dims_.contains(q.z, q.y, q.x)) {
    throw ContractError("step_cost: voxel out of bounds");
  }
  if (std::abs(dz) > 1 || std::abs(dy) > 1 || std::abs(dx) > 1 || (dz == 0 && dy == 0 && dx == 0)) {
    throw ContractError("step_cost: voxels are not 26-adjacent");
  }
  const auto ip = dims_.index(p.z, p.y, p.x);
  const auto iq = dims_.index(q.z, q.y, q.x);
  const double len = std::sqrt(double(dz * dz + dy * dy + dx * dx));
  return weight_[iq] * std::abs(signal_[iq] - signal_[ip]) / len;
}

double step_cost(const Volume3D& vol, const SegMask& mask, const ProbabilityMap& prob,
                 const Voxel& p, const Voxel& q, GeodesicMode mode) {
  return GeodesicCost(vol, mask, prob, mode).step(p, q);
}

GeodesicField geodesic_from_seeds(const GeodesicCost& cost, std::span<const Voxel> seeds,
                                  const GeodesicSearch& search) {
  if (seeds.empty()) throw ParameterError("geodesic_from_seeds: empty seed set");
  const Dims& dims = cost.dims();
  for (const auto& s : seeds) {
    if (!dims.contains(s.z, s.y, s.x)) throw ParameterError("geodesic_from_seeds: seed out of bounds");
  }
  const Box box = search.window.z1 < search.window.z0 ? Box::whole(dims) : clip(search.window, dims);

  GeodesicField field;
  field.dims = dims;
  for (const auto& s : seeds) field.seeds.push_back(dims.index(s.z, s.y, s.x));

  std::vector<double> local;
  dijkstra(cost, seeds, box, search.cutoff, local);
  if (box.z0 == 0 && box.y0 == 0 && box.x0 == 0 && box.z1 == dims.d - 1 &&
      box.y1 == dims.h - 1 && box.x1 == dims.w - 1) {
    field.dist = std::move(local);
    return field;
  }
  field.dist.assign(dims.size(), kInf);
  const int bh = box.y1 - box.y0 + 1, bw = box.x1 - box.x0 + 1;
  for (int z = box.z0; z <= box.z1; ++z) {
    for (int y = box.y0; y <= box.y1; ++y) {
      for (int x = box.x0; x <= box.x1; ++x) {
        field.dist[dims.index(z, y, x)] =
            local[(std::size_t(z - box.z0) * bh + (y - box.y0)) * bw + (x - box.x0)];
      }
    }
  }
  return field;
}

GeodesicField geodesic_from_seeds(const Volume3D& vol, const SegMask& mask,
                                  const ProbabilityMap& prob, std::span<const Voxel> seeds,
                                  GeodesicMode mode) {
  return geodesic_from_seeds(GeodesicCost(vol, mask, prob, mode), seeds);
}

const std::vector<double>& WindowedGeodesic::run(const Voxel& seed, const Box& window,
                                                 double cutoff) {
  window_ = clip(window, cost_.dims());
  wd_ = window_.z1 - window_.z0 + 1;
  wh_ = window_.y1 - window_.y0 + 1;
  ww_ = window_.x1 - window_.x0 + 1;
  const Voxel seeds[1] = {seed};
  dijkstra(cost_, seeds, window_, cutoff, dist_);
  return dist_;
}

double WindowedGeodesic::at(int z, int y, int x) const {
  if (!window_.contains(z, y, x)) return kInf;
  return dist_[(std::size_t(z - window_.z0) * wh_ + (y - window_.y0)) * ww_ + (x - window_.x0)];
}

}  // namespace vgseg
