#include "vgseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

namespace vgseg {

namespace {

using Vec3 = Eigen::Vector3d;

Vec3 extent(const Dims& dims) {
  return {double(dims.d - 1), double(dims.h - 1), double(dims.w - 1)};
}

// Chaikin corner cutting; keeps both endpoints.
std::vector<Vec3> subdivide(const std::vector<Vec3>& pts, int rounds) {
  std::vector<Vec3> cur = pts;
  for (int r = 0; r < rounds && cur.size() > 2; ++r) {
    std::vector<Vec3> next;
    next.reserve(cur.size() * 2);
    next.push_back(cur.front());
    for (std::size_t i = 0; i + 1 < cur.size(); ++i) {
      next.push_back(0.75 * cur[i] + 0.25 * cur[i + 1]);
      next.push_back(0.25 * cur[i] + 0.75 * cur[i + 1]);
    }
    next.push_back(cur.back());
    cur = std::move(next);
  }
  return cur;
}

bool inside(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
}

class TreeBuilder {
 public:
  TreeBuilder(const PhantomConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), rng_(rng) {}

  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }

  // Polyline from `start` to `end` through perturbed interior points; empty
  // if the smoothed line leaves the admissible box.
  std::optional<std::vector<Vec3>> route(const Vec3& start, const Vec3& end, const Vec3& lo,
                                         const Vec3& hi) {
    constexpr int kInterior = 4;
    const Vec3 span = extent(cfg_.dims);
    std::vector<Vec3> ctrl{start};
    for (int i = 1; i <= kInterior; ++i) {
      const double t = double(i) / (kInterior + 1);
      Vec3 p = (1.0 - t) * start + t * end;
      for (int a = 0; a < 3; ++a) {
        p[a] += cfg_.tortuosity * 0.25 * span[a] * uniform(-1.0, 1.0);
      }
      ctrl.push_back(p);
    }
    ctrl.push_back(end);
    auto smooth = subdivide(ctrl, 3);
    for (const auto& p : smooth) {
      if (!inside(p, lo, hi)) return std::nullopt;
    }
    return smooth;
  }

  std::optional<Tube> trunk(double radius) {
    const Vec3 span = extent(cfg_.dims);
    const int axis = cfg_.orientation == TubeOrientation::Axial
                         ? 0
                         : std::uniform_int_distribution<int>(0, 2)(rng_);
    const double margin = radius + 1.0;
    Vec3 lo = Vec3::Constant(margin);
    Vec3 hi = span - Vec3::Constant(margin);
    lo[axis] = 0.0;
    hi[axis] = span[axis];
    if ((hi.array() < lo.array()).any()) return std::nullopt;
    Vec3 start;
    Vec3 end;
    for (int a = 0; a < 3; ++a) {
      start[a] = uniform(lo[a], hi[a]);
      end[a] = cfg_.orientation == TubeOrientation::Axial ? start[a] : uniform(lo[a], hi[a]);
    }
    start[axis] = 0.0;
    end[axis] = span[axis];
    auto line = route(start, end, lo, hi);
    if (!line) return std::nullopt;
    return Tube{std::move(*line), radius};
  }

  std::optional<Tube> branch(const Tube& parent) {
    const double radius = std::max(1.0, 0.7 * parent.radius);
    const Vec3 span = extent(cfg_.dims);
    const auto n = parent.centerline.size();
    const auto at = static_cast<std::size_t>(uniform(0.25, 0.75) * double(n - 1));
    const Vec3 start = parent.centerline[at];
    const double margin = radius + 1.0;
    const Vec3 lo = Vec3::Constant(margin);
    const Vec3 hi = span - Vec3::Constant(margin);
    if ((hi.array() < lo.array()).any()) return std::nullopt;
    // Branches terminate inside the volume, in a random direction away from
    // the parent.
    Vec3 end;
    for (int a = 0; a < 3; ++a) end[a] = uniform(lo[a], hi[a]);
    if ((end - start).norm() < 4.0 * radius) return std::nullopt;
    Vec3 box_lo = lo.cwiseMin(start);
    Vec3 box_hi = hi.cwiseMax(start);
    auto line = route(start, end, box_lo, box_hi);
    if (!line) return std::nullopt;
    return Tube{std::move(*line), radius};
  }

 private:
  const PhantomConfig& cfg_;
  std::mt19937_64& rng_;
};

double point_segment_distance_sq(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + t * ab)).squaredNorm();
}

}  // namespace

void PhantomConfig::validate() const {
  if (dims.empty()) throw ParameterError("phantom dims must be positive");
  if (tubes_min < 1 || tubes_max < tubes_min) {
    throw ParameterError("phantom tube count range must satisfy 1 <= min <= max");
  }
  if (radius_min < 1.0 || radius_max < radius_min) {
    throw ParameterError("phantom radius range must satisfy 1 <= min <= max");
  }
  if (branch_prob < 0.0 || branch_prob > 1.0) {
    throw ParameterError("branch probability must lie in [0, 1]");
  }
  if (noise_std < 0.0) throw ParameterError("noise std must be >= 0");
  if (tortuosity < 0.0) throw ParameterError("tortuosity must be >= 0");
  if (max_retries < 1) throw ParameterError("max_retries must be >= 1");
}

SegMask rasterize_tubes(const Dims& dims, const Spacing& spacing, std::span<const Tube> tubes) {
  SegMask mask(dims, spacing);
  for (const auto& tube : tubes) {
    const double r2 = tube.radius * tube.radius;
    const auto& line = tube.centerline;
    for (std::size_t s = 0; s + 1 < std::max<std::size_t>(line.size(), 2); ++s) {
      const Vec3 a = line[s];
      const Vec3 b = line.size() > 1 ? line[s + 1] : line[s];
      const Vec3 lo = a.cwiseMin(b).array() - tube.radius;
      const Vec3 hi = a.cwiseMax(b).array() + tube.radius;
      const int z0 = std::max(0, int(std::floor(lo[0]))), z1 = std::min(dims.d - 1, int(std::ceil(hi[0])));
      const int y0 = std::max(0, int(std::floor(lo[1]))), y1 = std::min(dims.h - 1, int(std::ceil(hi[1])));
      const int x0 = std::max(0, int(std::floor(lo[2]))), x1 = std::min(dims.w - 1, int(std::ceil(hi[2])));
      for (int z = z0; z <= z1; ++z) {
        for (int y = y0; y <= y1; ++y) {
          for (int x = x0; x <= x1; ++x) {
            if (mask(z, y, x)) continue;
            if (point_segment_distance_sq(Vec3(z, y, x), a, b) <= r2 + 1e-9) mask(z, y, x) = 1;
          }
        }
      }
    }
  }
  return mask;
}

Phantom generate_phantom(const PhantomConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  TreeBuilder builder(cfg, rng);

  const int n_trees = std::uniform_int_distribution<int>(cfg.tubes_min, cfg.tubes_max)(rng);
  std::vector<Tube> tubes;
  for (int t = 0; t < n_trees; ++t) {
    const double radius = builder.uniform(cfg.radius_min, cfg.radius_max);
    std::optional<Tube> trunk;
    for (int attempt = 0; attempt < cfg.max_retries && !trunk; ++attempt) {
      trunk = builder.trunk(radius);
    }
    if (!trunk) {
      throw GenerationError("could not place a radius-" + std::to_string(radius) +
                            " tube inside " + to_string(cfg.dims) + " after " +
                            std::to_string(cfg.max_retries) + " attempts");
    }
    const bool branched = builder.uniform(0.0, 1.0) < cfg.branch_prob;
    tubes.push_back(*trunk);
    if (branched) {
      // A branch that cannot be placed is simply dropped; the trunk alone is
      // a valid tree.
      for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
        if (auto b = builder.branch(tubes.back())) {
          tubes.push_back(std::move(*b));
          break;
        }
      }
    }
  }

  SegMask mask = rasterize_tubes(cfg.dims, cfg.spacing, tubes);
  Volume3D volume(cfg.dims, cfg.spacing);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < volume.size(); ++i) {
    double v = cfg.background + (mask[i] ? cfg.contrast : 0.0);
    if (cfg.noise_std > 0.0) v += cfg.noise_std * noise(rng);
    volume[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return Phantom{std::move(volume), std::move(mask), std::move(tubes)};
}

}  // namespace vgseg
