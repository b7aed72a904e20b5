#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "vgseg/volume.hpp"

namespace testing {

inline vgseg::Volume3D random_volume(const vgseg::Dims& d, std::mt19937_64& rng) {
  vgseg::Volume3D v(d, {});
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = u(rng);
  return v;
}

inline vgseg::ProbabilityMap random_prob(const vgseg::Dims& d, std::mt19937_64& rng) {
  vgseg::ProbabilityMap p(d, {});
  std::uniform_real_distribution<float> u(0.01f, 0.99f);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = u(rng);
  return p;
}

inline vgseg::SegMask random_mask(const vgseg::Dims& d, std::mt19937_64& rng, double p = 0.5) {
  vgseg::SegMask m(d, {});
  std::bernoulli_distribution b(p);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = b(rng);
  return m;
}

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("vgseg_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testing
