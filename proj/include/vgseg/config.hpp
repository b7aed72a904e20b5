#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "vgseg/graph.hpp"
#include "vgseg/model/trainer.hpp"
#include "vgseg/phantom.hpp"
#include "vgseg/supervoxel.hpp"

namespace vgseg {

inline constexpr const char* kToolVersion = "vgseg 1.0.0";

struct DatasetConfig {
  int count = 50;
  int train = 35;  // the first `train` volumes train, the rest test
};

struct PresegConfig {
  int dilation_kernel = 7;
  double tau = 0.5;
  model::TrainSchedule schedule{.epochs = 6, .lr = 2e-3, .lr_step_epochs = 40};
};

struct RunConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  PhantomConfig phantom{.dims = {48, 48, 48}};
  SlicParams slic{.n_segments = 0};  // n_segments <= 0 selects the density-scaled default
  GraphBuildParams graph{.candidate_radius = 0.0};  // <= 0 selects three lattice steps
  model::NetworkConfig network;
  PresegConfig preseg;
  model::TrainSchedule train{.epochs = 8, .lr = 2e-3, .lr_step_epochs = 40};
  bool fusion = true;

  // Cross-field checks; throws ConfigError naming the key.
  void validate() const;
  // n_segments and candidate_radius with defaults filled in.
  [[nodiscard]] SlicParams resolved_slic() const;
  [[nodiscard]] GraphBuildParams resolved_graph() const;
};

// Unknown keys and wrongly typed values raise ConfigError with the key path.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& c);

}  // namespace vgseg
