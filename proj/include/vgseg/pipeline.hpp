#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vgseg/config.hpp"
#include "vgseg/graph.hpp"
#include "vgseg/metrics.hpp"
#include "vgseg/model/trainer.hpp"
#include "vgseg/phantom.hpp"

namespace vgseg {

// "vol_007"
std::string volume_id(int index);
// Per-volume phantom seed derived from the run seed.
std::uint64_t volume_seed(std::uint64_t run_seed, int index);
std::vector<Phantom> make_dataset(const RunConfig& cfg);

struct PresegMaps {
  ProbabilityMap a0;  // dilated stage-1 probabilities
  SegMask y0;         // a0 >= tau
};
PresegMaps preseg_maps(const ProbabilityMap& p0, const PresegConfig& cfg);

// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads. The first
// exception thrown is rethrown after every worker has stopped.
void parallel_for(int n, const std::function<void(int)>& fn);

struct PreparedVolume {
  std::string id;
  Phantom phantom;
  PresegMaps pre;
  VesselGraph graph;
};

struct PreparedDataset {
  std::vector<PreparedVolume> volumes;  // the first cfg.dataset.train are the train split
  model::TrainResult preseg_log;
};

// Phantoms, UNET-0 preliminary maps and graphs, all in memory.
PreparedDataset prepare_dataset(const RunConfig& cfg, std::ostream* log = nullptr);

model::Sample make_sample(const RunConfig& cfg, const PreparedVolume& v, bool fusion);

// Thresholds the vessel probability at 0.5 and scores it.
MetricsReport score_prediction(const ProbabilityMap& prob, const SegMask& truth, const VesselGraph* graph);

struct ExperimentRun {
  model::TrainResult train;
  std::vector<MetricsReport> test;
  double mean_dice = 0.0;
  double mean_sr = 0.0;
};

// Trains the cascade (with or without UNET-G) on the train split with the
// given seed and scores the test split.
ExperimentRun run_cascade_experiment(const RunConfig& cfg, const PreparedDataset& data, bool fusion,
                                     std::uint64_t seed, std::ostream* log = nullptr);

// On-disk stages. Every stage writes <out>/config.resolved.json and a
// manifest under its own directory, and refuses to run before the stages it
// reads from (StageError "run stage 'x' first").
struct StageOptions {
  RunConfig cfg;
  std::filesystem::path out;
  std::optional<std::string> volumes;  // glob over volume ids
  std::optional<std::filesystem::path> predictions;  // eval: <id>.u8 masks instead of the model
  std::ostream* log = nullptr;
};

void stage_phantom(const StageOptions& o);
void stage_preseg(const StageOptions& o);
void stage_graph(const StageOptions& o);
void stage_train(const StageOptions& o);
void stage_eval(const StageOptions& o);
void stage_export_slices(const StageOptions& o);
void stage_stats(const StageOptions& o, std::ostream& out);

// P5 greyscale image.
void write_pgm(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& pixels);

}  // namespace vgseg
