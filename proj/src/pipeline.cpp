#include "vgseg/pipeline.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <json.hpp>
#include <thread>

#include "vgseg/autodiff/checkpoint.hpp"
#include "vgseg/morphology.hpp"
#include "vgseg/supervoxel.hpp"
#include "vgseg/volume_io.hpp"

namespace vgseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string volume_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "vol_%03d", index);
  return buf;
}

std::uint64_t volume_seed(std::uint64_t run_seed, int index) {
  // splitmix64 of (seed, index)
  std::uint64_t z = run_seed * 0x9e3779b97f4a7c15ULL + std::uint64_t(index) + 1;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<Phantom> make_dataset(const RunConfig& cfg) {
  std::vector<Phantom> out;
  out.reserve(std::size_t(cfg.dataset.count));
  for (int i = 0; i < cfg.dataset.count; ++i) {
    PhantomConfig pc = cfg.phantom;
    pc.seed = volume_seed(cfg.seed, i);
    out.push_back(generate_phantom(pc));
  }
  return out;
}

PresegMaps preseg_maps(const ProbabilityMap& p0, const PresegConfig& cfg) {
  PresegMaps m;
  m.a0 = dilate_prob(p0, cfg.dilation_kernel, DilationFootprint::Axial);
  m.y0 = threshold_mask(m.a0, float(cfg.tau));
  return m;
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min<int>(n, int(std::thread::hardware_concurrency())));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex m;
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        {
          std::lock_guard lock(m);
          if (error) return;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(m);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

model::Sample plain_sample(const std::string& id, const Volume3D& vol, const SegMask& mask) {
  return model::Sample{id, vol, mask, std::nullopt};
}

struct Stage1 {
  ad::ParameterStore<float> params;
  std::unique_ptr<model::Unet<float>> net;
};

std::unique_ptr<Stage1> make_stage1(const RunConfig& cfg) {
  auto s = std::make_unique<Stage1>();
  std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
  s->net = std::make_unique<model::Unet<float>>(cfg.network, s->params, "unet0", rng);
  return s;
}

model::TrainSchedule preseg_schedule(const RunConfig& cfg) {
  auto sch = cfg.preseg.schedule;
  sch.seed = cfg.seed;
  return sch;
}

}  // namespace

PreparedDataset prepare_dataset(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  PreparedDataset data;
  auto phantoms = make_dataset(cfg);
  const int n = int(phantoms.size());

  std::vector<model::Sample> train;
  for (int i = 0; i < cfg.dataset.train; ++i) {
    train.push_back(plain_sample(volume_id(i), phantoms[std::size_t(i)].volume, phantoms[std::size_t(i)].mask));
  }
  auto stage1 = make_stage1(cfg);
  data.preseg_log = model::train_unet(*stage1->net, stage1->params, train, preseg_schedule(cfg), log);

  data.volumes.resize(std::size_t(n));
  const auto slic = cfg.resolved_slic();
  const auto build = cfg.resolved_graph();
  parallel_for(n, [&](int i) {
    auto& v = data.volumes[std::size_t(i)];
    v.id = volume_id(i);
    v.phantom = std::move(phantoms[std::size_t(i)]);
    v.pre = preseg_maps(model::predict_unet(*stage1->net, v.phantom.volume), cfg.preseg);
    v.graph = build_graph(v.phantom.volume, v.pre.y0, v.pre.a0, slic, build);
  });
  return data;
}

model::Sample make_sample(const RunConfig& cfg, const PreparedVolume& v, bool fusion) {
  auto s = plain_sample(v.id, v.phantom.volume, v.phantom.mask);
  if (fusion) s.graph = model::make_graph_input<float>(v.graph, v.phantom.volume, v.pre.y0, v.pre.a0, cfg.network.k);
  return s;
}

MetricsReport score_prediction(const ProbabilityMap& prob, const SegMask& truth, const VesselGraph* graph) {
  return evaluate_masks(threshold_mask(prob, 0.5f), truth, graph);
}

namespace {

void summarize(ExperimentRun& r) {
  double dice = 0.0, sr = 0.0;
  for (const auto& m : r.test) {
    dice += m.dice;
    sr += m.sr.value_or(0.0);
  }
  const double n = double(std::max<std::size_t>(1, r.test.size()));
  r.mean_dice = dice / n;
  r.mean_sr = sr / n;
}

}  // namespace

ExperimentRun run_cascade_experiment(const RunConfig& cfg, const PreparedDataset& data, bool fusion,
                                     std::uint64_t seed, std::ostream* log) {
  const int n_train = cfg.dataset.train;
  if (int(data.volumes.size()) <= n_train) throw ContractError("dataset has no test volumes");
  std::vector<model::Sample> train, test;
  for (int i = 0; i < int(data.volumes.size()); ++i) {
    (i < n_train ? train : test).push_back(make_sample(cfg, data.volumes[std::size_t(i)], fusion));
  }
  ad::ParameterStore<float> params;
  std::mt19937_64 rng(seed);
  model::CascadeModel<float> net(cfg.network, params, rng, fusion);
  auto sch = cfg.train;
  sch.seed = seed;

  ExperimentRun r;
  r.train = model::train_cascade(net, params, train, sch, log);
  r.test.resize(test.size());
  parallel_for(int(test.size()), [&](int i) {
    const auto& v = data.volumes[std::size_t(n_train + i)];
    r.test[std::size_t(i)] = score_prediction(model::predict_cascade(net, test[std::size_t(i)]), v.phantom.mask,
                                              &v.graph);
  });
  summarize(r);
  return r;
}

// ---------------------------------------------------------------------------
// On-disk stages

namespace {

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + p.string());
}

fs::path stage_dir(const StageOptions& o, const char* stage) { return o.out / stage; }

json require_manifest(const StageOptions& o, const char* stage) {
  const auto p = stage_dir(o, stage) / "manifest.json";
  if (!fs::exists(p)) throw StageError(std::string("run stage '") + stage + "' first (missing " + p.string() + ")");
  auto j = read_json(p);
  if (j.value("stage", "") != stage) throw FormatError(p.string() + ": not a '" + stage + "' manifest");
  return j;
}

void begin_stage(const StageOptions& o, const char* stage) {
  o.cfg.validate();
  fs::create_directories(stage_dir(o, stage));
  write_json(o.out / "config.resolved.json", json{{"tool", kToolVersion}, {"config", to_json(o.cfg)}});
}

json manifest(const StageOptions& o, const char* stage) {
  return json{{"stage", stage}, {"tool", kToolVersion}, {"seed", o.cfg.seed}};
}

bool selected(const StageOptions& o, const std::string& id) {
  return !o.volumes || fnmatch(o.volumes->c_str(), id.c_str(), 0) == 0;
}

struct DataEntry {
  std::string id;
  int index = 0;
  bool train = false;
};

std::vector<DataEntry> data_entries(const StageOptions& o) {
  const auto j = require_manifest(o, "phantom");
  std::vector<DataEntry> out;
  for (const auto& v : j.at("volumes")) {
    out.push_back({v.at("id").get<std::string>(), v.at("index").get<int>(), v.at("split").get<std::string>() == "train"});
  }
  return out;
}

fs::path volume_path(const StageOptions& o, const std::string& id) { return o.out / "phantom" / (id + ".f32"); }
fs::path mask_path(const StageOptions& o, const std::string& id) { return o.out / "phantom" / (id + "_mask.u8"); }
fs::path a0_path(const StageOptions& o, const std::string& id) { return o.out / "preseg" / (id + "_a0.f32"); }
fs::path y0_path(const StageOptions& o, const std::string& id) { return o.out / "preseg" / (id + "_y0.u8"); }
fs::path graph_path(const StageOptions& o, const std::string& id) { return o.out / "graph" / (id + ".vgraph"); }
fs::path pred_path(const StageOptions& o, const std::string& id) { return o.out / "eval" / (id + "_pred.u8"); }

void require_listed(const json& manifest, const std::string& id, const char* stage) {
  for (const auto& v : manifest.at("volumes")) {
    if (v.get<std::string>() == id) return;
  }
  throw StageError(std::string("run stage '") + stage + "' first: no output for " + id);
}

std::ostream& logstream(const StageOptions& o) { return o.log ? *o.log : std::clog; }

model::Sample load_sample(const StageOptions& o, const std::string& id, bool with_graph) {
  auto s = plain_sample(id, load_volume(volume_path(o, id)), load_mask(mask_path(o, id)));
  if (with_graph) {
    const auto g = deserialize_graph(graph_path(o, id));
    s.graph = model::make_graph_input<float>(g, s.volume, load_mask(y0_path(o, id)), load_probability(a0_path(o, id)),
                                             o.cfg.network.k);
  }
  return s;
}

}  // namespace

void stage_phantom(const StageOptions& o) {
  begin_stage(o, "phantom");
  const auto phantoms = make_dataset(o.cfg);
  auto m = manifest(o, "phantom");
  m["volumes"] = json::array();
  for (int i = 0; i < int(phantoms.size()); ++i) {
    const auto id = volume_id(i);
    save_volume(phantoms[std::size_t(i)].volume, volume_path(o, id));
    save_volume(phantoms[std::size_t(i)].mask, mask_path(o, id));
    m["volumes"].push_back({{"id", id},
                            {"index", i},
                            {"seed", volume_seed(o.cfg.seed, i)},
                            {"split", i < o.cfg.dataset.train ? "train" : "test"},
                            {"volume", volume_path(o, id).filename().string()},
                            {"mask", mask_path(o, id).filename().string()}});
  }
  write_json(stage_dir(o, "phantom") / "manifest.json", m);
  logstream(o) << "phantom: wrote " << phantoms.size() << " volumes to " << stage_dir(o, "phantom") << "\n";
}

void stage_preseg(const StageOptions& o) {
  const auto entries = data_entries(o);
  begin_stage(o, "preseg");
  std::vector<model::Sample> train;
  for (const auto& e : entries) {
    if (e.train) train.push_back(load_sample(o, e.id, false));
  }
  if (train.empty()) throw StageError("preseg: the phantom set has no train volumes");
  auto stage1 = make_stage1(o.cfg);
  std::ofstream log(stage_dir(o, "preseg") / "log.jsonl");
  model::train_unet(*stage1->net, stage1->params, train, preseg_schedule(o.cfg), &log);
  ad::save_checkpoint(stage_dir(o, "preseg") / "unet0.ckpt", stage1->params);

  std::vector<std::string> ids;
  for (const auto& e : entries) {
    if (selected(o, e.id)) ids.push_back(e.id);
  }
  parallel_for(int(ids.size()), [&](int i) {
    const auto& id = ids[std::size_t(i)];
    const auto maps = preseg_maps(model::predict_unet(*stage1->net, load_volume(volume_path(o, id))), o.cfg.preseg);
    save_volume(maps.a0, a0_path(o, id));
    save_volume(maps.y0, y0_path(o, id));
  });
  auto m = manifest(o, "preseg");
  m["volumes"] = ids;
  m["checkpoint"] = "unet0.ckpt";
  write_json(stage_dir(o, "preseg") / "manifest.json", m);
  logstream(o) << "preseg: trained on " << train.size() << " volumes, wrote maps for " << ids.size() << "\n";
}

void stage_graph(const StageOptions& o) {
  const auto entries = data_entries(o);
  const auto pre = require_manifest(o, "preseg");
  begin_stage(o, "graph");
  std::vector<std::string> ids;
  for (const auto& e : entries) {
    if (!selected(o, e.id)) continue;
    require_listed(pre, e.id, "preseg");
    ids.push_back(e.id);
  }
  const auto slic = o.cfg.resolved_slic();
  const auto build = o.cfg.resolved_graph();
  parallel_for(int(ids.size()), [&](int i) {
    const auto& id = ids[std::size_t(i)];
    const auto g = build_graph(load_volume(volume_path(o, id)), load_mask(y0_path(o, id)),
                               load_probability(a0_path(o, id)), slic, build);
    serialize_graph(g, graph_path(o, id));
  });
  auto m = manifest(o, "graph");
  m["volumes"] = ids;
  m["n_segments"] = slic.n_segments;
  m["candidate_radius"] = build.candidate_radius;
  write_json(stage_dir(o, "graph") / "manifest.json", m);
  logstream(o) << "graph: wrote " << ids.size() << " graphs\n";
}

void stage_train(const StageOptions& o) {
  const auto entries = data_entries(o);
  const auto pre = require_manifest(o, "preseg");
  std::optional<json> graphs;
  if (o.cfg.fusion) graphs = require_manifest(o, "graph");
  begin_stage(o, "train");
  std::vector<model::Sample> train;
  for (const auto& e : entries) {
    if (!e.train || !selected(o, e.id)) continue;
    if (graphs) {
      require_listed(pre, e.id, "preseg");
      require_listed(*graphs, e.id, "graph");
    }
    train.push_back(load_sample(o, e.id, o.cfg.fusion));
  }
  if (train.empty()) throw StageError("train: no train volumes selected");
  ad::ParameterStore<float> params;
  std::mt19937_64 rng(o.cfg.seed);
  model::CascadeModel<float> net(o.cfg.network, params, rng, o.cfg.fusion);
  auto sch = o.cfg.train;
  sch.seed = o.cfg.seed;
  std::ofstream log(stage_dir(o, "train") / "log.jsonl");
  const auto r = model::train_cascade(net, params, train, sch, &log);
  ad::save_checkpoint(stage_dir(o, "train") / "model.ckpt", params);
  auto m = manifest(o, "train");
  m["checkpoint"] = "model.ckpt";
  m["fusion"] = o.cfg.fusion;
  m["samples"] = train.size();
  m["final_loss"] = r.epochs.empty() ? 0.0 : r.epochs.back().loss;
  write_json(stage_dir(o, "train") / "manifest.json", m);
  logstream(o) << "train: " << r.epochs.size() << " epochs on " << train.size() << " volumes\n";
}

void stage_eval(const StageOptions& o) {
  const auto entries = data_entries(o);
  std::optional<json> graphs;
  std::unique_ptr<model::CascadeModel<float>> net;
  ad::ParameterStore<float> params;
  if (!o.predictions) {
    const auto trained = require_manifest(o, "train");
    if (trained.at("fusion").get<bool>() != o.cfg.fusion) {
      throw ConfigError("fusion: config does not match the trained model");
    }
    if (o.cfg.fusion) graphs = require_manifest(o, "graph");
    std::mt19937_64 rng(o.cfg.seed);
    net = std::make_unique<model::CascadeModel<float>>(o.cfg.network, params, rng, o.cfg.fusion);
    ad::load_checkpoint(stage_dir(o, "train") / "model.ckpt", params);
  }
  begin_stage(o, "eval");
  std::vector<std::string> ids;
  for (const auto& e : entries) {
    if (e.train || !selected(o, e.id)) continue;
    if (graphs) require_listed(*graphs, e.id, "graph");
    ids.push_back(e.id);
  }
  std::vector<MetricsReport> reports(ids.size());
  parallel_for(int(ids.size()), [&](int i) {
    const auto& id = ids[std::size_t(i)];
    std::optional<VesselGraph> g;
    if (fs::exists(graph_path(o, id))) g = deserialize_graph(graph_path(o, id));
    SegMask pred;
    if (o.predictions) {
      pred = load_mask(*o.predictions / (id + ".u8"));
    } else {
      const auto s = load_sample(o, id, o.cfg.fusion);
      pred = threshold_mask(model::predict_cascade(*net, s), 0.5f);
    }
    save_volume(pred, pred_path(o, id));
    auto& r = reports[std::size_t(i)];
    r = evaluate_masks(pred, load_mask(mask_path(o, id)), g ? &*g : nullptr);
    std::ofstream(stage_dir(o, "eval") / (id + ".json")) << r.to_json() << "\n";
  });

  auto mean = [&](auto get) -> json {
    double s = 0.0;
    int n = 0;
    for (const auto& r : reports) {
      if (auto v = get(r)) {
        s += *v;
        ++n;
      }
    }
    return n ? json(s / n) : json(nullptr);
  };
  json agg = {{"volumes", ids.size()},
              {"dice", mean([](const MetricsReport& r) { return std::optional<double>(r.dice); })},
              {"assd_mm", mean([](const MetricsReport& r) { return r.assd_mm; })},
              {"sr", mean([](const MetricsReport& r) { return r.sr; })},
              {"sp", mean([](const MetricsReport& r) { return r.sp; })}};
  write_json(stage_dir(o, "eval") / "aggregate.json", agg);
  auto m = manifest(o, "eval");
  m["volumes"] = ids;
  m["source"] = o.predictions ? "predictions" : "model";
  write_json(stage_dir(o, "eval") / "manifest.json", m);
  logstream(o) << "eval: " << agg.dump() << "\n";
}

void write_pgm(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != std::size_t(width) * std::size_t(height)) throw ContractError("pgm: pixel count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), std::streamsize(pixels.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

template <typename F>
std::vector<std::uint8_t> axial_slice(const F& field, int z, double scale) {
  const auto& d = field.dims();
  std::vector<std::uint8_t> px(std::size_t(d.h) * std::size_t(d.w));
  for (int y = 0; y < d.h; ++y) {
    for (int x = 0; x < d.w; ++x) {
      const double v = std::clamp(double(field(z, y, x)) * scale, 0.0, 255.0);
      px[std::size_t(y) * std::size_t(d.w) + std::size_t(x)] = std::uint8_t(std::lround(v));
    }
  }
  return px;
}

}  // namespace

void stage_export_slices(const StageOptions& o) {
  const auto entries = data_entries(o);
  begin_stage(o, "slices");
  std::vector<std::string> written;
  for (const auto& e : entries) {
    if (!selected(o, e.id)) continue;
    const auto vol = load_volume(volume_path(o, e.id));
    const auto mask = load_mask(mask_path(o, e.id));
    const int z = vol.dims().d / 2;
    const auto dir = stage_dir(o, "slices");
    write_pgm(dir / (e.id + "_volume.pgm"), vol.dims().w, vol.dims().h, axial_slice(vol, z, 255.0));
    write_pgm(dir / (e.id + "_gt.pgm"), vol.dims().w, vol.dims().h, axial_slice(mask, z, 255.0));
    if (fs::exists(pred_path(o, e.id))) {
      write_pgm(dir / (e.id + "_pred.pgm"), vol.dims().w, vol.dims().h, axial_slice(load_mask(pred_path(o, e.id)), z, 255.0));
    }
    written.push_back(e.id);
  }
  auto m = manifest(o, "slices");
  m["volumes"] = written;
  write_json(stage_dir(o, "slices") / "manifest.json", m);
  logstream(o) << "export-slices: " << written.size() << " volumes\n";
}

void stage_stats(const StageOptions& o, std::ostream& out) {
  const auto g = require_manifest(o, "graph");
  std::vector<std::string> ids;
  for (const auto& v : g.at("volumes")) {
    if (selected(o, v.get<std::string>())) ids.push_back(v.get<std::string>());
  }
  const int target = g.value("n_segments", o.cfg.resolved_slic().n_segments);
  out << std::left << std::setw(10) << "volume" << std::right << std::setw(8) << "nodes" << std::setw(8) << "edges"
      << std::setw(12) << "mean_deg" << "\n";
  double nodes = 0.0, edges = 0.0, deg = 0.0;
  for (const auto& id : ids) {
    const auto s = graph_stats(deserialize_graph(graph_path(o, id)));
    out << std::left << std::setw(10) << id << std::right << std::setw(8) << s.nodes << std::setw(8) << s.edges
        << std::setw(12) << std::fixed << std::setprecision(2) << s.mean_degree << "\n";
    nodes += double(s.nodes);
    edges += double(s.edges);
    deg += s.mean_degree;
  }
  const double n = double(std::max<std::size_t>(1, ids.size()));
  out << std::left << std::setw(10) << "mean" << std::right << std::setw(8) << std::setprecision(1) << nodes / n
      << std::setw(8) << edges / n << std::setw(12) << std::setprecision(2) << deg / n << "\n";
  out << "target nodes (density-scaled): " << target << "\n";
}

}  // namespace vgseg
