#include "vgseg/config.hpp"

#include <fstream>
#include <set>

namespace vgseg {

namespace {

using nlohmann::json;

// Reads the members of one JSON object, rejecting keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + " must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + where(k) + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + where(key) + "' has the wrong type");
    }
  }

  template <typename Fn>
  void object(const char* key, Fn&& fn) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Reader sub(j_.at(key), where(key));
    fn(sub);
  }

  std::string where(const std::string& key) const {
    if (path_.empty()) return key;
    return key.empty() ? path_ : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_dims(Reader& r, const char* key, Dims& d) {
  std::vector<int> v{d.d, d.h, d.w};
  r.get(key, v);
  if (v.size() != 3) throw ConfigError("config key '" + r.where(key) + "' needs 3 entries");
  d = {v[0], v[1], v[2]};
}

void read_schedule(Reader& r, model::TrainSchedule& s) {
  r.get("epochs", s.epochs);
  r.get("lr", s.lr);
  r.get("lr_step_epochs", s.lr_step_epochs);
  r.get("lr_gamma", s.lr_gamma);
  r.get("weight_decay", s.weight_decay);
  r.get("beta", s.beta);
  r.get("lambda", s.lambda);
}

json schedule_json(const model::TrainSchedule& s) {
  return {{"epochs", s.epochs}, {"lr", s.lr},         {"lr_step_epochs", s.lr_step_epochs}, {"lr_gamma", s.lr_gamma},
          {"weight_decay", s.weight_decay}, {"beta", s.beta}, {"lambda", s.lambda}};
}

}  // namespace

void RunConfig::validate() const {
  if (dataset.count < 2) throw ConfigError("dataset.count must be >= 2");
  if (dataset.train < 1 || dataset.train >= dataset.count) {
    throw ConfigError("dataset.train must be in [1, dataset.count)");
  }
  try {
    phantom.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("phantom: ") + e.what());
  }
  try {
    resolved_slic().validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("slic: ") + e.what());
  }
  try {
    resolved_graph().validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("graph: ") + e.what());
  }
  network.validate();
  if (!(network.input == phantom.dims)) throw ConfigError("network.input must equal phantom.dims");
  if (preseg.dilation_kernel < 1 || preseg.dilation_kernel % 2 == 0) {
    throw ConfigError("preseg.dilation_kernel must be odd and >= 1");
  }
  if (!(preseg.tau > 0.0 && preseg.tau < 1.0)) throw ConfigError("preseg.tau must be in (0, 1)");
  preseg.schedule.validate();
  train.validate();
}

SlicParams RunConfig::resolved_slic() const {
  SlicParams s = slic;
  if (s.n_segments <= 0) s.n_segments = desk_n_segments(phantom.dims);
  return s;
}

GraphBuildParams RunConfig::resolved_graph() const {
  GraphBuildParams g = graph;
  if (g.candidate_radius <= 0.0) g.candidate_radius = default_candidate_radius(phantom.dims, resolved_slic().n_segments);
  return g;
}

RunConfig parse_config(const json& j) {
  RunConfig c;
  Reader root(j, "");
  root.get("seed", c.seed);
  root.get("fusion", c.fusion);
  root.object("dataset", [&](Reader& r) {
    r.get("count", c.dataset.count);
    r.get("train", c.dataset.train);
  });
  root.object("phantom", [&](Reader& r) {
    auto& p = c.phantom;
    read_dims(r, "dims", p.dims);
    std::vector<double> sp{p.spacing.z, p.spacing.y, p.spacing.x};
    r.get("spacing", sp);
    if (sp.size() != 3) throw ConfigError("config key 'phantom.spacing' needs 3 entries");
    p.spacing = {sp[0], sp[1], sp[2]};
    r.get("tubes_min", p.tubes_min);
    r.get("tubes_max", p.tubes_max);
    r.get("radius_min", p.radius_min);
    r.get("radius_max", p.radius_max);
    r.get("branch_prob", p.branch_prob);
    r.get("background", p.background);
    r.get("contrast", p.contrast);
    r.get("noise_std", p.noise_std);
    r.get("tortuosity", p.tortuosity);
    std::string orient = p.orientation == TubeOrientation::Axial ? "axial" : "random";
    r.get("orientation", orient);
    if (orient != "axial" && orient != "random") throw ConfigError("phantom.orientation must be 'random' or 'axial'");
    p.orientation = orient == "axial" ? TubeOrientation::Axial : TubeOrientation::Random;
  });
  c.network.input = c.phantom.dims;
  root.object("slic", [&](Reader& r) {
    r.get("n_segments", c.slic.n_segments);
    r.get("min_size_factor", c.slic.min_size_factor);
    r.get("iterations", c.slic.iterations);
    r.get("search_radius_factor", c.slic.search_radius_factor);
  });
  root.object("graph", [&](Reader& r) {
    r.get("t_geo", c.graph.t_geo);
    r.get("candidate_radius", c.graph.candidate_radius);
  });
  root.object("network", [&](Reader& r) {
    r.get("levels", c.network.levels);
    r.get("base_channels", c.network.base_channels);
    r.get("node_dim", c.network.node_dim);
    r.get("k", c.network.k);
    r.get("pool_ratio", c.network.pool_ratio);
    std::string up = c.network.upsample == ad::Upsample::Nearest ? "nearest" : "trilinear";
    r.get("upsample", up);
    if (up != "nearest" && up != "trilinear") throw ConfigError("network.upsample must be 'nearest' or 'trilinear'");
    c.network.upsample = up == "nearest" ? ad::Upsample::Nearest : ad::Upsample::Trilinear;
  });
  root.object("preseg", [&](Reader& r) {
    r.get("dilation_kernel", c.preseg.dilation_kernel);
    r.get("tau", c.preseg.tau);
    r.object("schedule", [&](Reader& s) { read_schedule(s, c.preseg.schedule); });
  });
  root.object("train", [&](Reader& r) { read_schedule(r, c.train); });
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const RunConfig& c) {
  const auto& p = c.phantom;
  const auto slic = c.resolved_slic();
  const auto graph = c.resolved_graph();
  return {
      {"seed", c.seed},
      {"fusion", c.fusion},
      {"dataset", {{"count", c.dataset.count}, {"train", c.dataset.train}}},
      {"phantom",
       {{"dims", {p.dims.d, p.dims.h, p.dims.w}},
        {"spacing", {p.spacing.z, p.spacing.y, p.spacing.x}},
        {"tubes_min", p.tubes_min},
        {"tubes_max", p.tubes_max},
        {"radius_min", p.radius_min},
        {"radius_max", p.radius_max},
        {"branch_prob", p.branch_prob},
        {"background", p.background},
        {"contrast", p.contrast},
        {"noise_std", p.noise_std},
        {"tortuosity", p.tortuosity},
        {"orientation", p.orientation == TubeOrientation::Axial ? "axial" : "random"}}},
      {"slic",
       {{"n_segments", slic.n_segments},
        {"min_size_factor", slic.min_size_factor},
        {"iterations", slic.iterations},
        {"search_radius_factor", slic.search_radius_factor}}},
      {"graph", {{"t_geo", graph.t_geo}, {"candidate_radius", graph.candidate_radius}}},
      {"network",
       {{"levels", c.network.levels},
        {"base_channels", c.network.base_channels},
        {"node_dim", c.network.node_dim},
        {"k", c.network.k},
        {"pool_ratio", c.network.pool_ratio},
        {"upsample", c.network.upsample == ad::Upsample::Nearest ? "nearest" : "trilinear"}}},
      {"preseg",
       {{"dilation_kernel", c.preseg.dilation_kernel},
        {"tau", c.preseg.tau},
        {"schedule", schedule_json(c.preseg.schedule)}}},
      {"train", schedule_json(c.train)},
  };
}

}  // namespace vgseg
