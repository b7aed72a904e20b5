#include "vgseg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "vgseg/geodesic.hpp"

namespace vgseg {

namespace {

Voxel centroid_voxel(const Eigen::Vector3f& c, const Dims& dims) {
  return {std::clamp(int(std::lround(c[0])), 0, dims.d - 1),
          std::clamp(int(std::lround(c[1])), 0, dims.h - 1),
          std::clamp(int(std::lround(c[2])), 0, dims.w - 1)};
}

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

[[noreturn]] void bad_line(const std::string& source, int lineno, const std::string& what) {
  throw FormatError(source + ":" + std::to_string(lineno) + ": " + what);
}

}  // namespace

void GraphBuildParams::validate() const {
  if (!(t_geo > 0.0)) throw ParameterError("t_geo must be > 0");
  if (!(candidate_radius > 0.0)) throw ParameterError("candidate_radius must be > 0");
}

double default_candidate_radius(const Dims& dims, int n_segments) {
  return 3.0 * std::cbrt(double(dims.size()) / double(std::max(1, n_segments)));
}

std::vector<Eigen::Vector3d> VesselGraph::centroids() const {
  std::vector<Eigen::Vector3d> out;
  out.reserve(nodes.size());
  for (const auto& n : nodes) out.push_back(n.centroid.cast<double>());
  return out;
}

std::uint64_t params_hash(const SlicParams& slic, const GraphBuildParams& build) {
  std::ostringstream s;
  s.precision(17);
  s << slic.n_segments << ' ' << slic.min_size_factor << ' ' << slic.iterations << ' '
    << slic.search_radius_factor << ' ' << build.t_geo << ' ' << build.candidate_radius;
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s.str()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<NodeRecord> nodes_from_supervoxels(const SupervoxelMap& map, const Volume3D& vol,
                                               const ProbabilityMap& prob) {
  require_same_grid(map.labels, vol, "nodes_from_supervoxels");
  require_same_grid(map.labels, prob, "nodes_from_supervoxels");
  const auto k = std::size_t(map.count);
  std::vector<Eigen::Vector3d> pos(k, Eigen::Vector3d::Zero());
  std::vector<double> gray(k, 0.0), mass(k, 0.0);
  std::vector<std::int64_t> size(k, 0);
  const Dims& dims = vol.dims();
  for (std::size_t i = 0; i < vol.size(); ++i) {
    const auto l = map.labels[i];
    if (l >= k) throw ContractError("nodes_from_supervoxels: label out of range");
    const auto c = dims.coords(i);
    pos[l] += Eigen::Vector3d(c[0], c[1], c[2]);
    gray[l] += vol[i];
    mass[l] += prob[i];
    ++size[l];
  }
  std::vector<NodeRecord> nodes(k);
  for (std::size_t l = 0; l < k; ++l) {
    if (size[l] == 0) throw ContractError("nodes_from_supervoxels: empty supervoxel " + std::to_string(l));
    nodes[l].id = std::int32_t(l);
    nodes[l].centroid = (pos[l] / double(size[l])).cast<float>();
    nodes[l].size = size[l];
    nodes[l].mean_gray = float(gray[l] / double(size[l]));
    nodes[l].prob_mass = float(mass[l]);
  }
  return nodes;
}

std::vector<EdgeRecord> connect_edges(const std::vector<NodeRecord>& nodes, const Volume3D& vol,
                                      const SegMask& mask, const ProbabilityMap& prob,
                                      const GraphBuildParams& params) {
  params.validate();
  if (nodes.empty()) throw ParameterError("connect_edges: no nodes");
  const Dims& dims = vol.dims();
  const GeodesicCost cost(vol, mask, prob, GeodesicMode::EdgeConnect);
  WindowedGeodesic geo(cost);
  const int radius = int(std::ceil(params.candidate_radius));
  const double r2 = params.candidate_radius * params.candidate_radius;

  std::map<std::pair<std::int32_t, std::int32_t>, float> best;
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    const Voxel seed = centroid_voxel(nodes[a].centroid, dims);
    geo.run(seed, Box::around(seed, radius, dims), params.t_geo);
    for (std::size_t b = 0; b < nodes.size(); ++b) {
      if (a == b) continue;
      if ((nodes[b].centroid - nodes[a].centroid).cast<double>().squaredNorm() > r2) continue;
      const Voxel target = centroid_voxel(nodes[b].centroid, dims);
      const double d = geo.at(target.z, target.y, target.x);
      if (!(d < params.t_geo)) continue;
      const auto key = std::minmax(nodes[a].id, nodes[b].id);
      auto [it, inserted] = best.try_emplace({key.first, key.second}, float(d));
      if (!inserted) it->second = std::min(it->second, float(d));
    }
  }
  std::vector<EdgeRecord> edges;
  edges.reserve(best.size());
  for (const auto& [key, d] : best) edges.push_back({key.first, key.second, d});
  return edges;
}

VesselGraph build_graph(const Volume3D& vol, const SegMask& mask, const ProbabilityMap& prob,
                        const SlicParams& slic, const GraphBuildParams& build) {
  const auto map = run_slic(vol, prob, mask, slic);
  VesselGraph g;
  g.dims = vol.dims();
  g.params_hash = params_hash(slic, build);
  g.nodes = nodes_from_supervoxels(map, vol, prob);
  g.edges = connect_edges(g.nodes, vol, mask, prob, build);
  return g;
}

template <typename Scalar>
MatrixX<Scalar> node_gray_features(const Volume3D& vol, const SegMask& mask,
                                   const ProbabilityMap& prob, const VesselGraph& graph,
                                   const MappingPair<Scalar>& mapping) {
  require_same_grid(vol, mask, "node_gray_features");
  require_same_grid(vol, prob, "node_gray_features");
  if (mapping.nodes() != graph.nodes.size()) {
    throw ContractError("node_gray_features: mapping has " + std::to_string(mapping.nodes()) +
                        " nodes, graph has " + std::to_string(graph.nodes.size()));
  }
  if (mapping.cells() != vol.size()) {
    throw ContractError("node_gray_features: mapping is not built on the level-0 grid");
  }
  MatrixX<Scalar> f(Eigen::Index(vol.size()), 1);
  for (std::size_t i = 0; i < vol.size(); ++i) {
    f(Eigen::Index(i), 0) = Scalar(vol[i]) * Scalar(mask[i]) * Scalar(prob[i]);
  }
  return forward_map(f, mapping);
}

template MatrixX<float> node_gray_features(const Volume3D&, const SegMask&, const ProbabilityMap&,
                                           const VesselGraph&, const MappingPair<float>&);
template MatrixX<double> node_gray_features(const Volume3D&, const SegMask&, const ProbabilityMap&,
                                            const VesselGraph&, const MappingPair<double>&);

void write_graph(std::ostream& out, const VesselGraph& g) {
  out << "VGRAPH v1\n"
      << "DIMS " << g.dims.d << ' ' << g.dims.h << ' ' << g.dims.w << '\n'
      << "NODES " << g.nodes.size() << '\n'
      << "EDGES " << g.edges.size() << '\n';
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(g.params_hash));
  out << "# params " << hash << '\n';
  for (const auto& n : g.nodes) {
    out << "NODE " << n.id << ' ' << fmt9(n.centroid[2]) << ' ' << fmt9(n.centroid[1]) << ' '
        << fmt9(n.centroid[0]) << ' ' << n.size << ' ' << fmt9(n.mean_gray) << ' '
        << fmt9(n.prob_mass) << '\n';
  }
  for (const auto& e : g.edges) {
    out << "EDGE " << e.i << ' ' << e.j << ' ' << fmt9(e.d_geo) << '\n';
  }
}

VesselGraph read_graph(std::istream& in, const std::string& source) {
  VesselGraph g;
  std::string line;
  int lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line.rfind("# params ", 0) == 0) {
        g.params_hash = std::stoull(line.substr(9), nullptr, 16);
        continue;
      }
      if (line[0] == '#') continue;
      return true;
    }
    return false;
  };
  auto expect_header = [&](const char* key) -> std::istringstream {
    if (!next_line()) bad_line(source, lineno, std::string("missing ") + key + " line");
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag != key) bad_line(source, lineno, std::string("expected ") + key + ", got '" + tag + "'");
    return ss;
  };

  {
    auto ss = expect_header("VGRAPH");
    std::string version;
    ss >> version;
    if (version != "v1") bad_line(source, lineno, "unsupported version '" + version + "'");
  }
  {
    auto ss = expect_header("DIMS");
    if (!(ss >> g.dims.d >> g.dims.h >> g.dims.w)) bad_line(source, lineno, "malformed DIMS");
  }
  std::int64_t n_nodes = 0, n_edges = 0;
  {
    auto ss = expect_header("NODES");
    if (!(ss >> n_nodes) || n_nodes < 0) bad_line(source, lineno, "malformed NODES");
  }
  {
    auto ss = expect_header("EDGES");
    if (!(ss >> n_edges) || n_edges < 0) bad_line(source, lineno, "malformed EDGES");
  }
  g.nodes.reserve(std::size_t(n_nodes));
  for (std::int64_t k = 0; k < n_nodes; ++k) {
    auto ss = expect_header("NODE");
    NodeRecord n;
    float cx = 0, cy = 0, cz = 0;
    if (!(ss >> n.id >> cx >> cy >> cz >> n.size >> n.mean_gray >> n.prob_mass)) {
      bad_line(source, lineno, "malformed NODE");
    }
    if (n.id != k) bad_line(source, lineno, "node ids must be consecutive from 0");
    if (n.size < 1) bad_line(source, lineno, "node size must be >= 1");
    n.centroid = {cz, cy, cx};
    g.nodes.push_back(n);
  }
  g.edges.reserve(std::size_t(n_edges));
  for (std::int64_t k = 0; k < n_edges; ++k) {
    auto ss = expect_header("EDGE");
    EdgeRecord e;
    if (!(ss >> e.i >> e.j >> e.d_geo)) bad_line(source, lineno, "malformed EDGE");
    if (e.i < 0 || e.j < 0 || e.i >= n_nodes || e.j >= n_nodes) {
      bad_line(source, lineno, "edge references unknown node");
    }
    if (e.i >= e.j) bad_line(source, lineno, "edge endpoints must satisfy i < j");
    if (!g.edges.empty() && std::pair(g.edges.back().i, g.edges.back().j) >= std::pair(e.i, e.j)) {
      bad_line(source, lineno, "edges must be sorted and unique");
    }
    g.edges.push_back(e);
  }
  if (next_line()) bad_line(source, lineno, "trailing content");
  return g;
}

void serialize_graph(const VesselGraph& g, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_graph(out, g);
  if (!out) throw IoError("write failed on " + path.string());
}

VesselGraph deserialize_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open graph " + path.string());
  return read_graph(in, path.string());
}

}  // namespace vgseg
