#include "vgseg/autodiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace vgseg::ad {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

namespace {

std::filesystem::path payload_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".bin";
  return p;
}

std::string shape_field(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out.empty() ? "scalar" : out;
}

Shape parse_shape(const std::string& f) {
  Shape s;
  if (f == "scalar") return s;
  std::stringstream ss(f);
  std::string part;
  while (std::getline(ss, part, 'x')) s.push_back(std::stoi(part));
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore<float>& params) {
  std::ofstream man(path);
  std::ofstream bin(payload_path(path), std::ios::binary);
  if (!man || !bin) throw IoError("cannot write checkpoint " + path.string());
  man << "VGCKPT v1\n";
  std::int64_t offset = 0;
  for (const auto& p : params) {
    man << "PARAM " << p->name << ' ' << shape_field(p->value.shape()) << ' ' << offset << '\n';
    bin.write(reinterpret_cast<const char*>(p->value.data().data()),
              std::streamsize(p->value.numel() * sizeof(float)));
    offset += p->value.numel();
  }
  if (!man || !bin) throw IoError("short write on checkpoint " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, ParameterStore<float>& params) {
  std::ifstream man(path);
  if (!man) throw IoError("cannot open checkpoint " + path.string());
  std::ifstream bin(payload_path(path), std::ios::binary);
  if (!bin) throw IoError("cannot open checkpoint payload " + payload_path(path).string());
  std::vector<char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  const auto n_floats = std::int64_t(raw.size() / sizeof(float));
  if (raw.size() % sizeof(float)) throw FormatError(path.string() + ": payload length not a multiple of 4");

  std::string line;
  if (!std::getline(man, line) || line != "VGCKPT v1") throw FormatError(path.string() + ":1: bad header");
  std::map<std::string, std::pair<Shape, std::int64_t>> entries;
  int lineno = 1;
  while (std::getline(man, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag, name, shape;
    std::int64_t offset = -1;
    if (!(ls >> tag >> name >> shape >> offset) || tag != "PARAM" || offset < 0) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed entry");
    }
    entries[name] = {parse_shape(shape), offset};
  }
  if (entries.size() != params.size()) {
    throw FormatError(path.string() + ": checkpoint has " + std::to_string(entries.size()) + " parameters, model has " +
                      std::to_string(params.size()));
  }
  for (auto& p : params) {
    auto it = entries.find(p->name);
    if (it == entries.end()) throw FormatError(path.string() + ": missing parameter '" + p->name + "'");
    const auto& [shape, offset] = it->second;
    if (shape != p->value.shape()) {
      throw FormatError(path.string() + ": parameter '" + p->name + "' has shape " + to_string(shape) +
                        ", model expects " + to_string(p->value.shape()));
    }
    if (offset + p->value.numel() > n_floats) throw FormatError(path.string() + ": payload truncated");
    std::memcpy(p->value.data().data(), raw.data() + offset * sizeof(float), p->value.numel() * sizeof(float));
  }
}

}  // namespace vgseg::ad
