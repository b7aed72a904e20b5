#include "vgseg/volume_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace vgseg {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little,
              "raw payloads are little-endian; big-endian hosts are not supported");

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

fs::path resolve_header(const fs::path& payload, const fs::path& header) {
  return header.empty() ? sidecar_path(payload) : header;
}

template <typename T>
std::vector<T> read_payload(const fs::path& payload, const RawHeader& h) {
  std::ifstream in(payload, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open payload " + payload.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  const std::size_t expected = h.dims.size() * sizeof(T);
  if (bytes != expected) {
    throw FormatError("payload " + payload.string() + " holds " + std::to_string(bytes) +
                      " bytes; header dims " + to_string(h.dims) + " require " +
                      std::to_string(expected));
  }
  std::vector<T> values(h.dims.size());
  in.seekg(0);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(expected));
  if (!in) throw IoError("short read on " + payload.string());
  return values;
}

template <typename T>
void write_payload(const fs::path& payload, const T* data, std::size_t n) {
  if (payload.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(payload.parent_path(), ec);
  }
  std::ofstream out(payload, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + payload.string() + " for writing");
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  if (!out) throw IoError("write failed on " + payload.string());
}

void require_nonempty(const Dims& dims) {
  if (dims.empty()) throw ContractError("refusing to write a zero-voxel field");
}

void require_dtype(const RawHeader& h, ElementType want, const fs::path& payload) {
  if (h.dtype != want) {
    throw FormatError(payload.string() + ": expected dtype " + to_string(want) + ", header says " +
                      to_string(h.dtype));
  }
}

template <typename FieldT, typename T>
void save_field(const FieldT& field, const fs::path& payload, ElementType dtype) {
  require_nonempty(field.dims());
  write_header(sidecar_path(payload), RawHeader{field.dims(), field.spacing(), dtype});
  const auto& data = field.data();
  write_payload<T>(payload, data.data(), static_cast<std::size_t>(data.size()));
}

}  // namespace

std::string to_string(ElementType type) {
  switch (type) {
    case ElementType::F32: return "f32";
    case ElementType::U8: return "u8";
    case ElementType::U32: return "u32";
  }
  return "?";
}

fs::path sidecar_path(const fs::path& payload) {
  return fs::path(payload.string() + ".hdr");
}

RawHeader read_header(const fs::path& header) {
  std::ifstream in(header);
  if (!in) throw IoError("cannot open header " + header.string());
  RawHeader h;
  bool have_dims = false;
  bool have_dtype = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(header.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "dims") {
        const auto parts = split(value, ',');
        if (parts.size() != 3) throw FormatError("dims needs three values");
        h.dims = {std::stoi(parts[0]), std::stoi(parts[1]), std::stoi(parts[2])};
        have_dims = true;
      } else if (key == "spacing") {
        const auto parts = split(value, ',');
        if (parts.size() != 3) throw FormatError("spacing needs three values");
        h.spacing = {std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2])};
      } else if (key == "dtype") {
        if (value == "f32") h.dtype = ElementType::F32;
        else if (value == "u8") h.dtype = ElementType::U8;
        else if (value == "u32") h.dtype = ElementType::U32;
        else throw FormatError("unknown dtype '" + value + "'");
        have_dtype = true;
      } else if (key == "order") {
        if (value != "zyx") throw FormatError("unsupported order '" + value + "'");
      } else {
        throw FormatError("unknown key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw FormatError(header.string() + ":" + std::to_string(lineno) + ": bad number in '" +
                        line + "'");
    } catch (const FormatError& e) {
      throw FormatError(header.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_dims || !have_dtype) {
    throw FormatError(header.string() + ": missing dims or dtype");
  }
  if (h.dims.d < 0 || h.dims.h < 0 || h.dims.w < 0) {
    throw FormatError(header.string() + ": negative dims");
  }
  return h;
}

void write_header(const fs::path& header, const RawHeader& h) {
  if (header.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(header.parent_path(), ec);
  }
  std::ofstream out(header, std::ios::trunc);
  if (!out) throw IoError("cannot open " + header.string() + " for writing");
  out.precision(17);
  out << "dims=" << h.dims.d << "," << h.dims.h << "," << h.dims.w << "\n"
      << "spacing=" << h.spacing.z << "," << h.spacing.y << "," << h.spacing.x << "\n"
      << "dtype=" << to_string(h.dtype) << "\n"
      << "order=zyx\n";
  if (!out) throw IoError("write failed on " + header.string());
}

Volume3D load_volume(const fs::path& payload, const fs::path& header) {
  const RawHeader h = read_header(resolve_header(payload, header));
  require_dtype(h, ElementType::F32, payload);
  const auto values = read_payload<float>(payload, h);
  Volume3D vol(h.dims, h.spacing);
  bool in_range = true;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw DataError(payload.string() + ": non-finite value at voxel " + std::to_string(i));
    }
    in_range = in_range && values[i] >= 0.0f && values[i] <= 1.0f;
    vol[i] = values[i];
  }
  if (!in_range) normalize_min_max(vol);
  return vol;
}

ProbabilityMap load_probability(const fs::path& payload, const fs::path& header) {
  const RawHeader h = read_header(resolve_header(payload, header));
  require_dtype(h, ElementType::F32, payload);
  const auto values = read_payload<float>(payload, h);
  ProbabilityMap prob(h.dims, h.spacing);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw DataError(payload.string() + ": non-finite value at voxel " + std::to_string(i));
    }
    prob[i] = values[i];
  }
  return clamp_probabilities(std::move(prob));
}

SegMask load_mask(const fs::path& payload, const fs::path& header) {
  const RawHeader h = read_header(resolve_header(payload, header));
  require_dtype(h, ElementType::U8, payload);
  const auto values = read_payload<std::uint8_t>(payload, h);
  SegMask mask(h.dims, h.spacing);
  std::memcpy(mask.data().data(), values.data(), values.size());
  validate(mask);
  return mask;
}

LabelVolume load_labels(const fs::path& payload, const fs::path& header) {
  const RawHeader h = read_header(resolve_header(payload, header));
  require_dtype(h, ElementType::U32, payload);
  const auto values = read_payload<std::uint32_t>(payload, h);
  LabelVolume labels(h.dims, h.spacing);
  std::memcpy(labels.data().data(), values.data(), values.size() * sizeof(std::uint32_t));
  return labels;
}

void save_volume(const Volume3D& vol, const fs::path& payload) {
  require_nonempty(vol.dims());
  validate(vol);
  save_field<Volume3D, float>(vol, payload, ElementType::F32);
}

void save_volume(const ProbabilityMap& prob, const fs::path& payload) {
  require_nonempty(prob.dims());
  validate(prob);
  save_field<ProbabilityMap, float>(prob, payload, ElementType::F32);
}

void save_volume(const SegMask& mask, const fs::path& payload) {
  require_nonempty(mask.dims());
  validate(mask);
  save_field<SegMask, std::uint8_t>(mask, payload, ElementType::U8);
}

void save_volume(const LabelVolume& labels, const fs::path& payload) {
  save_field<LabelVolume, std::uint32_t>(labels, payload, ElementType::U32);
}

}  // namespace vgseg
