#pragma once

#include <filesystem>
#include <string>

#include "vgseg/volume.hpp"

namespace vgseg {

enum class ElementType { F32, U8, U32 };

std::string to_string(ElementType type);

// Contents of the text sidecar that accompanies every raw payload:
//   dims=D,H,W
//   spacing=sz,sy,sx
//   dtype=f32|u8|u32
//   order=zyx
struct RawHeader {
  Dims dims;
  Spacing spacing;
  ElementType dtype = ElementType::F32;
};

// "<payload>.hdr"
std::filesystem::path sidecar_path(const std::filesystem::path& payload);

RawHeader read_header(const std::filesystem::path& header);
void write_header(const std::filesystem::path& header, const RawHeader& h);

// Loads an f32 payload. Values outside [0, 1] trigger a per-volume min-max
// rescale; NaN/Inf raise DataError. An empty header path means the default
// sidecar next to the payload.
Volume3D load_volume(const std::filesystem::path& payload,
                     const std::filesystem::path& header = {});
ProbabilityMap load_probability(const std::filesystem::path& payload,
                                const std::filesystem::path& header = {});
SegMask load_mask(const std::filesystem::path& payload,
                  const std::filesystem::path& header = {});
LabelVolume load_labels(const std::filesystem::path& payload,
                        const std::filesystem::path& header = {});

// Writes payload plus sidecar. Floats are written bit-exactly; masks as u8,
// label maps as u32. Degenerate (zero-voxel) fields are rejected.
void save_volume(const Volume3D& vol, const std::filesystem::path& payload);
void save_volume(const ProbabilityMap& prob, const std::filesystem::path& payload);
void save_volume(const SegMask& mask, const std::filesystem::path& payload);
void save_volume(const LabelVolume& labels, const std::filesystem::path& payload);

}  // namespace vgseg
