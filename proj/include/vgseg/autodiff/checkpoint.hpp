#pragma once

#include <filesystem>

#include "vgseg/autodiff/tape.hpp"

namespace vgseg::ad {

// Text manifest at `path` (one "PARAM name shape offset" line per parameter)
// plus raw little-endian float32 values at path + ".bin".
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<float>& params);

// Overwrites values of `params` by name. Every parameter must be present with
// the same shape; extra entries in the file are a FormatError.
void load_checkpoint(const std::filesystem::path& path, ParameterStore<float>& params);

}  // namespace vgseg::ad
