#pragma once

#include <string>
#include <utility>
#include <vector>

#include "core/params.hpp"

namespace sdr::train {

// Checkpoint file, little-endian:
//   "SDR1" | version u16 | per tensor: name_len u16, name bytes, rank u8,
//   dims u32 each, f32 data | crc32 u32 over all preceding bytes.
void save_checkpoint(const std::string& path, const core::ParamStore<float>& params);

// Name/tensor pairs in file order; throws IoError on CRC mismatch.
std::vector<std::pair<std::string, core::Tensor<float>>> load_checkpoint(const std::string& path);

// Restores values into an already-initialized store; names and dims must
// match exactly.
void restore_params(core::ParamStore<float>& params, const std::string& path);

} // namespace sdr::train
