#pragma once

#include <string>
#include <vector>

#include "clipgen/clip.hpp"

namespace sdr::clipgen {

// Clip archive, little-endian:
//   "SDRC" | version u16 | T,C,H,W,count u32 | per clip: video_id u32,
//   label u8, f32 frame data row-major.
void write_archive(const std::string& path, const std::vector<Clip>& clips);
std::vector<Clip> read_archive(const std::string& path);

// CSV manifest with header video_id,label,style,kind,strength,seed.
void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(const std::string& path);

} // namespace sdr::clipgen
