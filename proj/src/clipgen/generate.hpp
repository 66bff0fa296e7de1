#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "clipgen/clip.hpp"
#include "core/rng.hpp"

namespace sdr::clipgen {

int palette_count();

// Background color of one pixel under a palette; channel index wraps for C != 3.
float background_value(int palette_id, int channel, int y, int x);
// Foreground (object) color under a palette.
float foreground_value(int palette_id, int channel);

// Temporally smooth clip: object moves on a straight line over a static
// textured background. The nominal trajectory must keep the object inside
// the frame for all T frames.
Clip gen_real_clip(std::uint64_t seed, const StyleSpec& style, const MotionSpec& motion,
                   int t, int c, int h, int w);

// Same rendering, then one per-frame-independent perturbation of the given
// kind. strength must be positive.
Clip gen_fake_clip(std::uint64_t seed, const StyleSpec& style, const MotionSpec& motion,
                   FakeKind kind, float strength, int t, int c, int h, int w);

// Deterministic motion sample whose trajectory fits the frame.
MotionSpec sample_motion(core::Rng& rng, int t, int h, int w);

// Cell-by-cell dataset generation; a pure function of the spec.
std::pair<std::vector<Clip>, std::vector<ManifestRow>> gen_dataset(const DatasetSpec& spec);

} // namespace sdr::clipgen
