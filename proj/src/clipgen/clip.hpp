#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/errors.hpp"

namespace sdr::clipgen {

// One video sample: [T, C, H, W] pixels in [0,1], row-major.
struct Clip {
    int t = 0, c = 0, h = 0, w = 0;
    std::vector<float> data;
    std::uint8_t label = 0; // 0 = real, 1 = fake
    std::uint32_t video_id = 0;

    Clip() = default;
    Clip(int t_, int c_, int h_, int w_)
        : t(t_), c(c_), h(h_), w(w_),
          data(static_cast<std::size_t>(t_) * c_ * h_ * w_, 0.0f) {
        if (t_ < 2) throw ConfigError("clip needs at least 2 frames");
        if (c_ < 1 || h_ < 1 || w_ < 1) throw ConfigError("clip dims must be positive");
    }

    float& at(int ti, int ci, int yi, int xi) {
        return data[((static_cast<std::size_t>(ti) * c + ci) * h + yi) * w + xi];
    }
    float at(int ti, int ci, int yi, int xi) const {
        return data[((static_cast<std::size_t>(ti) * c + ci) * h + yi) * w + xi];
    }

    std::size_t frame_size() const { return static_cast<std::size_t>(c) * h * w; }
};

// Spatial style axis: background texture + foreground color, plus a pixel
// noise floor. Deliberately orthogonal to motion.
struct StyleSpec {
    int palette_id = 0;
    float noise_floor = 0.0f; // additive uniform noise amplitude, <= 0.05
};

enum class ObjectKind { Blob, Rectangle };

// Nominal motion: p_t = p0 + t*v, object of the given extent. jitter_sigma
// stays 0 for real clips.
struct MotionSpec {
    ObjectKind kind = ObjectKind::Rectangle;
    float x0 = 0, y0 = 0;   // initial center
    float vx = 0, vy = 0;   // per-frame velocity
    float extent = 4.0f;    // rectangle side / blob diameter, px
    float jitter_sigma = 0.0f;
};

enum class FakeKind { PositionJitter, AppearanceFlicker, LocalFrameSwap };

inline const char* fake_kind_name(FakeKind k) {
    switch (k) {
        case FakeKind::PositionJitter: return "position_jitter";
        case FakeKind::AppearanceFlicker: return "appearance_flicker";
        case FakeKind::LocalFrameSwap: return "local_frame_swap";
    }
    return "?";
}

inline FakeKind fake_kind_from_name(const std::string& s) {
    if (s == "position_jitter") return FakeKind::PositionJitter;
    if (s == "appearance_flicker") return FakeKind::AppearanceFlicker;
    if (s == "local_frame_swap") return FakeKind::LocalFrameSwap;
    throw ConfigError("unknown temporal inconsistency kind: " + s);
}

struct DatasetCell {
    std::uint8_t label = 0;
    int style = 0;
    int count = 0;
};

struct DatasetSpec {
    int t = 8, c = 3, h = 16, w = 16;
    std::uint64_t seed = 0;
    float noise_floor = 0.01f;
    FakeKind kind = FakeKind::PositionJitter;
    float strength = 2.0f;
    std::vector<DatasetCell> cells;
};

struct ManifestRow {
    std::uint32_t video_id;
    std::uint8_t label;
    int style;
    std::string kind; // "none" for real clips
    float strength;
    std::uint64_t seed;
};

} // namespace sdr::clipgen
