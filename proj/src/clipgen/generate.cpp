#include "clipgen/generate.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "core/parallel.hpp"

namespace sdr::clipgen {

namespace {

struct Palette {
    int pattern; // 0 solid, 1 h-stripes, 2 v-stripes, 3 checker
    int period;  // texture cell size in pixels
    float bg_a[3];
    float bg_b[3];
    float fg[3];
};

// Styles 1..5 share one color pair and one foreground color and differ only
// in spatial arrangement, each covering the frame with the two colors in an
// exact 50/50 split (H, W multiples of 2*period). A model that never mixes
// spatial sites therefore sees the same per-frame value multiset for every
// style; only a spatially-mixing model can tell them apart. Style 0 is a
// plain dark background for object-tracking tests.
constexpr float kBgA[3] = {0.25f, 0.35f, 0.55f};
constexpr float kBgB[3] = {0.55f, 0.35f, 0.25f};
constexpr float kFg[3] = {0.95f, 0.85f, 0.30f};

constexpr Palette kPalettes[] = {
    {0, 4, {0.05f, 0.05f, 0.05f}, {0.05f, 0.05f, 0.05f}, {1.00f, 0.90f, 0.20f}},
    {1, 4, {kBgA[0], kBgA[1], kBgA[2]}, {kBgB[0], kBgB[1], kBgB[2]}, {kFg[0], kFg[1], kFg[2]}},
    {3, 4, {kBgA[0], kBgA[1], kBgA[2]}, {kBgB[0], kBgB[1], kBgB[2]}, {kFg[0], kFg[1], kFg[2]}},
    {2, 4, {kBgA[0], kBgA[1], kBgA[2]}, {kBgB[0], kBgB[1], kBgB[2]}, {kFg[0], kFg[1], kFg[2]}},
    {3, 2, {kBgA[0], kBgA[1], kBgA[2]}, {kBgB[0], kBgB[1], kBgB[2]}, {kFg[0], kFg[1], kFg[2]}},
    {2, 2, {kBgA[0], kBgA[1], kBgA[2]}, {kBgB[0], kBgB[1], kBgB[2]}, {kFg[0], kFg[1], kFg[2]}},
};

const Palette& palette(int id) {
    if (id < 0 || id >= palette_count()) throw ConfigError("palette_id out of range");
    return kPalettes[id];
}

// Axis-aligned coverage of pixel (x..x+1) by interval [lo, hi].
float overlap1d(float lo, float hi, int px) {
    const float a = std::max(lo, static_cast<float>(px));
    const float b = std::min(hi, static_cast<float>(px) + 1.0f);
    return std::max(0.0f, b - a);
}

// Object coverage in [0,1] of one pixel for an object centered at (cx, cy).
float coverage(const MotionSpec& m, float cx, float cy, int px, int py) {
    const float half = m.extent * 0.5f;
    if (m.kind == ObjectKind::Rectangle) {
        return overlap1d(cx - half, cx + half, px) * overlap1d(cy - half, cy + half, py);
    }
    // blob: gaussian falloff sampled at the pixel center
    const float dx = static_cast<float>(px) + 0.5f - cx;
    const float dy = static_cast<float>(py) + 0.5f - cy;
    const float sigma = std::max(0.5f, half * 0.6f);
    return std::exp(-(dx * dx + dy * dy) / (2.0f * sigma * sigma));
}

void render_frame(Clip& clip, int frame, const StyleSpec& style, const MotionSpec& motion,
                  float cx, float cy, float fg_scale, core::Rng& noise_rng) {
    const Palette& pal = palette(style.palette_id);
    for (int y = 0; y < clip.h; ++y) {
        for (int x = 0; x < clip.w; ++x) {
            const float a = std::min(1.0f, coverage(motion, cx, cy, x, y));
            for (int ci = 0; ci < clip.c; ++ci) {
                const float bg = background_value(style.palette_id, ci, y, x);
                const float fg = std::min(1.0f, std::max(0.0f, pal.fg[ci % 3] * fg_scale));
                float v = bg * (1.0f - a) + fg * a;
                if (style.noise_floor > 0.0f) {
                    v += style.noise_floor * (2.0f * static_cast<float>(noise_rng.next_double()) - 1.0f);
                }
                clip.at(frame, ci, y, x) = std::min(1.0f, std::max(0.0f, v));
            }
        }
    }
}

void check_trajectory(const MotionSpec& m, int t, int h, int w) {
    const float half = m.extent * 0.5f;
    for (int ti = 0; ti < t; ++ti) {
        const float cx = m.x0 + static_cast<float>(ti) * m.vx;
        const float cy = m.y0 + static_cast<float>(ti) * m.vy;
        if (cx - half < 0 || cx + half > static_cast<float>(w) ||
            cy - half < 0 || cy + half > static_cast<float>(h)) {
            throw ConfigError("object trajectory exits frame bounds at frame " + std::to_string(ti));
        }
    }
}

Clip render_clip(std::uint64_t seed, const StyleSpec& style, const MotionSpec& motion,
                 int t, int c, int h, int w,
                 FakeKind kind, float strength, bool fake) {
    if (style.noise_floor < 0.0f || style.noise_floor > 0.05f) {
        throw ConfigError("noise_floor must lie in [0, 0.05]");
    }
    check_trajectory(motion, t, h, w);
    Clip clip(t, c, h, w);
    clip.label = fake ? 1 : 0;

    // Independent child streams so the rendered pixels of a real clip and
    // its strength->0 fake twin coincide.
    core::Rng base(seed);
    core::Rng noise_rng = base.fork(1);
    core::Rng jitter_rng = base.fork(2);
    core::Rng flicker_rng = base.fork(3);
    core::Rng swap_rng = base.fork(4);

    for (int ti = 0; ti < t; ++ti) {
        float cx = motion.x0 + static_cast<float>(ti) * motion.vx;
        float cy = motion.y0 + static_cast<float>(ti) * motion.vy;
        float fg_scale = 1.0f;
        if (fake && kind == FakeKind::PositionJitter) {
            cx += static_cast<float>(jitter_rng.normal(strength));
            cy += static_cast<float>(jitter_rng.normal(strength));
        }
        if (fake && kind == FakeKind::AppearanceFlicker) {
            fg_scale = 1.0f + static_cast<float>(flicker_rng.normal(strength));
        }
        render_frame(clip, ti, style, motion, cx, cy, fg_scale, noise_rng);
    }

    if (fake && kind == FakeKind::LocalFrameSwap) {
        const int swaps = static_cast<int>(strength);
        for (int i = 0; i < swaps; ++i) {
            const int a = swap_rng.uniform_int(0, t - 2);
            for (std::size_t j = 0; j < clip.frame_size(); ++j) {
                std::swap(clip.data[static_cast<std::size_t>(a) * clip.frame_size() + j],
                          clip.data[(static_cast<std::size_t>(a) + 1) * clip.frame_size() + j]);
            }
        }
    }
    return clip;
}

} // namespace

int palette_count() { return static_cast<int>(sizeof(kPalettes) / sizeof(kPalettes[0])); }

float background_value(int palette_id, int channel, int y, int x) {
    const Palette& pal = palette(palette_id);
    bool alt = false;
    switch (pal.pattern) {
        case 0: alt = false; break;
        case 1: alt = (y / pal.period) % 2 == 1; break;
        case 2: alt = (x / pal.period) % 2 == 1; break;
        case 3: alt = ((x / pal.period) + (y / pal.period)) % 2 == 1; break;
        default: break;
    }
    return alt ? pal.bg_b[channel % 3] : pal.bg_a[channel % 3];
}

float foreground_value(int palette_id, int channel) {
    return palette(palette_id).fg[channel % 3];
}

Clip gen_real_clip(std::uint64_t seed, const StyleSpec& style, const MotionSpec& motion,
                   int t, int c, int h, int w) {
    if (motion.jitter_sigma != 0.0f) {
        throw ConfigError("gen_real_clip: jitter_sigma must be 0 for real clips");
    }
    return render_clip(seed, style, motion, t, c, h, w, FakeKind::PositionJitter, 0.0f, false);
}

Clip gen_fake_clip(std::uint64_t seed, const StyleSpec& style, const MotionSpec& motion,
                   FakeKind kind, float strength, int t, int c, int h, int w) {
    if (!(strength > 0.0f)) throw ConfigError("gen_fake_clip: strength must be positive");
    return render_clip(seed, style, motion, t, c, h, w, kind, strength, true);
}

MotionSpec sample_motion(core::Rng& rng, int t, int h, int w) {
    const int side = std::min(h, w);
    MotionSpec m;
    m.kind = rng.coin() ? ObjectKind::Rectangle : ObjectKind::Blob;
    m.extent = static_cast<float>(
        std::min<double>(side, rng.uniform(std::max(2.0, side / 5.0), std::max(3.0, side / 3.0))));
    const float half = m.extent * 0.5f;
    // Retry with progressively slower motion; a static object always fits.
    for (int attempt = 0;; ++attempt) {
        const double angle = rng.uniform(0.0, 6.283185307179586);
        double speed;
        if (attempt < 64) {
            speed = rng.uniform(0.3, 1.2);
        } else if (attempt < 128) {
            speed = rng.uniform(0.0, 0.4);
        } else {
            speed = 0.0;
        }
        m.vx = static_cast<float>(speed * std::cos(angle));
        m.vy = static_cast<float>(speed * std::sin(angle));
        const float travel_x = m.vx * static_cast<float>(t - 1);
        const float travel_y = m.vy * static_cast<float>(t - 1);
        const float lo_x = half + std::max(0.0f, -travel_x);
        const float hi_x = static_cast<float>(w) - half - std::max(0.0f, travel_x);
        const float lo_y = half + std::max(0.0f, -travel_y);
        const float hi_y = static_cast<float>(h) - half - std::max(0.0f, travel_y);
        if (lo_x > hi_x || lo_y > hi_y) continue;
        m.x0 = static_cast<float>(rng.uniform(lo_x, hi_x));
        m.y0 = static_cast<float>(rng.uniform(lo_y, hi_y));
        return m;
    }
}

std::pair<std::vector<Clip>, std::vector<ManifestRow>> gen_dataset(const DatasetSpec& spec) {
    if (spec.cells.empty()) throw ConfigError("dataset spec has no cells");
    for (const auto& cell : spec.cells) {
        if (cell.count < 1) throw ConfigError("dataset cell count must be >= 1");
        if (cell.style < 0 || cell.style >= palette_count()) {
            throw ConfigError("dataset cell style out of palette range");
        }
    }
    struct Slot {
        std::size_t cell_idx;
        int j;
    };
    std::vector<Slot> slots;
    for (std::size_t cell_idx = 0; cell_idx < spec.cells.size(); ++cell_idx) {
        for (int j = 0; j < spec.cells[cell_idx].count; ++j) slots.push_back({cell_idx, j});
    }
    std::vector<Clip> clips(slots.size());
    std::vector<ManifestRow> manifest(slots.size());
    const core::Rng root(spec.seed);
    // per-clip seeds derive from (cell, index) alone, so assembly order is
    // fixed no matter how the work is split
    core::parallel_for(static_cast<std::int64_t>(slots.size()), [&](std::int64_t i) {
        const auto [cell_idx, j] = slots[static_cast<std::size_t>(i)];
        const DatasetCell& cell = spec.cells[cell_idx];
        core::Rng clip_rng = root.fork((cell_idx << 24) ^ static_cast<std::uint64_t>(j));
        const std::uint64_t clip_seed = clip_rng.next_u64();
        MotionSpec motion = sample_motion(clip_rng, spec.t, spec.h, spec.w);
        StyleSpec style{cell.style, spec.noise_floor};
        Clip clip = cell.label == 0
            ? gen_real_clip(clip_seed, style, motion, spec.t, spec.c, spec.h, spec.w)
            : gen_fake_clip(clip_seed, style, motion, spec.kind, spec.strength,
                            spec.t, spec.c, spec.h, spec.w);
        clip.video_id = static_cast<std::uint32_t>(i);
        ManifestRow row;
        row.video_id = clip.video_id;
        row.label = cell.label;
        row.style = cell.style;
        row.kind = cell.label == 0 ? "none" : fake_kind_name(spec.kind);
        row.strength = cell.label == 0 ? 0.0f : spec.strength;
        row.seed = clip_seed;
        clips[static_cast<std::size_t>(i)] = std::move(clip);
        manifest[static_cast<std::size_t>(i)] = std::move(row);
    });
    return {std::move(clips), std::move(manifest)};
}

} // namespace sdr::clipgen
