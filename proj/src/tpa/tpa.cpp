#include "tpa/tpa.hpp"

#include <algorithm>
#include <cmath>

namespace sdr::tpa {

namespace {

constexpr float kCutoutFill = 0.5f;

float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

void color_jitter_frame(const Clip& in, Clip& out, int t, const AugParams& p) {
    for (int c = 0; c < in.c; ++c) {
        const float g = p.gain[static_cast<std::size_t>(c)];
        const float b = p.bias[static_cast<std::size_t>(c)];
        for (int y = 0; y < in.h; ++y)
            for (int x = 0; x < in.w; ++x) out.at(t, c, y, x) = clamp01(g * in.at(t, c, y, x) + b);
    }
}

void cutout_frame(Clip& clip, int t, const AugParams& p) {
    for (int c = 0; c < clip.c; ++c)
        for (int y = p.y; y < p.y + p.h; ++y)
            for (int x = p.x; x < p.x + p.w; ++x) clip.at(t, c, y, x) = kCutoutFill;
}

void flip_frame(const Clip& in, Clip& out, int t) {
    for (int c = 0; c < in.c; ++c)
        for (int y = 0; y < in.h; ++y)
            for (int x = 0; x < in.w; ++x) out.at(t, c, y, x) = in.at(t, c, y, in.w - 1 - x);
}

void crop_frame(const Clip& in, Clip& out, int t_in, int t_out, const AugParams& p) {
    for (int c = 0; c < in.c; ++c)
        for (int y = 0; y < p.h; ++y)
            for (int x = 0; x < p.w; ++x) out.at(t_out, c, y, x) = in.at(t_in, c, p.y + y, p.x + x);
}

void check_rect(const AugParams& p, int h, int w, const char* who) {
    if (p.x < 0 || p.y < 0 || p.w < 1 || p.h < 1 || p.x + p.w > w || p.y + p.h > h) {
        throw ConfigError(std::string(who) + ": rectangle out of frame bounds");
    }
}

} // namespace

const char* aug_kind_name(AugKind k) {
    switch (k) {
        case AugKind::ColorJitter: return "color_jitter";
        case AugKind::Cutout: return "cutout";
        case AugKind::Flip: return "flip";
        case AugKind::Crop: return "crop";
    }
    return "?";
}

AugParams sample_params(AugKind kind, core::Rng& rng, int c, int h, int w) {
    AugParams p;
    p.kind = kind;
    switch (kind) {
        case AugKind::ColorJitter:
            p.gain.resize(static_cast<std::size_t>(c));
            p.bias.resize(static_cast<std::size_t>(c));
            for (int i = 0; i < c; ++i) {
                p.gain[static_cast<std::size_t>(i)] = static_cast<float>(rng.uniform(0.7, 1.3));
                p.bias[static_cast<std::size_t>(i)] = static_cast<float>(rng.uniform(-0.1, 0.1));
            }
            break;
        case AugKind::Cutout: {
            p.w = rng.uniform_int(std::max(1, w / 8), std::max(1, w / 3));
            p.h = rng.uniform_int(std::max(1, h / 8), std::max(1, h / 3));
            p.x = rng.uniform_int(0, w - p.w);
            p.y = rng.uniform_int(0, h - p.h);
            break;
        }
        case AugKind::Flip:
            break; // horizontal, no free parameters
        case AugKind::Crop: {
            const int min_w = static_cast<int>(std::ceil(0.6 * w));
            const int min_h = static_cast<int>(std::ceil(0.6 * h));
            p.w = rng.uniform_int(min_w, w);
            p.h = rng.uniform_int(min_h, h);
            p.x = rng.uniform_int(0, w - p.w);
            p.y = rng.uniform_int(0, h - p.h);
            break;
        }
    }
    return p;
}

Clip apply(const Clip& clip, const AugParams& params) {
    switch (params.kind) {
        case AugKind::ColorJitter: {
            if (params.gain.size() != static_cast<std::size_t>(clip.c) ||
                params.bias.size() != static_cast<std::size_t>(clip.c)) {
                throw ConfigError("color_jitter: params sampled for a different channel count");
            }
            Clip out = clip;
            for (int t = 0; t < clip.t; ++t) color_jitter_frame(clip, out, t, params);
            return out;
        }
        case AugKind::Cutout: {
            check_rect(params, clip.h, clip.w, "cutout");
            Clip out = clip;
            for (int t = 0; t < clip.t; ++t) cutout_frame(out, t, params);
            return out;
        }
        case AugKind::Flip: {
            Clip out = clip;
            for (int t = 0; t < clip.t; ++t) flip_frame(clip, out, t);
            return out;
        }
        case AugKind::Crop: {
            check_rect(params, clip.h, clip.w, "crop");
            Clip out(clip.t, clip.c, params.h, params.w);
            out.label = clip.label;
            out.video_id = clip.video_id;
            for (int t = 0; t < clip.t; ++t) crop_frame(clip, out, t, t, params);
            return out;
        }
    }
    throw ConfigError("unknown augmentation kind");
}

Clip apply_gaussian_noise(const Clip& clip, float sigma, core::Rng& rng) {
    Clip out = clip;
    for (auto& v : out.data) v = clamp01(v + static_cast<float>(rng.normal(sigma)));
    return out;
}

// Only flip and crop break inter-frame coherence when their parameters vary
// per frame; color jitter and cutout introduce local spatial randomness and
// keep their per-clip draw even in incoherent mode.
Clip apply_incoherent(const Clip& clip, AugKind kind, core::Rng& rng) {
    switch (kind) {
        case AugKind::ColorJitter:
        case AugKind::Cutout:
            return apply(clip, sample_params(kind, rng, clip.c, clip.h, clip.w));
        case AugKind::Flip: {
            Clip out = clip;
            for (int t = 0; t < clip.t; ++t) {
                if (rng.coin()) flip_frame(clip, out, t);
            }
            return out;
        }
        case AugKind::Crop: {
            // one output size, per-frame window position
            AugParams base = sample_params(AugKind::Crop, rng, clip.c, clip.h, clip.w);
            Clip out(clip.t, clip.c, base.h, base.w);
            out.label = clip.label;
            out.video_id = clip.video_id;
            for (int t = 0; t < clip.t; ++t) {
                AugParams p = base;
                p.x = rng.uniform_int(0, clip.w - p.w);
                p.y = rng.uniform_int(0, clip.h - p.h);
                crop_frame(clip, out, t, t, p);
            }
            return out;
        }
    }
    throw ConfigError("unknown augmentation kind");
}

std::vector<Clip> apply_all_branches(const Clip& clip, core::Rng rng, int n,
                                     bool coherent, float noise_sigma) {
    if (n < 1 || n > 5) throw ConfigError("branch count must lie in [1, 5]");
    std::vector<Clip> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        core::Rng branch_rng = rng.fork(static_cast<std::uint64_t>(i) + 1);
        if (i < kAugKindCount) {
            const AugKind kind = static_cast<AugKind>(i);
            if (coherent) {
                const AugParams p = sample_params(kind, branch_rng, clip.c, clip.h, clip.w);
                out.push_back(apply(clip, p));
            } else {
                out.push_back(apply_incoherent(clip, kind, branch_rng));
            }
        } else {
            out.push_back(apply_gaussian_noise(clip, noise_sigma, branch_rng));
        }
    }
    return out;
}

} // namespace sdr::tpa
