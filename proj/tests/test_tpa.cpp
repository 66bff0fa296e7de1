#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "clipgen/generate.hpp"
#include "core/rng.hpp"
#include "tpa/tpa.hpp"

using namespace sdr;
using namespace sdr::tpa;
using clipgen::Clip;
using core::Rng;

namespace {

Clip test_clip(std::uint64_t seed = 11, int t = 8, int c = 3, int h = 16, int w = 16) {
    clipgen::StyleSpec style{1, 0.02f};
    clipgen::MotionSpec m;
    m.kind = clipgen::ObjectKind::Rectangle;
    m.x0 = 5;
    m.y0 = 6;
    m.vx = 0.6f;
    m.vy = 0.3f;
    m.extent = 4;
    return clipgen::gen_real_clip(seed, style, m, t, c, h, w);
}

// Clip with values held inside [0.15, 0.65] so the color jitter affine map
// never clamps and difference scaling stays exact.
Clip midrange_clip() {
    Clip clip = test_clip();
    for (auto& v : clip.data) v = 0.15f + 0.5f * v;
    return clip;
}

Clip frame_difference(const Clip& clip) {
    Clip d(clip.t - 1 + 1, clip.c, clip.h, clip.w); // keep T>=2 shape, last frame zero
    d.label = clip.label;
    for (int t = 0; t + 1 < clip.t; ++t)
        for (std::size_t i = 0; i < clip.frame_size(); ++i) {
            d.data[static_cast<std::size_t>(t) * clip.frame_size() + i] =
                clip.data[(static_cast<std::size_t>(t) + 1) * clip.frame_size() + i] -
                clip.data[static_cast<std::size_t>(t) * clip.frame_size() + i];
        }
    return d;
}

// Squared differences are summed in sorted order so the norm depends only on
// the value multiset; a mirrored frame then yields the identical double.
double frame_diff_norm(const Clip& clip, int t) {
    std::vector<double> sq(clip.frame_size());
    for (std::size_t i = 0; i < clip.frame_size(); ++i) {
        const double d = static_cast<double>(
                             clip.data[(static_cast<std::size_t>(t) + 1) * clip.frame_size() + i]) -
                         clip.data[static_cast<std::size_t>(t) * clip.frame_size() + i];
        sq[i] = d * d;
    }
    std::sort(sq.begin(), sq.end());
    double acc = 0;
    for (const double v : sq) acc += v;
    return std::sqrt(acc);
}

} // namespace

TEST_CASE("sample_params is deterministic given the rng state") {
    for (const AugKind kind : {AugKind::ColorJitter, AugKind::Cutout, AugKind::Flip, AugKind::Crop}) {
        Rng a(3), b(3);
        const AugParams pa = sample_params(kind, a, 3, 16, 16);
        const AugParams pb = sample_params(kind, b, 3, 16, 16);
        CHECK(pa.gain == pb.gain);
        CHECK(pa.bias == pb.bias);
        CHECK(pa.x == pb.x);
        CHECK(pa.y == pb.y);
        CHECK(pa.w == pb.w);
        CHECK(pa.h == pb.h);
    }
}

TEST_CASE("crop extents respect the 0.6 floor at H=W=16") {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const AugParams p = sample_params(AugKind::Crop, rng, 3, 16, 16);
        CHECK(p.w >= 10);
        CHECK(p.h >= 10);
        CHECK(p.x + p.w <= 16);
        CHECK(p.y + p.h <= 16);
    }
}

TEST_CASE("cutout extents cover exactly [2,5] at H=W=16 over many draws") {
    Rng rng(6);
    int min_w = 99, max_w = -1;
    for (int i = 0; i < 10000; ++i) {
        const AugParams p = sample_params(AugKind::Cutout, rng, 3, 16, 16);
        min_w = std::min(min_w, p.w);
        max_w = std::max(max_w, p.w);
        CHECK(p.w >= 2);
        CHECK(p.w <= 5);
        CHECK(p.h >= 2);
        CHECK(p.h <= 5);
        CHECK(p.x + p.w <= 16);
        CHECK(p.y + p.h <= 16);
    }
    CHECK(min_w == 2);
    CHECK(max_w == 5);
}

TEST_CASE("color jitter with unit gain and zero bias is the identity") {
    const Clip clip = test_clip();
    AugParams p;
    p.kind = AugKind::ColorJitter;
    p.gain = {1.0f, 1.0f, 1.0f};
    p.bias = {0.0f, 0.0f, 0.0f};
    const Clip out = apply(clip, p);
    CHECK(out.data == clip.data);
}

TEST_CASE("flip twice restores the original clip bit-exactly") {
    const Clip clip = test_clip();
    AugParams p;
    p.kind = AugKind::Flip;
    const Clip once = apply(clip, p);
    CHECK(once.data != clip.data);
    const Clip twice = apply(once, p);
    CHECK(twice.data == clip.data);
}

TEST_CASE("crop commutes with frame differencing bit-exactly") {
    const Clip clip = test_clip();
    Rng rng(7);
    const AugParams p = sample_params(AugKind::Crop, rng, clip.c, clip.h, clip.w);
    const Clip crop_then_diff = frame_difference(apply(clip, p));
    const Clip diff_then_crop = apply(frame_difference(clip), p);
    CHECK(crop_then_diff.data == diff_then_crop.data);
}

TEST_CASE("flip preserves frame-difference norms exactly") {
    const Clip clip = test_clip();
    AugParams p;
    p.kind = AugKind::Flip;
    const Clip flipped = apply(clip, p);
    for (int t = 0; t + 1 < clip.t; ++t) {
        CHECK(frame_diff_norm(clip, t) == frame_diff_norm(flipped, t));
    }
}

TEST_CASE("color jitter scales per-channel frame differences by exactly the gain") {
    const Clip clip = midrange_clip();
    AugParams p;
    p.kind = AugKind::ColorJitter;
    p.gain = {1.25f, 0.75f, 1.0f};
    p.bias = {0.05f, -0.05f, 0.0f};
    const Clip out = apply(clip, p);
    for (int t = 0; t + 1 < clip.t; ++t)
        for (int c = 0; c < clip.c; ++c)
            for (int y = 0; y < clip.h; ++y)
                for (int x = 0; x < clip.w; ++x) {
                    const float d_in = clip.at(t + 1, c, y, x) - clip.at(t, c, y, x);
                    const float d_out = out.at(t + 1, c, y, x) - out.at(t, c, y, x);
                    CHECK(d_out == doctest::Approx(p.gain[static_cast<std::size_t>(c)] * d_in)
                                       .epsilon(1e-5));
                }
}

TEST_CASE("cutout zeroes differences inside the rectangle and preserves them outside") {
    const Clip clip = test_clip();
    AugParams p;
    p.kind = AugKind::Cutout;
    p.x = 4;
    p.y = 5;
    p.w = 5;
    p.h = 4;
    const Clip out = apply(clip, p);
    for (int t = 0; t + 1 < clip.t; ++t)
        for (int c = 0; c < clip.c; ++c)
            for (int y = 0; y < clip.h; ++y)
                for (int x = 0; x < clip.w; ++x) {
                    const bool inside = x >= p.x && x < p.x + p.w && y >= p.y && y < p.y + p.h;
                    const float d_in = clip.at(t + 1, c, y, x) - clip.at(t, c, y, x);
                    const float d_out = out.at(t + 1, c, y, x) - out.at(t, c, y, x);
                    if (inside) {
                        CHECK(d_out == 0.0f);
                    } else {
                        CHECK(d_out == d_in);
                    }
                }
}

TEST_CASE("out-of-bounds rectangles are rejected") {
    const Clip clip = test_clip();
    AugParams p;
    p.kind = AugKind::Cutout;
    p.x = 14;
    p.y = 2;
    p.w = 5;
    p.h = 3;
    CHECK_THROWS_AS(apply(clip, p), ConfigError);
    p.kind = AugKind::Crop;
    CHECK_THROWS_AS(apply(clip, p), ConfigError);
}

TEST_CASE("apply_all_branches: kinds in enum order, shared T and label") {
    const Clip clip = test_clip();
    Rng rng(8);
    const auto branches = apply_all_branches(clip, rng, 4);
    REQUIRE(branches.size() == 4);
    for (const Clip& b : branches) {
        CHECK(b.t == clip.t);
        CHECK(b.label == clip.label);
        CHECK(b.video_id == clip.video_id);
    }
    // branch 2 is Flip: mirror of the input
    for (int t = 0; t < clip.t; ++t)
        for (int c = 0; c < clip.c; ++c)
            for (int y = 0; y < clip.h; ++y)
                for (int x = 0; x < clip.w; ++x) {
                    CHECK(branches[2].at(t, c, y, x) == clip.at(t, c, y, clip.w - 1 - x));
                }
    // branch 3 is Crop: spatially smaller
    CHECK(branches[3].h < clip.h + 1);
    CHECK(branches[3].w < clip.w + 1);
    CHECK(branches[3].h >= 10);
}

TEST_CASE("apply_all_branches: n=1 gives a single color-jitter branch") {
    const Clip clip = midrange_clip();
    Rng rng(9);
    const auto branches = apply_all_branches(clip, rng, 1);
    REQUIRE(branches.size() == 1);
    CHECK(branches[0].h == clip.h);
    CHECK(branches[0].data != clip.data); // jitter moved something
}

TEST_CASE("apply_all_branches: n=5 adds a gaussian noise branch") {
    const Clip clip = test_clip();
    Rng rng(10);
    const auto branches = apply_all_branches(clip, rng, 5);
    REQUIRE(branches.size() == 5);
    CHECK(branches[4].h == clip.h);
    CHECK(branches[4].data != clip.data);
    for (float v : branches[4].data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("apply_all_branches rejects branch counts outside [1,5]") {
    const Clip clip = test_clip();
    Rng rng(11);
    CHECK_THROWS_AS(apply_all_branches(clip, rng, 0), ConfigError);
    CHECK_THROWS_AS(apply_all_branches(clip, rng, 6), ConfigError);
}

TEST_CASE("incoherent mode breaks flip/crop coherence, keeps shapes consistent") {
    const Clip clip = test_clip();
    Rng rng(12);
    const auto coherent = apply_all_branches(clip, rng, 4, true);
    const auto incoherent = apply_all_branches(clip, rng, 4, false);
    REQUIRE(incoherent.size() == 4);
    // color jitter and cutout keep per-clip parameters in both modes
    CHECK(coherent[0].data == incoherent[0].data);
    CHECK(coherent[1].data == incoherent[1].data);
    // flip branch: some frames mirrored, some not -> differs from the
    // all-frames mirror
    CHECK(coherent[2].data != incoherent[2].data);
    // crop keeps one output size even when the window moves per frame
    CHECK(incoherent[3].h >= 10);
    CHECK(incoherent[3].w >= 10);
    for (const Clip& b : incoherent) CHECK(b.t == clip.t);
}

TEST_CASE("apply is deterministic given clip and params") {
    const Clip clip = test_clip();
    Rng rng(13);
    const AugParams p = sample_params(AugKind::Cutout, rng, clip.c, clip.h, clip.w);
    CHECK(apply(clip, p).data == apply(clip, p).data);
}
