#pragma once

#include <vector>

#include "clipgen/clip.hpp"
#include "core/rng.hpp"

namespace sdr::tpa {

using clipgen::Clip;

enum class AugKind { ColorJitter, Cutout, Flip, Crop };
constexpr int kAugKindCount = 4;

const char* aug_kind_name(AugKind k);

// One parameter set serves all frames of a clip; that shared draw is what
// keeps inter-frame differences intact.
struct AugParams {
    AugKind kind = AugKind::ColorJitter;
    std::vector<float> gain; // ColorJitter, per channel, [0.7, 1.3]
    std::vector<float> bias; // ColorJitter, per channel, [-0.1, 0.1]
    int x = 0, y = 0, w = 0, h = 0; // Cutout / Crop rectangle
};

AugParams sample_params(AugKind kind, core::Rng& rng, int c, int h, int w);

// Applies one augmentation with identical parameters to every frame. Crop
// returns a spatially smaller clip; label, T and frame order never change.
Clip apply(const Clip& clip, const AugParams& params);

// Per-pixel gaussian noise, the extra branch used when n = 5.
Clip apply_gaussian_noise(const Clip& clip, float sigma, core::Rng& rng);

// TPA-off ablation variant: flip and crop draw fresh parameters per frame
// (crop keeps its size but the window moves), deliberately breaking
// inter-frame coherence; color jitter and cutout stay per-clip.
Clip apply_incoherent(const Clip& clip, AugKind kind, core::Rng& rng);

// Branch i receives augmentation kind i, freshly parameterized per clip.
// n in [1,4] uses the leading kinds in enum order; n = 5 adds the gaussian
// noise branch (sigma 0.05). coherent=false resamples per frame (ablation).
std::vector<Clip> apply_all_branches(const Clip& clip, core::Rng rng, int n,
                                     bool coherent = true, float noise_sigma = 0.05f);

} // namespace sdr::tpa
