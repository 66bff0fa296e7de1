#pragma once

#include <string>
#include <vector>

#include "clipgen/clip.hpp"
#include "core/graph.hpp"
#include "model/config.hpp"

namespace sdr::model {

using clipgen::Clip;
using core::Graph;
using core::NodeRef;
using core::ParamStore;
using core::Tensor;

// Clip [T,C,H,W] flattened to [T, H*W, C]: every spatial site becomes an
// independent channel sequence for the temporal backbone.
template <typename S>
Tensor<S> clip_to_sites(const Clip& clip) {
    Tensor<S> x({clip.t, clip.h * clip.w, clip.c});
    for (int t = 0; t < clip.t; ++t)
        for (int c = 0; c < clip.c; ++c)
            for (int y = 0; y < clip.h; ++y)
                for (int xx = 0; xx < clip.w; ++xx) {
                    x.at({t, y * clip.w + xx, c}) = static_cast<S>(clip.at(t, c, y, xx));
                }
    return x;
}

// Clip [T,C,H,W] to [T,H,W,C] for the spatially-mixing baseline.
template <typename S>
Tensor<S> clip_to_grid(const Clip& clip) {
    Tensor<S> x({clip.t, clip.h, clip.w, clip.c});
    for (int t = 0; t < clip.t; ++t)
        for (int c = 0; c < clip.c; ++c)
            for (int y = 0; y < clip.h; ++y)
                for (int xx = 0; xx < clip.w; ++xx) {
                    x.at({t, y, xx, c}) = static_cast<S>(clip.at(t, c, y, xx));
                }
    return x;
}

// [T,H,W,D] -> [T,H*W,D]; no-op for inputs already in site layout.
template <typename S>
NodeRef flatten_spatial(Graph<S>& g, NodeRef x) {
    const auto& v = g.value(x);
    if (v.rank() == 3) return x;
    if (v.rank() != 4) throw sdr::InvariantError("flatten_spatial: need rank 3 or 4");
    return g.reshape(x, {v.dim(0), v.dim(1) * v.dim(2), v.dim(3)});
}

// One Spatial Perturbation Branch: pointwise channel lift, L pre-norm
// residual blocks of layer-norm -> Kt x 1 x 1 conv -> ReLU -> pointwise
// affine, then a global spatial mean-pool to [T', D]. Nothing before the
// pool ever mixes distinct spatial sites, which is the property the branch
// exists for. The Spatial3x3 arch swaps in Kt x 3 x 3 kernels (the
// spatially-mixing baseline) and intentionally breaks that property.
template <typename S>
NodeRef branch_forward(Graph<S>& g, const Clip& clip, ParamStore<S>& ps,
                       const std::string& prefix, const SPBConfig& cfg,
                       BackboneArch arch = BackboneArch::Temporal) {
    if (clip.h * clip.w < 1) throw sdr::DataError("branch_forward: empty spatial extent");
    if (clip.t < cfg.kt) throw sdr::DataError("branch_forward: clip shorter than kernel");

    const bool spatial = arch == BackboneArch::Spatial3x3;
    NodeRef x = g.input(spatial ? clip_to_grid<S>(clip) : clip_to_sites<S>(clip));
    x = g.affine(x, g.param(ps, prefix + ".lift.w"), g.param(ps, prefix + ".lift.b"));
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string bp = prefix + ".block" + std::to_string(b);
        const int stride = cfg.strides[static_cast<std::size_t>(b)];
        NodeRef h = g.layer_norm(x, g.param(ps, bp + ".ln.gain"), g.param(ps, bp + ".ln.bias"));
        h = spatial
            ? g.conv3d(h, g.param(ps, bp + ".conv.w"), g.param(ps, bp + ".conv.b"), stride)
            : g.temporal_conv(h, g.param(ps, bp + ".conv.w"), g.param(ps, bp + ".conv.b"), stride);
        h = g.relu(h);
        h = g.affine(h, g.param(ps, bp + ".proj.w"), g.param(ps, bp + ".proj.b"));
        NodeRef skip = x;
        if (stride > 1) {
            skip = g.subsample_time(flatten_spatial(g, x), stride, g.value(h).dim(0));
            h = flatten_spatial(g, h);
        }
        x = g.add(skip, h);
    }
    return g.mean_sites(flatten_spatial(g, x));
}

// All n branches, disjoint parameter slices, merged in branch order.
template <typename S>
std::vector<NodeRef> forward_all(Graph<S>& g, const std::vector<Clip>& branch_clips,
                                 ParamStore<S>& ps, const SPBConfig& cfg,
                                 BackboneArch arch = BackboneArch::Temporal) {
    if (branch_clips.empty()) throw sdr::DataError("forward_all: no branch clips");
    std::vector<NodeRef> zs;
    zs.reserve(branch_clips.size());
    for (std::size_t i = 0; i < branch_clips.size(); ++i) {
        if (branch_clips[i].t != branch_clips[0].t) {
            throw sdr::DataError("forward_all: branches disagree on T");
        }
        zs.push_back(branch_forward(g, branch_clips[i], ps,
                                    "branch" + std::to_string(i), cfg, arch));
    }
    return zs;
}

} // namespace sdr::model
