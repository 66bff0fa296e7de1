#pragma once

#include <string>
#include <vector>

#include "core/graph.hpp"
#include "model/config.hpp"

namespace sdr::model {

using core::Graph;
using core::NodeRef;
using core::ParamStore;

// Joint representation Z: channel-wise concatenation of the branch
// sequences in branch-index order. Carries no parameters.
template <typename S>
NodeRef integrate(Graph<S>& g, const std::vector<NodeRef>& zs) {
    if (zs.empty()) throw sdr::DataError("integrate: no branch outputs");
    if (zs.size() == 1) return zs[0];
    return g.concat_channels(zs);
}

// Full prediction P_Z = p(y | Z): temporal mean-pool, affine head, clamped
// softmax over {real, fake}.
template <typename S>
NodeRef predict_full(Graph<S>& g, NodeRef z_joint, ParamStore<S>& ps) {
    NodeRef pooled = g.mean_rows(z_joint);
    NodeRef logits = g.affine(pooled, g.param(ps, "head.full.w"), g.param(ps, "head.full.b"));
    return g.clamped_softmax(logits);
}

// Leave-one-out prediction P_{Z \ z_i}: branch i's channel block is removed
// before pooling, and head i is parameterized independently, so the result
// cannot depend on branch i at all. With a single branch the head input is
// empty and the prediction is the head bias alone.
template <typename S>
NodeRef predict_loo(Graph<S>& g, NodeRef z_joint, int i, ParamStore<S>& ps, int n, int d) {
    if (i < 0 || i >= n) throw sdr::ConfigError("predict_loo: branch index out of range");
    const std::string head = "head.loo" + std::to_string(i);
    if (n == 1) {
        return g.clamped_softmax(g.param(ps, head + ".b"));
    }
    NodeRef dropped = g.drop_channels(z_joint, i * d, d);
    NodeRef pooled = g.mean_rows(dropped);
    NodeRef logits = g.affine(pooled, g.param(ps, head + ".w"), g.param(ps, head + ".b"));
    return g.clamped_softmax(logits);
}

// Per-sample sum over branches of KL(P_Z || P_{Z\z_i}).
template <typename S>
NodeRef kl_sum(Graph<S>& g, NodeRef p_full, const std::vector<NodeRef>& p_loo) {
    std::vector<NodeRef> kls;
    kls.reserve(p_loo.size());
    for (NodeRef q : p_loo) kls.push_back(g.kl_pair(p_full, q));
    return g.sum_list(kls);
}

// L_MI = exp(-mean_s sum_i KL_s,i). Strictly in (0, 1], equal to 1 exactly
// when every divergence vanishes.
template <typename S>
NodeRef mi_loss(Graph<S>& g, const std::vector<NodeRef>& per_sample_kl_sums) {
    if (per_sample_kl_sums.empty()) throw sdr::DataError("mi_loss: empty batch");
    NodeRef mean_kl = g.mean_list(per_sample_kl_sums);
    return g.exp1(g.scale(mean_kl, -1.0));
}

} // namespace sdr::model
