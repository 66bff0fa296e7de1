#pragma once

#include <string>

#include "core/graph.hpp"
#include "model/config.hpp"

namespace sdr::model {

using core::Graph;
using core::NodeRef;
using core::ParamStore;

// Temporal transformer head: project the joint sequence to d_model, prepend
// the trainable CLS vector, add learned positional embeddings (optional),
// run pre-norm encoder blocks over the time axis and classify from the CLS
// output. With positional embeddings disabled the logits are exactly
// invariant to temporal permutations of Z.
template <typename S>
NodeRef classify(Graph<S>& g, NodeRef z_joint, ParamStore<S>& ps, const TransformerConfig& cfg) {
    NodeRef x = g.affine(z_joint, g.param(ps, "tf.proj.w"), g.param(ps, "tf.proj.b"));
    x = g.prepend_row(g.param(ps, "tf.cls"), x);
    if (cfg.use_positional) {
        const auto& pos = ps.value("tf.pos");
        if (pos.dim(0) != g.value(x).dim(0)) {
            throw sdr::ConfigError("classify: positional table sized for T'+1 = " +
                                   std::to_string(pos.dim(0)) + ", sequence is " +
                                   std::to_string(g.value(x).dim(0)));
        }
        x = g.add(x, g.param(ps, "tf.pos"));
    }
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string bp = "tf.block" + std::to_string(b);
        NodeRef h = g.layer_norm(x, g.param(ps, bp + ".ln1.gain"), g.param(ps, bp + ".ln1.bias"));
        h = g.mhsa(h,
                   g.param(ps, bp + ".attn.wq"), g.param(ps, bp + ".attn.bq"),
                   g.param(ps, bp + ".attn.wk"), g.param(ps, bp + ".attn.bk"),
                   g.param(ps, bp + ".attn.wv"), g.param(ps, bp + ".attn.bv"),
                   g.param(ps, bp + ".attn.wo"), g.param(ps, bp + ".attn.bo"),
                   cfg.heads);
        x = g.add(x, h);
        NodeRef m = g.layer_norm(x, g.param(ps, bp + ".ln2.gain"), g.param(ps, bp + ".ln2.bias"));
        m = g.affine(m, g.param(ps, bp + ".mlp.w1"), g.param(ps, bp + ".mlp.b1"));
        m = g.relu(m);
        m = g.affine(m, g.param(ps, bp + ".mlp.w2"), g.param(ps, bp + ".mlp.b2"));
        x = g.add(x, m);
    }
    x = g.layer_norm(x, g.param(ps, "tf.final_ln.gain"), g.param(ps, "tf.final_ln.bias"));
    NodeRef cls = g.row(x, 0);
    return g.affine(cls, g.param(ps, "tf.head.w"), g.param(ps, "tf.head.b"));
}

} // namespace sdr::model
