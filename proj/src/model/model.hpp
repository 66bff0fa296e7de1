#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "core/gradcheck.hpp"
#include "core/graph.hpp"
#include "core/rng.hpp"
#include "model/config.hpp"
#include "model/objectives.hpp"
#include "model/spb.hpp"
#include "model/transformer.hpp"
#include "model/trfi.hpp"

namespace sdr::model {

using core::Dims;

namespace detail {

template <typename S>
Tensor<S> kaiming_uniform(core::Rng& rng, Dims dims, int fan_in) {
    Tensor<S> t(dims);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::int64_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<S>(rng.uniform(-limit, limit));
    }
    return t;
}

} // namespace detail

// Registers every trainable tensor for the configured pipeline. Branches are
// seeded independently (rng_seed + branch index) so equal-config branches
// still break symmetry; the positional table starts at zero so the
// permutation-invariance check is exact at initialization.
template <typename S>
void init_params(ParamStore<S>& ps, const ModelConfig& cfg) {
    cfg.validate();
    using detail::kaiming_uniform;
    const int d = cfg.spb.channels;
    const int n = cfg.effective_branches();
    const int c_in = cfg.input_channels;

    for (int i = 0; i < n; ++i) {
        core::Rng rng = core::Rng(ps.rng_seed() + static_cast<std::uint64_t>(i)).fork(100);
        const std::string prefix = "branch" + std::to_string(i);
        ps.add(prefix + ".lift.w", kaiming_uniform<S>(rng, {c_in, d}, c_in));
        ps.add(prefix + ".lift.b", Tensor<S>({d}));
        for (int b = 0; b < cfg.spb.blocks; ++b) {
            const std::string bp = prefix + ".block" + std::to_string(b);
            Tensor<S> gain({d});
            gain.fill(S(1));
            ps.add(bp + ".ln.gain", std::move(gain));
            ps.add(bp + ".ln.bias", Tensor<S>({d}));
            if (cfg.arch == BackboneArch::Spatial3x3) {
                ps.add(bp + ".conv.w",
                       kaiming_uniform<S>(rng, {cfg.spb.kt, 3, 3, d, d}, cfg.spb.kt * 9 * d));
            } else {
                ps.add(bp + ".conv.w", kaiming_uniform<S>(rng, {cfg.spb.kt, d, d}, cfg.spb.kt * d));
            }
            ps.add(bp + ".conv.b", Tensor<S>({d}));
            ps.add(bp + ".proj.w", kaiming_uniform<S>(rng, {d, d}, d));
            ps.add(bp + ".proj.b", Tensor<S>({d}));
        }
    }

    if (cfg.use_trfi) {
        // Small random head init: distributions start near-uniform so L_MI
        // opens close to its supremum 1, but not exactly at the symmetric
        // point p == q, whose vanishing gradient would freeze the heads
        // (they receive no gradient from any other term).
        core::Rng rng = core::Rng(ps.rng_seed()).fork(200);
        auto small_uniform = [&rng](Dims dims) {
            Tensor<S> t(std::move(dims));
            for (std::int64_t i = 0; i < t.size(); ++i) {
                t[i] = static_cast<S>(rng.uniform(-0.05, 0.05));
            }
            return t;
        };
        const int nd = n * d;
        ps.add("head.full.w", small_uniform({nd, 2}));
        ps.add("head.full.b", Tensor<S>({2}));
        for (int i = 0; i < n; ++i) {
            const std::string head = "head.loo" + std::to_string(i);
            if (n > 1) ps.add(head + ".w", small_uniform({(n - 1) * d, 2}));
            ps.add(head + ".b", Tensor<S>({2}));
        }
    }

    {
        core::Rng rng = core::Rng(ps.rng_seed()).fork(300);
        const auto& tf = cfg.transformer;
        const int dm = tf.d_model;
        const int joint = n * d;
        const int tp = cfg.spb.t_out(cfg.t_in);
        ps.add("tf.proj.w", kaiming_uniform<S>(rng, {joint, dm}, joint));
        ps.add("tf.proj.b", Tensor<S>({dm}));
        ps.add("tf.cls", kaiming_uniform<S>(rng, {dm}, dm));
        if (tf.use_positional) {
            ps.add("tf.pos", Tensor<S>({tp + 1, dm})); // zero-initialized
        }
        for (int b = 0; b < tf.blocks; ++b) {
            const std::string bp = "tf.block" + std::to_string(b);
            Tensor<S> g1({dm}), g2({dm});
            g1.fill(S(1));
            g2.fill(S(1));
            ps.add(bp + ".ln1.gain", std::move(g1));
            ps.add(bp + ".ln1.bias", Tensor<S>({dm}));
            for (const char* name : {"wq", "wk", "wv", "wo"}) {
                ps.add(bp + ".attn." + std::string(name), kaiming_uniform<S>(rng, {dm, dm}, dm));
            }
            for (const char* name : {"bq", "bk", "bv", "bo"}) {
                ps.add(bp + ".attn." + std::string(name), Tensor<S>({dm}));
            }
            ps.add(bp + ".ln2.gain", std::move(g2));
            ps.add(bp + ".ln2.bias", Tensor<S>({dm}));
            ps.add(bp + ".mlp.w1", kaiming_uniform<S>(rng, {dm, dm * tf.mlp_ratio}, dm));
            ps.add(bp + ".mlp.b1", Tensor<S>({dm * tf.mlp_ratio}));
            ps.add(bp + ".mlp.w2", kaiming_uniform<S>(rng, {dm * tf.mlp_ratio, dm}, dm * tf.mlp_ratio));
            ps.add(bp + ".mlp.b2", Tensor<S>({dm}));
        }
        Tensor<S> gf({dm});
        gf.fill(S(1));
        ps.add("tf.final_ln.gain", std::move(gf));
        ps.add("tf.final_ln.bias", Tensor<S>({dm}));
        // zero-initialized like the other prediction heads
        ps.add("tf.head.w", Tensor<S>({dm, 2}));
        ps.add("tf.head.b", Tensor<S>({2}));
    }
}

// One sample as the training step sees it: the raw clip plus its n
// augmented branch views.
struct SampleInput {
    std::vector<clipgen::Clip> branches;
    int label = 0;
};

template <typename S>
struct BatchNodes {
    NodeRef total;
    NodeRef ce;
    std::optional<NodeRef> mi;
    std::optional<NodeRef> con;
    std::optional<NodeRef> mean_kl;
    std::vector<std::array<double, 2>> probs; // per-sample class probabilities
};

inline std::array<double, 2> softmax2(double a, double b) {
    const double m = std::max(a, b);
    const double ea = std::exp(a - m), eb = std::exp(b - m);
    return {ea / (ea + eb), eb / (ea + eb)};
}

// The whole training objective for one batch on one tape. Contrastive
// representations are the pooled, normalized joint representations; the
// term drops out (weighted zero) when fewer than two pairs are available.
template <typename S>
BatchNodes<S> batch_forward(Graph<S>& g, const std::vector<SampleInput>& samples,
                            ParamStore<S>& ps, const ModelConfig& cfg,
                            const LossWeights& weights, double tau) {
    if (samples.empty()) throw sdr::DataError("batch_forward: empty batch");
    const bool want_contrastive = weights.beta > 0;
    BatchNodes<S> out;
    std::vector<NodeRef> ce_terms, kl_sums, real_reps, fake_reps;
    for (const SampleInput& sample : samples) {
        std::vector<NodeRef> zs = forward_all(g, sample.branches, ps, cfg.spb, cfg.arch);
        NodeRef z_joint = integrate(g, zs);
        if (cfg.use_trfi) {
            NodeRef p_full = predict_full(g, z_joint, ps);
            std::vector<NodeRef> p_loo;
            p_loo.reserve(static_cast<std::size_t>(cfg.n_branches));
            for (int i = 0; i < cfg.n_branches; ++i) {
                p_loo.push_back(predict_loo(g, z_joint, i, ps, cfg.n_branches, cfg.spb.channels));
            }
            kl_sums.push_back(kl_sum(g, p_full, p_loo));
        }
        if (want_contrastive) {
            NodeRef rep = g.l2_normalize(g.mean_rows(z_joint));
            (sample.label == 0 ? real_reps : fake_reps).push_back(rep);
        }
        NodeRef logits = classify(g, z_joint, ps, cfg.transformer);
        ce_terms.push_back(cross_entropy(g, logits, sample.label));
        const auto& lv = g.value(logits);
        out.probs.push_back(softmax2(static_cast<double>(lv[0]), static_cast<double>(lv[1])));
    }
    out.ce = g.mean_list(ce_terms);
    if (cfg.use_trfi) {
        out.mean_kl = g.mean_list(kl_sums);
        out.mi = g.exp1(g.scale(*out.mean_kl, -1.0));
    }
    if (want_contrastive) {
        if (real_reps.size() != fake_reps.size()) {
            throw sdr::InvariantError("batch_forward: contrastive batch must be class-balanced");
        }
        out.con = contrastive_loss(g, real_reps, fake_reps, tau);
    }
    out.total = total_loss(g, weights, out.mi, out.con, out.ce);
    return out;
}

// Inference-time fake probability for one clip; every branch receives the
// unaugmented clip (identity evaluation policy).
template <typename S>
double score_clip(const clipgen::Clip& clip, ParamStore<S>& ps, const ModelConfig& cfg) {
    Graph<S> g(false);
    std::vector<clipgen::Clip> branches(static_cast<std::size_t>(cfg.effective_branches()), clip);
    std::vector<NodeRef> zs = forward_all(g, branches, ps, cfg.spb, cfg.arch);
    NodeRef logits = classify(g, integrate(g, zs), ps, cfg.transformer);
    const auto& lv = g.value(logits);
    return softmax2(static_cast<double>(lv[0]), static_cast<double>(lv[1]))[1];
}

} // namespace sdr::model
