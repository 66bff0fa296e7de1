#pragma once

#include <optional>
#include <vector>

#include "core/graph.hpp"
#include "model/config.hpp"

namespace sdr::model {

using core::Graph;
using core::NodeRef;

// Supervised contrastive loss over the pooled, L2-normalized joint
// representations of one balanced batch:
//   -1/(2|B|) * sum_i [ log( N_r(i) / (N_r(i) + X_r(i)) )
//                     + log( N_f(i) / (N_f(i) + X_f(i)) ) ]
// where N is the same-class similarity mass excluding i and X the
// cross-class mass. Same-class numerators need |B| >= 2; smaller batches
// return nullopt and the caller weighs the term as zero.
template <typename S>
std::optional<NodeRef> contrastive_loss(Graph<S>& g,
                                        const std::vector<NodeRef>& real_reps,
                                        const std::vector<NodeRef>& fake_reps,
                                        double tau) {
    if (tau <= 0) throw sdr::ConfigError("contrastive_loss: tau must be positive");
    if (real_reps.size() != fake_reps.size()) {
        throw sdr::ConfigError("contrastive_loss: batch must be class-balanced");
    }
    const std::size_t b = real_reps.size();
    if (b < 2) return std::nullopt;

    const double inv_tau = 1.0 / tau;
    auto sim = [&](NodeRef u, NodeRef v) { return g.exp1(g.scale(g.dot(u, v), inv_tau)); };

    // exp(z_i . z_k / tau) for unordered same-class pairs and the full
    // cross-class grid, each computed once and shared between terms.
    std::vector<std::vector<NodeRef>> rr(b, std::vector<NodeRef>(b));
    std::vector<std::vector<NodeRef>> ff(b, std::vector<NodeRef>(b));
    std::vector<std::vector<NodeRef>> rf(b, std::vector<NodeRef>(b));
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t k = i + 1; k < b; ++k) {
            rr[i][k] = rr[k][i] = sim(real_reps[i], real_reps[k]);
            ff[i][k] = ff[k][i] = sim(fake_reps[i], fake_reps[k]);
        }
        for (std::size_t j = 0; j < b; ++j) rf[i][j] = sim(real_reps[i], fake_reps[j]);
    }

    std::vector<NodeRef> terms;
    terms.reserve(2 * b);
    for (std::size_t i = 0; i < b; ++i) {
        std::vector<NodeRef> same_r, same_f, cross_r, cross_f;
        for (std::size_t k = 0; k < b; ++k) {
            if (k != i) {
                same_r.push_back(rr[i][k]);
                same_f.push_back(ff[i][k]);
            }
            cross_r.push_back(rf[i][k]); // real anchor vs every fake
            cross_f.push_back(rf[k][i]); // fake anchor vs every real
        }
        NodeRef nr = g.sum_list(same_r);
        NodeRef nf = g.sum_list(same_f);
        terms.push_back(g.sub_scalars(g.log1(nr), g.log1(g.add_scalars(nr, g.sum_list(cross_r)))));
        terms.push_back(g.sub_scalars(g.log1(nf), g.log1(g.add_scalars(nf, g.sum_list(cross_f)))));
    }
    return g.scale(g.sum_list(terms), -1.0 / (2.0 * static_cast<double>(b)));
}

// -log softmax(logits)[label].
template <typename S>
NodeRef cross_entropy(Graph<S>& g, NodeRef logits, int label) {
    return g.cross_entropy_logits(logits, label);
}

// L = alpha*L_MI + beta*L_Con + gamma*L_CE; absent terms contribute zero.
template <typename S>
NodeRef total_loss(Graph<S>& g, const LossWeights& w,
                   std::optional<NodeRef> l_mi, std::optional<NodeRef> l_con, NodeRef l_ce) {
    std::vector<NodeRef> parts;
    std::vector<double> coeffs;
    if (l_mi) {
        parts.push_back(*l_mi);
        coeffs.push_back(w.alpha);
    }
    if (l_con) {
        parts.push_back(*l_con);
        coeffs.push_back(w.beta);
    }
    parts.push_back(l_ce);
    coeffs.push_back(w.gamma);
    return g.weighted_sum(parts, coeffs);
}

} // namespace sdr::model
