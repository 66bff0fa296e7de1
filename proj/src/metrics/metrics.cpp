#include "metrics/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

#include "core/errors.hpp"

namespace sdr::metrics {

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw DataError("auc: scores and labels must be nonempty and equal-length");
    }
    std::int64_t pos = 0, neg = 0;
    for (int l : labels) (l == 1 ? pos : neg)++;
    if (pos == 0 || neg == 0) throw DataError("auc: undefined with a single class present");

    // average ranks with tie correction, then the U statistic
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        }
        i = j + 1;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(pos) * (static_cast<double>(pos) + 1.0);
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double acc(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw DataError("acc: scores and labels must be nonempty and equal-length");
    }
    std::int64_t hit = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const int predicted = scores[i] >= threshold ? 1 : 0;
        if (predicted == labels[i]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(scores.size());
}

void video_level(const std::vector<ClipScore>& per_clip,
                 std::vector<double>& scores_out, std::vector<int>& labels_out) {
    scores_out.clear();
    labels_out.clear();
    std::unordered_map<std::uint32_t, std::size_t> slot;
    std::vector<double> sums;
    std::vector<int> counts;
    for (const ClipScore& cs : per_clip) {
        auto it = slot.find(cs.video_id);
        if (it == slot.end()) {
            slot.emplace(cs.video_id, scores_out.size());
            sums.push_back(cs.score);
            counts.push_back(1);
            scores_out.push_back(0);
            labels_out.push_back(cs.label);
        } else {
            if (labels_out[it->second] != cs.label) {
                throw DataError("video_level: conflicting labels within one video");
            }
            sums[it->second] += cs.score;
            counts[it->second] += 1;
        }
    }
    for (std::size_t i = 0; i < sums.size(); ++i) {
        scores_out[i] = sums[i] / counts[i];
    }
}

} // namespace sdr::metrics
