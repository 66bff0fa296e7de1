#pragma once

#include <cstdint>
#include <vector>

namespace sdr::metrics {

// ROC-AUC as the Mann-Whitney rank statistic: over all (fake, real) pairs,
// credit 1 when the fake scores higher, 0.5 on ties. Requires both classes.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Fraction of samples with (score >= threshold) agreeing with (label == 1);
// the >= convention maps a 0.5 score to fake.
double acc(const std::vector<double>& scores, const std::vector<int>& labels,
           double threshold = 0.5);

struct ClipScore {
    std::uint32_t video_id;
    double score;
    int label;
};

// Mean score per video_id, in first-appearance order; labels must agree
// within a video.
void video_level(const std::vector<ClipScore>& per_clip,
                 std::vector<double>& scores_out, std::vector<int>& labels_out);

} // namespace sdr::metrics
