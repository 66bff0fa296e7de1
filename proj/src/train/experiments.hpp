#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "core/gradcheck.hpp"
#include "train/config.hpp"
#include "train/trainer.hpp"

namespace sdr::train {

// Train/test clip sets for the style-shift protocol; the test pairing of
// style and label is the inverse of the training pairing.
std::pair<std::vector<Clip>, std::vector<Clip>> make_style_shift(const ProtocolSpec& protocol,
                                                                 std::uint64_t seed);

struct ExperimentRow {
    std::string name;
    int n_branches = 0;
    bool tpa = false, trfi = false, contrastive = false;
    std::uint64_t seed = 0;
    double auc = 0, acc = 0;
};

using RowFn = std::function<void(const ExperimentRow&)>;

// One style-shift train+evaluate run of the given configuration.
ExperimentRow run_protocol_once(TrainConfig cfg, const ProtocolSpec& protocol,
                                std::uint64_t seed, const std::string& name,
                                const LogFn& log = nullptr);

// The four component rows: none, TRFI only, TPA+TRFI, TPA+TRFI+contrastive,
// each over every seed. on_row fires as each run completes.
std::vector<ExperimentRow> run_ablation(const ExperimentConfig& cfg, const LogFn& log = nullptr,
                                        const RowFn& on_row = nullptr);

// Branch-count sweep on the style-shift protocol.
std::vector<ExperimentRow> run_sweep(const ExperimentConfig& cfg, const std::vector<int>& n_list,
                                     const LogFn& log = nullptr, const RowFn& on_row = nullptr);

struct GradCheckTermReport {
    std::string term; // l_mi, l_con, l_ce, total
    core::GradCheckReport report;
};

// Finite-difference check of all four loss terms on a tiny double-precision
// model with a fixed synthetic batch.
std::vector<GradCheckTermReport> run_gradcheck(const GradCheckSettings& settings);

} // namespace sdr::train
