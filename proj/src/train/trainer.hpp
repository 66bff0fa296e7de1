#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "clipgen/clip.hpp"
#include "core/params.hpp"
#include "train/config.hpp"

namespace sdr::train {

using clipgen::Clip;
using LogFn = std::function<void(const std::string&)>;

struct StepRecord {
    int step = 0;  // 1-based global step
    int epoch = 0; // 1-based
    std::optional<double> l_mi;
    std::optional<double> l_con;
    double l_ce = 0;
    double total = 0;
    std::optional<double> mean_kl;
};

struct EvalRecord {
    int epoch = 0;
    std::string split;
    double auc = 0, acc = 0;
};

struct TrainHistory {
    std::vector<StepRecord> steps;
    std::vector<EvalRecord> evals;
};

struct RunMetrics {
    double train_auc = 0, train_acc = 0;
    double test_auc = 0, test_acc = 0;
    int steps = 0;
    std::int64_t param_count = 0;
};

struct TrainOutput {
    core::ParamStore<float> params;
    TrainHistory history;
    RunMetrics metrics;
};

struct EvalResult {
    double auc = 0, acc = 0;
};

// Video-level AUC/ACC of a parameter set on a clip list (identity
// augmentation policy, no randomness).
EvalResult evaluate(core::ParamStore<float>& params, const model::ModelConfig& cfg,
                    const std::vector<Clip>& clips);

// Deterministic end-to-end training: balanced batches, TPA branches, SPB
// forwards, TRFI + objectives, transformer head, Adam. (seed, config, data)
// fully determine the history and the final parameters.
TrainOutput train_run(TrainConfig cfg, const std::vector<Clip>& train_clips,
                      const std::vector<Clip>& test_clips, const LogFn& log = nullptr);

// History CSV with one fixed header row; step and eval records share it.
void write_history_csv(const std::string& path, const TrainHistory& history);
std::string history_csv_header();

// Fixed-format float for CSV/JSON output (shortest round-trip-ish, %.9g).
std::string fmt_g(double v);

} // namespace sdr::train
