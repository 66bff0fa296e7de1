#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clipgen/clip.hpp"
#include "model/config.hpp"

namespace sdr::train {

struct DataPaths {
    std::string train_subdir = "train";
    std::string test_subdir = "test";
};

struct TrainConfig {
    std::uint64_t seed = 1;
    int epochs = 3;
    int batch_size = 16;
    double lr = 1e-4;
    model::LossWeights weights;
    double tau = 0.1;
    model::ModelConfig model; // t_in / input_channels are overwritten from the data
    // Coherent per-clip augmentation. When false with TRFI on, branch
    // parameters are resampled per frame (the TPA-removed ablation); with
    // TRFI off branches receive the raw clip and this must be false.
    bool tpa_enabled = true;
    int eval_every = 0;     // epochs between mid-run evals; 0 = final only
    bool eval_train = true; // also score the train split at eval points
    DataPaths data;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 2 || batch_size % 2 != 0) {
            throw ConfigError("batch_size must be even (balanced sampling) and >= 2");
        }
        if (lr <= 0) throw ConfigError("lr must be positive");
        if (tau <= 0) throw ConfigError("tau must be positive");
        if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
        weights.validate();
        model.validate();
        if (!model.use_trfi && tpa_enabled) {
            throw ConfigError("tpa requires trfi: single-branch mode consumes the raw clip");
        }
    }
};

// Style-shift protocol: training correlates style with label
// (style_a <-> real, style_b <-> fake); the test split swaps the pairing.
struct ProtocolSpec {
    int t = 8, c = 3, h = 16, w = 16;
    float noise_floor = 0.01f;
    clipgen::FakeKind kind = clipgen::FakeKind::PositionJitter;
    float strength = 2.0f;
    int style_a = 1, style_b = 2;
    int train_per_cell = 100;
    int test_per_cell = 50;
};

struct ExperimentConfig {
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    TrainConfig base;
    ProtocolSpec protocol;
};

struct GradCheckSettings {
    std::uint64_t seed = 3;
    double h = 1e-5;
    double tol = 1e-4;
    int t = 4, hw = 4, channels = 4, n_branches = 2, batch = 4;
};

// Strict JSON parsing: "version" is required and unknown keys are errors.
TrainConfig parse_train_config(const std::string& json_text);
clipgen::DatasetSpec parse_dataset_config(const std::string& json_text);
ExperimentConfig parse_experiment_config(const std::string& json_text);
GradCheckSettings parse_gradcheck_config(const std::string& json_text);

std::string read_text_file(const std::string& path); // IoError on failure

} // namespace sdr::train
