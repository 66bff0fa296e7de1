#pragma once

#include <string>
#include <vector>

#include "core/errors.hpp"

namespace sdr::model {

struct SPBConfig {
    int channels = 16;             // feature width D
    int blocks = 3;                // residual temporal blocks L
    int kt = 3;                    // temporal kernel extent, odd
    std::vector<int> strides = {1, 1, 1};

    int stride_product() const {
        int p = 1;
        for (int s : strides) p *= s;
        return p;
    }

    void validate(int t_in) const {
        if (channels < 1 || blocks < 1) throw ConfigError("spb: channels and blocks must be positive");
        if (kt < 1 || kt % 2 == 0) throw ConfigError("spb: Kt must be odd and positive");
        if (static_cast<int>(strides.size()) != blocks) {
            throw ConfigError("spb: need one stride per block");
        }
        for (int s : strides) {
            if (s < 1) throw ConfigError("spb: strides must be positive");
        }
        int t = t_in;
        for (int s : strides) t = (t + 2 * ((kt - 1) / 2) - kt) / s + 1;
        if (t < 2) throw ConfigError("spb: output length T' must be >= 2");
    }

    // Output sequence length for a given input length.
    int t_out(int t_in) const {
        int t = t_in;
        for (int s : strides) t = (t + 2 * ((kt - 1) / 2) - kt) / s + 1;
        return t;
    }
};

struct TransformerConfig {
    int d_model = 32;
    int heads = 4;
    int blocks = 1;
    int mlp_ratio = 2;
    bool use_positional = true;

    void validate() const {
        if (d_model < 1 || heads < 1 || blocks < 1 || mlp_ratio < 1) {
            throw ConfigError("transformer: sizes must be positive");
        }
        if (d_model % heads != 0) throw ConfigError("transformer: heads must divide d_model");
    }
};

enum class BackboneArch { Temporal, Spatial3x3 };

struct ModelConfig {
    int n_branches = 4;
    int input_channels = 3;
    int t_in = 8;
    SPBConfig spb;
    TransformerConfig transformer;
    bool use_trfi = true; // multi-branch integration + MI heads
    BackboneArch arch = BackboneArch::Temporal;

    int effective_branches() const { return use_trfi ? n_branches : 1; }
    int joint_width() const { return effective_branches() * spb.channels; }

    void validate() const {
        if (n_branches < 1 || n_branches > 5) throw ConfigError("n_branches must lie in [1, 5]");
        spb.validate(t_in);
        transformer.validate();
        if (arch == BackboneArch::Spatial3x3) {
            if (use_trfi) throw ConfigError("spatial baseline runs without TRFI");
            for (int s : spb.strides) {
                if (s != 1) throw ConfigError("spatial baseline supports stride 1 only");
            }
        }
    }
};

struct LossWeights {
    double alpha = 1.0; // MI term
    double beta = 0.5;  // contrastive term
    double gamma = 1.0; // cross-entropy term

    void validate() const {
        if (alpha < 0 || beta < 0 || gamma < 0) throw ConfigError("loss weights must be nonnegative");
        if (alpha == 0 && beta == 0 && gamma == 0) throw ConfigError("loss weights must not all be zero");
    }
};

} // namespace sdr::model
