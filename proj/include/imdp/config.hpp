// Flat key=value configuration covering the training recipe and the
// desk-scale model dimensions. The same keys are embedded in checkpoints so
// a model can be rebuilt from its file alone.

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "imdp/losses.hpp"

namespace imdp {

struct Config {
    // Optimization (defaults follow the published recipe).
    double lr = 1e-4;
    int batch_size = 4;
    int epochs = 100;
    int warmup_epochs = 1;
    double warmup_start_factor = 1e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double clip_norm = 1.0;
    int max_steps = 0;  // 0 = run the full epoch budget

    // Objective.
    double lambda1 = 1.0;
    double lambda2 = 0.1;
    double lambda3 = 1.0;
    // Ramps lambda3 from 0 to its full value over this many epochs; 0 keeps
    // it constant. Stabilizes the image-level loss on tiny fixtures where a
    // diffuse early decoder map lets the pooled-BCE gradient flood the mask.
    int img_loss_warmup_epochs = 0;
    double focal_gamma = 2.0;
    double focal_alpha = 0.25;
    double focal_clamp_eps = 1e-6;

    // Prompting.
    double mask_threshold = 0.5;
    int k_max = 4;
    std::string force_view;  // ablation knob: fixes the OPS choice when set

    // Data.
    int image_size = 64;
    bool augment = true;
    double flip_prob = 0.5;
    double min_crop_fraction = 0.75;

    std::uint64_t seed = 0;

    // Model dimensions.
    int branch_stem = 16;
    int branch_mid = 24;
    int branch_feat = 32;
    int encoder_channels = 64;
    int prompt_dim = 64;
    int bayar_kernels = 3;
    int bayar_kernel_size = 5;
    int noiseprint_hidden = 16;

    losses::FocalParams focal() const { return {focal_gamma, focal_alpha, focal_clamp_eps}; }
};

/// Throws ConfigError when a value is out of range (e.g. image_size not
/// divisible by the encoder stride).
void validate_config(const Config& cfg);

std::map<std::string, std::string> config_to_kv(const Config& cfg);
Config config_from_kv(const std::map<std::string, std::string>& kv);

/// key = value lines, '#' comments. Unknown keys are rejected.
Config load_config(const std::string& path);
void save_config(const Config& cfg, const std::string& path);

}  // namespace imdp
