// End-to-end wiring: training loop, inference path, evaluation battery and
// the robustness sweep.

#pragma once

#include <functional>

#include "imdp/dataio.hpp"
#include "imdp/metrics.hpp"
#include "imdp/model.hpp"

namespace imdp::pipeline {

/// Per-view features and probability maps shared by training and inference.
struct ViewForward {
    FeatureMap f_rgb, f_srm, f_bayar, f_noiseprint;
    prompting::PromptCandidateSet candidates;
};

/// Runs noise extraction, the four branches and the ensemble on a
/// preprocessed (3,S,S) image.
ViewForward forward_views(const Model& model, const Tensor& image_chw);

/// One sample's full training graph and its loss pieces.
struct SampleForward {
    ViewForward views;
    ProbabilityMap p_sam;
    ViewId chosen = ViewId::RGB;
    ad::Var seg_sam, seg_p, cpc, img_level;  // scalar graph nodes
    double yhat = 0.0;
};

SampleForward forward_training(const Model& model, const dataio::Preprocessed& pre, int label,
                               const Config& cfg, prompting::OpsStats* stats);

class Trainer {
public:
    Trainer(Model& model, const Config& cfg);

    /// One optimizer step on a batch of samples (augmentation applied here
    /// when enabled). Throws NonFiniteLoss with a diagnostic on divergence.
    LossBreakdown train_step(const std::vector<const ImageSample*>& batch);

    using StepCallback = std::function<void(int step, const LossBreakdown&)>;

    /// Epoch loop with shuffling and the warmup+cosine schedule. Runs
    /// min(epoch budget, cfg.max_steps) steps.
    std::vector<LossBreakdown> run(const std::vector<ImageSample>& dataset,
                                   const StepCallback& on_step = nullptr);

    int global_step() const { return step_; }
    const prompting::OpsStats& stats() const { return stats_; }
    double last_lr() const { return last_lr_; }

private:
    Model& model_;
    Config cfg_;
    dataio::PreprocessConfig pre_cfg_;
    nn::AdamW opt_;
    Rng shuffle_rng_, augment_rng_, reinit_rng_;
    prompting::OpsStats stats_;
    int step_ = 0;
    std::int64_t total_steps_ = 0, warmup_steps_ = 0, steps_per_epoch_ = 1;
    double last_lr_ = 0.0;
};

// ---------------------------------------------------------------------------
// Inference / evaluation
// ---------------------------------------------------------------------------

/// Everything cmd_predict needs; produced without touching masks or labels.
struct Prediction {
    Tensor p_sam;   // (S,S) probabilities on the padded grid
    Tensor valid;   // (S,S) non-padding indicator
    double score = 0.0;
    ViewId chosen = ViewId::ENS;
    int orig_h = 0, orig_w = 0;
};

/// Full forward pass on one raw image (storage channel order, [0,255]).
/// OPS defaults to the ensemble; ground truth is never consulted.
Prediction infer(const Model& model, const Tensor& image_hwc);

/// Prediction phase of evaluate(); reads only sample images.
std::vector<Prediction> predict_all(const Model& model, const std::vector<ImageSample>& samples);

/// Scoring phase: joins predictions with ground truth.
metrics::MetricsReport score_predictions(const std::vector<Prediction>& preds,
                                         const std::vector<ImageSample>& samples,
                                         const std::string& dataset_name);

metrics::MetricsReport evaluate(const Model& model, const std::vector<ImageSample>& samples,
                                const std::string& dataset_name);

struct SweepRow {
    dataio::DegradationSpec spec;
    metrics::MetricsReport report;
};

/// evaluate() once per degradation level over both grids: 6 JPEG rows then
/// 6 blur rows, in declared grid order.
std::vector<SweepRow> robustness_sweep(const Model& model,
                                       const std::vector<ImageSample>& samples);

}  // namespace imdp::pipeline
