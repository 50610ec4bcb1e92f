// Prompt-learning core: ensemble construction, Optimal Prompt Selection,
// mask/box prompt derivation, Cross-View Prompt Consistency loss, and the
// Prompt Mixing Module.

#pragma once

#include <array>
#include <optional>
#include <vector>

#include "imdp/core_types.hpp"
#include "imdp/losses.hpp"
#include "imdp/nn.hpp"

namespace imdp::prompting {

using ad::Var;

/// The five candidate maps in fixed view order; losses are filled by
/// select_optimal. The ENS entry must equal the mean of the other four.
struct PromptCandidateSet {
    std::array<ProbabilityMap, 5> maps;  // indexed by kViewOrder position
    std::array<double, 5> losses{};

    const ProbabilityMap& map(ViewId v) const { return maps[static_cast<std::size_t>(v)]; }
};

/// Pixelwise arithmetic mean of the four view maps.
ProbabilityMap ensemble(const ProbabilityMap& p_rgb, const ProbabilityMap& p_srm,
                        const ProbabilityMap& p_bayar, const ProbabilityMap& p_noiseprint);

/// Builds the candidate set (computing ENS) and checks its invariants.
PromptCandidateSet make_candidates(const ProbabilityMap& p_rgb, const ProbabilityMap& p_srm,
                                   const ProbabilityMap& p_bayar,
                                   const ProbabilityMap& p_noiseprint);

struct Selection {
    ProbabilityMap p_opt;
    ViewId chosen = ViewId::RGB;
};

/// Training-time OPS: the candidate with minimal focal loss against G wins;
/// ties resolved by the fixed view order. G may contain ignore pixels.
Selection select_optimal(PromptCandidateSet& candidates, const Tensor& gt,
                         const losses::FocalParams& params);

/// Pixelwise p >= threshold.
BinaryMask derive_mask(const ProbabilityMap& p_opt, double threshold = 0.5);

/// One tight box per 8-connected foreground component, largest first,
/// truncated to k_max. Empty mask -> empty list.
std::vector<BoxPrompt> derive_boxes(const BinaryMask& mask, int k_max = 4);

/// Sum of the four views' focal losses against the binarized,
/// gradient-detached P_opt (hard pseudo-labels). `valid` restricts the loss
/// to non-ignored pixels; pass an empty tensor for all-valid.
Var cpc_loss(const std::array<const ProbabilityMap*, 4>& views, const ProbabilityMap& p_opt,
             const Tensor& valid, const losses::FocalParams& params);

/// Prompt Mixing Module: flattens F_CFP to tokens, projects them to D,
/// concatenates with F_opt tokens and runs the shared two-layer perceptron.
class PromptMixer {
public:
    PromptMixer() = default;
    PromptMixer(int feature_channels, int prompt_dim, Rng& rng);

    PromptEmbedding mix(const FeatureMap& f_cfp, const PromptEmbedding& f_opt) const;
    void collect(const std::string& prefix, nn::ParamList& out) const;

private:
    int prompt_dim_ = 0;
    nn::Linear proj_;
    nn::Mlp mlp_;
};

struct InferencePrompt {
    ProbabilityMap p_opt;  // always the ensemble
    BinaryMask mask;
    std::vector<BoxPrompt> boxes;
    ViewId chosen = ViewId::ENS;
};

/// Inference-time OPS: defaults to the ensemble; never reads ground truth.
InferencePrompt inference_prompt(const PromptCandidateSet& candidates, double threshold = 0.5,
                                 int k_max = 4);

/// Chosen-view counter exported per training run.
class OpsStats {
public:
    void record(ViewId v) { counts_[static_cast<std::size_t>(v)]++; }
    std::int64_t count(ViewId v) const { return counts_[static_cast<std::size_t>(v)]; }
    std::int64_t total() const;
    double proportion(ViewId v) const;
    std::string to_csv() const;  // header + one row per view

private:
    std::array<std::int64_t, 5> counts_{};
};

}  // namespace imdp::prompting
