// The full model aggregate: four view branches, the noise extractors, the
// foundation segmenter, CFP fusion and the prompt mixer.

#pragma once

#include "imdp/cfp_fusion.hpp"
#include "imdp/config.hpp"
#include "imdp/foundation.hpp"
#include "imdp/noise_views.hpp"
#include "imdp/prompting.hpp"
#include "imdp/view_branch.hpp"

namespace imdp {

class Model {
public:
    explicit Model(const Config& cfg);

    const Config& config() const { return cfg_; }

    branch::ViewBranch& view_branch(ViewId v);
    const branch::ViewBranch& view_branch(ViewId v) const;

    noise::BayarKernelSet& bayar() { return bayar_; }
    const noise::BayarKernelSet& bayar() const { return bayar_; }
    noise::NoiseprintSurrogate& noiseprint() { return noiseprint_; }
    const noise::NoiseprintSurrogate& noiseprint() const { return noiseprint_; }
    foundation::FoundationModel& fm() { return foundation_; }
    const foundation::FoundationModel& fm() const { return foundation_; }
    cfp::CfpFusion& fusion() { return fusion_; }
    const cfp::CfpFusion& fusion() const { return fusion_; }
    prompting::PromptMixer& mixer() { return mixer_; }
    const prompting::PromptMixer& mixer() const { return mixer_; }

    /// Everything the optimizer updates, in a fixed order.
    nn::ParamList trainable_params() const;
    /// Trainable plus frozen tensors; the checkpoint serialization order.
    nn::ParamList all_params() const;

private:
    Config cfg_;
    branch::ViewBranch rgb_, srm_, bayar_branch_, noiseprint_branch_;
    noise::BayarKernelSet bayar_;
    noise::NoiseprintSurrogate noiseprint_;
    foundation::FoundationModel foundation_;
    cfp::CfpFusion fusion_;
    prompting::PromptMixer mixer_;
};

}  // namespace imdp
