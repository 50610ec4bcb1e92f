// Cross-view Feature Perception unit: fuses the frozen-encoder features with
// the four view features via bicubic alignment, two conv blocks, and a
// squeeze-excite style attention gate on a projected shortcut.

#pragma once

#include "imdp/core_types.hpp"
#include "imdp/nn.hpp"

namespace imdp::cfp {

using ad::Var;

class CfpFusion {
public:
    CfpFusion() = default;
    /// view_channels = C_f of each branch feature, encoder_channels = C_e.
    CfpFusion(int view_channels, int encoder_channels, Rng& rng);

    int encoder_channels() const { return encoder_channels_; }

    /// All view features are bicubically resampled to F_sam's grid; output
    /// is (C_e, H', W') on that grid.
    FeatureMap fuse(const FeatureMap& f_sam, const FeatureMap& f_rgb, const FeatureMap& f_srm,
                    const FeatureMap& f_bayar, const FeatureMap& f_noiseprint) const;

    /// Channel attention weights for a given concatenated input; exposed for
    /// tests (strictly inside (0,1)).
    Var attention_weights(const Var& concat) const;

    void collect(const std::string& prefix, nn::ParamList& out) const;

private:
    int encoder_channels_ = 0;
    nn::Conv2d view_proj_rgb_, view_proj_srm_, view_proj_bayar_, view_proj_np_;
    nn::Conv2d block1_, block2_;
    nn::InstanceNorm2d norm1_, norm2_;
    nn::Linear attn_fc1_, attn_fc2_;  // squeeze-excite pair
    nn::Conv2d shortcut_;
};

}  // namespace imdp::cfp
