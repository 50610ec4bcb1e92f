// Per-view lightweight segmenter + classifier head. The four branches share
// hyperparameters but never parameters.

#pragma once

#include "imdp/core_types.hpp"
#include "imdp/nn.hpp"

namespace imdp::branch {

using ad::Var;

/// Architecture hyperparameters; identical across the four branches.
struct BranchHyper {
    int stem_channels = 16;
    int mid_channels = 24;
    int feat_channels = 32;  // C_f
    int stride = 4;          // output stride of the feature map
};

/// Depthwise-separable encoder (stride 4) + 2-layer conv decoder + 1x1
/// classifier head whose logits are upsampled to full resolution.
class ViewBranch {
public:
    ViewBranch() = default;
    ViewBranch(int in_channels, const BranchHyper& hyper, Rng& rng);

    int in_channels() const { return in_channels_; }
    const BranchHyper& hyper() const { return hyper_; }

    /// (C_in,H,W) -> (C_f, H/stride, W/stride).
    FeatureMap segment(const Var& view_input) const;

    /// Head logits upsampled bilinearly to (out_h,out_w), then sigmoid.
    ProbabilityMap classify(const FeatureMap& f, int out_h, int out_w) const;

    /// Serialized hyperparameter descriptor; input channels excluded since
    /// they necessarily differ per view.
    std::string architecture_descriptor() const;

    void collect(const std::string& prefix, nn::ParamList& out) const;

private:
    int in_channels_ = 0;
    BranchHyper hyper_;
    nn::Conv2d stem_;
    nn::SeparableConv2d enc2_, enc3_, enc4_;
    nn::Conv2d dec1_, dec2_;
    nn::Conv2d head_;
};

}  // namespace imdp::branch
