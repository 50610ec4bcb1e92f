#include "imdp/view_branch.hpp"

#include <sstream>

namespace imdp::branch {

ViewBranch::ViewBranch(int in_channels, const BranchHyper& hyper, Rng& rng)
    : in_channels_(in_channels),
      hyper_(hyper),
      stem_(in_channels, hyper.stem_channels, 3, 2, rng),
      enc2_(hyper.stem_channels, hyper.mid_channels, 3, 1, rng),
      enc3_(hyper.mid_channels, hyper.feat_channels, 3, 2, rng),
      enc4_(hyper.feat_channels, hyper.feat_channels, 3, 1, rng),
      dec1_(hyper.feat_channels, hyper.feat_channels, 3, 1, rng),
      dec2_(hyper.feat_channels, hyper.feat_channels, 3, 1, rng),
      head_(hyper.feat_channels, 1, 1, 1, rng) {
    check_or<ChannelMismatch>(hyper.stride == 4, "branch encoder is a fixed stride-4 design");
}

FeatureMap ViewBranch::segment(const Var& view_input) const {
    check_or<ChannelMismatch>(view_input.value().rank() == 3 &&
                                  view_input.value().dim(0) == in_channels_,
                              "view input channels do not match this branch");
    Var z = ad::gelu(stem_.forward(view_input));
    z = ad::gelu(enc2_.forward(z));
    z = ad::gelu(enc3_.forward(z));
    z = ad::gelu(enc4_.forward(z));
    z = ad::gelu(dec1_.forward(z));
    z = dec2_.forward(z);
    return FeatureMap(z);
}

ProbabilityMap ViewBranch::classify(const FeatureMap& f, int out_h, int out_w) const {
    check_or<ChannelMismatch>(f.channels() == hyper_.feat_channels,
                              "feature map does not match this branch's head");
    Var logits = head_.forward(f.var());
    Var up = ad::bilinear_resize(logits, out_h, out_w);
    // The logistic is open-interval in exact arithmetic; keep it so in
    // floating point too, where |logit| > 36 rounds to exactly 0 or 1.
    Var probs = ad::clamp(ad::sigmoid(ad::reshape(up, {out_h, out_w})), 1e-12, 1.0 - 1e-12);
    return ProbabilityMap(probs);
}

std::string ViewBranch::architecture_descriptor() const {
    std::ostringstream os;
    os << "stem" << hyper_.stem_channels << "s2-sep" << hyper_.mid_channels << "s1-sep"
       << hyper_.feat_channels << "s2-sep" << hyper_.feat_channels << "s1|dec"
       << hyper_.feat_channels << "x2|head1|stride" << hyper_.stride;
    return os.str();
}

void ViewBranch::collect(const std::string& prefix, nn::ParamList& out) const {
    stem_.collect(prefix + ".stem", out);
    enc2_.collect(prefix + ".enc2", out);
    enc3_.collect(prefix + ".enc3", out);
    enc4_.collect(prefix + ".enc4", out);
    dec1_.collect(prefix + ".dec1", out);
    dec2_.collect(prefix + ".dec2", out);
    head_.collect(prefix + ".head", out);
}

}  // namespace imdp::branch
