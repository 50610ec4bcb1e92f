#include "imdp/cfp_fusion.hpp"

namespace imdp::cfp {

CfpFusion::CfpFusion(int view_channels, int encoder_channels, Rng& rng)
    : encoder_channels_(encoder_channels) {
    check_or<ConfigError>(encoder_channels % 4 == 0, "encoder channels must be divisible by 4");
    int cp = encoder_channels / 4;  // per-view projection width
    int cat = encoder_channels + 4 * cp;
    view_proj_rgb_ = nn::Conv2d(view_channels, cp, 1, 1, rng);
    view_proj_srm_ = nn::Conv2d(view_channels, cp, 1, 1, rng);
    view_proj_bayar_ = nn::Conv2d(view_channels, cp, 1, 1, rng);
    view_proj_np_ = nn::Conv2d(view_channels, cp, 1, 1, rng);
    block1_ = nn::Conv2d(cat, encoder_channels, 3, 1, rng);
    block2_ = nn::Conv2d(encoder_channels, encoder_channels, 3, 1, rng);
    norm1_ = nn::InstanceNorm2d(encoder_channels);
    norm2_ = nn::InstanceNorm2d(encoder_channels);
    attn_fc1_ = nn::Linear(cat, std::max(4, cat / 4), rng);
    attn_fc2_ = nn::Linear(std::max(4, cat / 4), encoder_channels, rng);
    shortcut_ = nn::Conv2d(cat, encoder_channels, 1, 1, rng);
}

Var CfpFusion::attention_weights(const Var& concat) const {
    Var pooled = ad::global_avg_pool(concat);
    Var row = ad::reshape(pooled, {1, concat.value().dim(0)});
    Var a = ad::sigmoid(attn_fc2_.forward(ad::gelu(attn_fc1_.forward(row))));
    return ad::reshape(a, {encoder_channels_});
}

FeatureMap CfpFusion::fuse(const FeatureMap& f_sam, const FeatureMap& f_rgb,
                           const FeatureMap& f_srm, const FeatureMap& f_bayar,
                           const FeatureMap& f_noiseprint) const {
    check_or<ChannelMismatch>(f_sam.channels() == encoder_channels_,
                              "cfp: F_sam channels do not match C_e");
    int h = f_sam.height(), w = f_sam.width();

    auto align = [&](const FeatureMap& f, const nn::Conv2d& proj) {
        Var r = f.height() == h && f.width() == w ? f.var() : ad::bicubic_resize(f.var(), h, w);
        return proj.forward(r);
    };
    Var x = ad::concat_channels({f_sam.var(), align(f_rgb, view_proj_rgb_),
                                 align(f_srm, view_proj_srm_), align(f_bayar, view_proj_bayar_),
                                 align(f_noiseprint, view_proj_np_)});

    Var conv = ad::gelu(norm1_.forward(block1_.forward(x)));
    conv = ad::gelu(norm2_.forward(block2_.forward(conv)));

    Var gate = attention_weights(x);
    Var gated = ad::scale_channels(shortcut_.forward(x), gate);
    return FeatureMap(ad::add(conv, gated));
}

void CfpFusion::collect(const std::string& prefix, nn::ParamList& out) const {
    view_proj_rgb_.collect(prefix + ".proj_rgb", out);
    view_proj_srm_.collect(prefix + ".proj_srm", out);
    view_proj_bayar_.collect(prefix + ".proj_bayar", out);
    view_proj_np_.collect(prefix + ".proj_np", out);
    block1_.collect(prefix + ".block1", out);
    norm1_.collect(prefix + ".norm1", out);
    block2_.collect(prefix + ".block2", out);
    norm2_.collect(prefix + ".norm2", out);
    attn_fc1_.collect(prefix + ".attn_fc1", out);
    attn_fc2_.collect(prefix + ".attn_fc2", out);
    shortcut_.collect(prefix + ".shortcut", out);
}

}  // namespace imdp::cfp
