// Promptable foundation segmenter seam: frozen image encoder, prompt
// encoder, and cross-attention mask decoder. The toy implementation keeps
// the architectural seams (frozen features, prompt tokens, two-way
// attention decode) that the rest of the pipeline depends on; a real-SAM
// weight-loading adapter can be slotted in behind the same three calls.

#pragma once

#include <vector>

#include "imdp/core_types.hpp"
#include "imdp/nn.hpp"

namespace imdp::foundation {

using ad::Var;

struct FoundationSpec {
    int encoder_stride = 8;    // s_e
    int encoder_channels = 64; // C_e
    int prompt_dim = 64;       // D, token dimension shared with the decoder
    int decoder_upsample = 4;  // grid upscale before the final resize

    bool operator==(const FoundationSpec&) const = default;
};

/// Number of dense prompt tokens emitted by prompt_encode (2x2 pooled grid).
inline constexpr int kDensePromptTokens = 4;

class FoundationModel {
public:
    FoundationModel() = default;
    FoundationModel(const FoundationSpec& spec, Rng& rng);

    const FoundationSpec& spec() const { return spec_; }

    /// (3,H,W) with H,W divisible by the encoder stride ->
    /// (C_e, H/s_e, W/s_e). The encoder is frozen: no gradient ever reaches
    /// its weights.
    FeatureMap image_encode(const Tensor& image_chw) const;

    /// Dense mask tokens + 2 corner tokens per box. An empty mask yields the
    /// learned no-mask embedding broadcast over the dense tokens and no
    /// sparse tokens.
    PromptEmbedding prompt_encode(const BinaryMask& mask,
                                  const std::vector<BoxPrompt>& boxes) const;

    /// (C_e,h,w) features + (N,D) prompt tokens -> (h*s_e, w*s_e)
    /// probability map.
    ProbabilityMap mask_decode(const FeatureMap& f_cfp, const PromptEmbedding& f_mix) const;

    /// Fourier positional encoding of a normalized point; exposed so tests
    /// can verify box-token construction against the formula.
    Tensor positional_encoding(double x_norm, double y_norm) const;
    const Tensor& corner_embedding(int which) const;

    /// FNV-1a over the frozen encoder weights; invariant across training.
    std::uint64_t encoder_checksum() const;

    void collect_trainable(const std::string& prefix, nn::ParamList& out) const;
    void collect_frozen(const std::string& prefix, nn::ParamList& out) const;

private:
    Var encode_graph(const Var& x) const;

    FoundationSpec spec_;

    // Frozen encoder (3 stride-2 conv blocks).
    nn::Conv2d enc1_, enc2_, enc3_;

    // Prompt encoder.
    Var pe_basis_;          // (2, D/2) fixed Gaussian directions, frozen
    Var corner_embed_;      // (2, D) learned corner-type embeddings
    Var no_mask_embed_;     // (1, D)
    nn::Conv2d mask_conv1_, mask_conv2_;

    // Decoder.
    nn::Conv2d img_proj_;
    Var output_token_;      // (1, D)
    nn::Attention token_self_, token_to_img_, img_to_token_;
    nn::LayerNorm ln1_, ln2_, ln3_, ln4_;
    nn::Mlp token_mlp_;
    nn::Conv2d up1_, up2_;
    nn::Linear hyper_;
    Var mask_bias_;         // (1)
};

}  // namespace imdp::foundation
