#include "imdp/foundation.hpp"

#include <cmath>

namespace imdp::foundation {

namespace {
constexpr double kTwoPi = 6.2831853071795864769;

std::uint64_t fnv1a(std::uint64_t h, const Tensor& t) {
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t i = 0; i < t.size() * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}
}  // namespace

FoundationModel::FoundationModel(const FoundationSpec& spec, Rng& rng) : spec_(spec) {
    check_or<ConfigError>(spec.encoder_stride == 8, "toy encoder is a fixed stride-8 design");
    check_or<ConfigError>(spec.prompt_dim % 4 == 0, "prompt dim must be divisible by 4");
    int ce = spec.encoder_channels, d = spec.prompt_dim;

    enc1_ = nn::Conv2d(3, ce / 4, 3, 2, rng, ad::Pad::Zero, /*trainable=*/false);
    enc2_ = nn::Conv2d(ce / 4, ce / 2, 3, 2, rng, ad::Pad::Zero, false);
    enc3_ = nn::Conv2d(ce / 2, ce, 3, 2, rng, ad::Pad::Zero, false);

    Tensor basis({2, d / 2});
    for (std::size_t i = 0; i < basis.size(); ++i) basis[i] = rng.normal(0.0, 1.0);
    pe_basis_ = Var::constant(std::move(basis));
    corner_embed_ = Var::param(nn::kaiming_init({2, d}, d, rng), "prompt.corner");
    no_mask_embed_ = Var::param(nn::kaiming_init({1, d}, d, rng), "prompt.no_mask");
    mask_conv1_ = nn::Conv2d(1, d / 4, 3, 1, rng);
    mask_conv2_ = nn::Conv2d(d / 4, d, 3, 1, rng);

    img_proj_ = nn::Conv2d(ce, d, 1, 1, rng);
    output_token_ = Var::param(nn::kaiming_init({1, d}, d, rng), "decoder.output_token");
    token_self_ = nn::Attention(d, rng);
    token_to_img_ = nn::Attention(d, rng);
    img_to_token_ = nn::Attention(d, rng);
    ln1_ = nn::LayerNorm(d);
    ln2_ = nn::LayerNorm(d);
    ln3_ = nn::LayerNorm(d);
    ln4_ = nn::LayerNorm(d);
    token_mlp_ = nn::Mlp(d, 2 * d, d, rng);
    up1_ = nn::Conv2d(d, d / 2, 3, 1, rng, ad::Pad::Reflect);
    up2_ = nn::Conv2d(d / 2, d / 4, 3, 1, rng, ad::Pad::Reflect);
    hyper_ = nn::Linear(d, d / 4, rng);
    mask_bias_ = Var::param(Tensor({1}), "decoder.mask_bias");
}

Var FoundationModel::encode_graph(const Var& x) const {
    Var z = ad::gelu(enc1_.forward(x));
    z = ad::gelu(enc2_.forward(z));
    z = ad::gelu(enc3_.forward(z));
    return z;
}

FeatureMap FoundationModel::image_encode(const Tensor& image_chw) const {
    check_or<DimensionMismatch>(image_chw.rank() == 3 && image_chw.dim(0) == 3,
                                "image_encode: (3,H,W) input required");
    check_or<PaddingRequired>(
        image_chw.dim(1) % spec_.encoder_stride == 0 &&
            image_chw.dim(2) % spec_.encoder_stride == 0,
        "image dims must be divisible by the encoder stride; pad first");
    return FeatureMap(encode_graph(Var::constant(image_chw)));
}

Tensor FoundationModel::positional_encoding(double x_norm, double y_norm) const {
    int half = spec_.prompt_dim / 2;
    Tensor pe({spec_.prompt_dim});
    for (int j = 0; j < half; ++j) {
        double angle = kTwoPi * (x_norm * pe_basis_.value().at(0, j) + y_norm * pe_basis_.value().at(1, j));
        pe[static_cast<std::size_t>(j)] = std::sin(angle);
        pe[static_cast<std::size_t>(half + j)] = std::cos(angle);
    }
    return pe;
}

const Tensor& FoundationModel::corner_embedding(int which) const {
    check(which == 0 || which == 1, "corner_embedding: index must be 0 or 1");
    return corner_embed_.value();
}

PromptEmbedding FoundationModel::prompt_encode(const BinaryMask& mask,
                                               const std::vector<BoxPrompt>& boxes) const {
    int h = mask.height(), w = mask.width();
    check_or<DimensionMismatch>(h > 0 && w > 0, "prompt_encode: empty mask dims");
    int s = spec_.encoder_stride;
    check_or<PaddingRequired>(h % s == 0 && w % s == 0,
                              "mask dims must be divisible by the encoder stride");
    for (const BoxPrompt& b : boxes)
        check_or<InvalidBox>(b.x2 < w && b.y2 < h, "box outside mask");

    int d = spec_.prompt_dim;
    ad::VarList tokens;

    if (mask.empty_mask()) {
        // Unprompted path: learned no-mask embedding, no sparse tokens.
        ad::VarList dense(kDensePromptTokens, no_mask_embed_);
        return PromptEmbedding(ad::concat_rows(dense));
    }

    // Dense path: area-max pooled mask grid -> conv encode -> 2x2 tokens.
    int gh = h / s, gw = w / s;
    Tensor grid({1, gh, gw});
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
            double v = 0.0;
            for (int i = 0; i < s && v == 0.0; ++i)
                for (int j = 0; j < s; ++j)
                    if (mask.at(gy * s + i, gx * s + j)) {
                        v = 1.0;
                        break;
                    }
            grid.at(0, gy, gx) = v;
        }
    Var dense = ad::gelu(mask_conv1_.forward(Var::constant(grid)));
    dense = mask_conv2_.forward(dense);
    Var dense_tokens = ad::chw_to_tokens(ad::avg_pool_grid(dense, 2, 2));  // (4, D)
    tokens.push_back(dense_tokens);

    // Sparse path: two corner tokens per box, positional encoding plus a
    // learned corner-type embedding.
    for (const BoxPrompt& b : boxes) {
        for (int corner = 0; corner < 2; ++corner) {
            double px = corner == 0 ? b.x1 : b.x2;
            double py = corner == 0 ? b.y1 : b.y2;
            Tensor pe = positional_encoding((px + 0.5) / w, (py + 0.5) / h);
            Var pe_row = Var::constant(pe.reshaped({1, d}));
            tokens.push_back(ad::add(pe_row, ad::slice_rows(corner_embed_, corner, 1)));
        }
    }
    return PromptEmbedding(ad::concat_rows(tokens));
}

ProbabilityMap FoundationModel::mask_decode(const FeatureMap& f_cfp,
                                            const PromptEmbedding& f_mix) const {
    check_or<DimensionMismatch>(f_cfp.channels() == spec_.encoder_channels,
                                "mask_decode: feature channels incompatible with decoder");
    check_or<DimensionMismatch>(f_mix.dim() == spec_.prompt_dim,
                                "mask_decode: prompt token dim mismatch");
    int h = f_cfp.height(), w = f_cfp.width();

    Var img = ad::chw_to_tokens(img_proj_.forward(f_cfp.var()));  // (h*w, D)
    Var tok = ad::concat_rows({output_token_, f_mix.var()});

    // Two-way attention block (post-norm).
    tok = ln1_.forward(ad::add(tok, token_self_.forward(tok, tok)));
    tok = ln2_.forward(ad::add(tok, token_to_img_.forward(tok, img)));
    tok = ln3_.forward(ad::add(tok, token_mlp_.forward(tok)));
    img = ln4_.forward(ad::add(img, img_to_token_.forward(img, tok)));

    // Upscale the image grid and score it against the output token.
    Var grid = ad::tokens_to_chw(img, h, w);
    grid = ad::gelu(up1_.forward(ad::bilinear_resize(grid, 2 * h, 2 * w)));
    grid = ad::gelu(up2_.forward(ad::bilinear_resize(grid, 4 * h, 4 * w)));

    Var out_tok = ad::slice_rows(tok, 0, 1);
    Var hvec = ad::reshape(hyper_.forward(out_tok), {spec_.prompt_dim / 4});
    Var logits = ad::channel_dot(grid, hvec, mask_bias_);  // (4h, 4w)

    int full_h = h * spec_.encoder_stride, full_w = w * spec_.encoder_stride;
    Var full = ad::reshape(
        ad::bilinear_resize(ad::reshape(logits, {1, 4 * h, 4 * w}), full_h, full_w),
        {full_h, full_w});
    return ProbabilityMap(ad::sigmoid(full));
}

std::uint64_t FoundationModel::encoder_checksum() const {
    std::uint64_t h = 14695981039346656037ull;
    for (const nn::Conv2d* c : {&enc1_, &enc2_, &enc3_}) {
        h = fnv1a(h, c->w.value());
        h = fnv1a(h, c->b.value());
    }
    return h;
}

void FoundationModel::collect_trainable(const std::string& prefix, nn::ParamList& out) const {
    nn::add_param(out, prefix + ".prompt.corner", corner_embed_);
    nn::add_param(out, prefix + ".prompt.no_mask", no_mask_embed_);
    mask_conv1_.collect(prefix + ".prompt.mask_conv1", out);
    mask_conv2_.collect(prefix + ".prompt.mask_conv2", out);
    img_proj_.collect(prefix + ".decoder.img_proj", out);
    nn::add_param(out, prefix + ".decoder.output_token", output_token_);
    token_self_.collect(prefix + ".decoder.token_self", out);
    token_to_img_.collect(prefix + ".decoder.token_to_img", out);
    img_to_token_.collect(prefix + ".decoder.img_to_token", out);
    ln1_.collect(prefix + ".decoder.ln1", out);
    ln2_.collect(prefix + ".decoder.ln2", out);
    ln3_.collect(prefix + ".decoder.ln3", out);
    ln4_.collect(prefix + ".decoder.ln4", out);
    token_mlp_.collect(prefix + ".decoder.mlp", out);
    up1_.collect(prefix + ".decoder.up1", out);
    up2_.collect(prefix + ".decoder.up2", out);
    hyper_.collect(prefix + ".decoder.hyper", out);
    nn::add_param(out, prefix + ".decoder.mask_bias", mask_bias_);
}

void FoundationModel::collect_frozen(const std::string& prefix, nn::ParamList& out) const {
    enc1_.collect(prefix + ".encoder.enc1", out);
    enc2_.collect(prefix + ".encoder.enc2", out);
    enc3_.collect(prefix + ".encoder.enc3", out);
    // The positional basis is a fixed buffer; serialized with the encoder.
    nn::add_param(out, prefix + ".prompt.pe_basis", pe_basis_);
}

}  // namespace imdp::foundation
