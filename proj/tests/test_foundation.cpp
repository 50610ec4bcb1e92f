#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "imdp/foundation.hpp"
#include "imdp/nn.hpp"
#include "oracles.hpp"

using namespace imdp;
using namespace imdp::foundation;
using ad::Var;

namespace {

FoundationModel small_model(std::uint64_t seed = 11) {
    FoundationSpec spec;
    spec.encoder_channels = 16;
    spec.prompt_dim = 16;
    Rng rng = RngFactory(seed).stream("fm");
    return FoundationModel(spec, rng);
}

}  // namespace

TEST_CASE("image_encode: shape contract and determinism") {
    FoundationModel fm = small_model();
    Rng rng = RngFactory(1).stream("enc");
    Tensor img = oracles::random_tensor({3, 64, 64}, rng);
    FeatureMap a = fm.image_encode(img);
    CHECK(a.channels() == 16);
    CHECK(a.height() == 8);
    CHECK(a.width() == 8);
    FeatureMap b = fm.image_encode(img);
    for (std::size_t i = 0; i < a.values().size(); ++i)
        CHECK(a.values()[i] == b.values()[i]);
}

TEST_CASE("image_encode rejects non-divisible dims") {
    FoundationModel fm = small_model();
    Tensor img({3, 60, 64}, 0.0);
    CHECK_THROWS_AS(fm.image_encode(img), PaddingRequired);
}

TEST_CASE("encoder is frozen: no gradient path and stable checksum") {
    FoundationModel fm = small_model();
    std::uint64_t sum_before = fm.encoder_checksum();
    Rng rng = RngFactory(2).stream("frozen");
    Tensor img = oracles::random_tensor({3, 16, 16}, rng);
    FeatureMap f = fm.image_encode(img);
    CHECK_FALSE(f.var().requires_grad());

    // Take several optimizer steps on everything trainable.
    nn::ParamList params;
    fm.collect_trainable("fm", params);
    std::vector<Var> vars;
    for (auto& [n, v] : params) vars.push_back(v);
    nn::AdamW opt(vars, {});
    for (int step = 0; step < 3; ++step) {
        opt.zero_grad();
        BinaryMask mask(16, 16);
        mask.set(3, 3, true);
        PromptEmbedding tokens = fm.prompt_encode(mask, {BoxPrompt(3, 3, 3, 3, 16, 16)});
        ProbabilityMap p = fm.mask_decode(fm.image_encode(img), tokens);
        ad::mean_all(p.var()).backward();
        opt.step(1e-3);
    }
    CHECK(fm.encoder_checksum() == sum_before);
}

TEST_CASE("prompt_encode: token counts") {
    FoundationModel fm = small_model();
    BinaryMask mask(16, 16);
    mask.set(4, 4, true);
    mask.set(4, 5, true);

    std::vector<BoxPrompt> boxes{BoxPrompt(4, 4, 5, 4, 16, 16)};
    PromptEmbedding one_box = fm.prompt_encode(mask, boxes);
    CHECK(one_box.token_count() == kDensePromptTokens + 2);
    CHECK(one_box.dim() == 16);

    boxes.emplace_back(0, 0, 2, 2, 16, 16);
    CHECK(fm.prompt_encode(mask, boxes).token_count() == kDensePromptTokens + 4);
}

TEST_CASE("prompt_encode: empty mask takes the learned no-mask path") {
    FoundationModel fm = small_model();
    BinaryMask empty(16, 16);
    PromptEmbedding tokens = fm.prompt_encode(empty, {});
    CHECK(tokens.token_count() == kDensePromptTokens);
    // Every dense token equals the no-mask embedding row.
    nn::ParamList params;
    fm.collect_trainable("fm", params);
    const Tensor* no_mask = nullptr;
    for (auto& [name, var] : params)
        if (name == "fm.prompt.no_mask") no_mask = &var.value();
    REQUIRE(no_mask != nullptr);
    for (int t = 0; t < kDensePromptTokens; ++t)
        for (int d = 0; d < 16; ++d)
            CHECK(tokens.values().at(t, d) == (*no_mask)[static_cast<std::size_t>(d)]);
}

TEST_CASE("box translation changes only the positional components") {
    FoundationModel fm = small_model();
    BinaryMask mask(32, 32);
    mask.set(2, 2, true);
    auto tokens_for = [&](int x1, int y1, int x2, int y2) {
        return fm.prompt_encode(mask, {BoxPrompt(x1, y1, x2, y2, 32, 32)}).values();
    };
    Tensor a = tokens_for(2, 2, 6, 6);
    Tensor b = tokens_for(5, 7, 9, 11);  // translated by (3,5)

    // Oracle: token = positional_encoding(corner) + corner embedding, so the
    // difference of corner tokens must equal the difference of the PE rows.
    for (int corner = 0; corner < 2; ++corner) {
        int row = kDensePromptTokens + corner;
        double ax = corner == 0 ? 2 : 6, ay = corner == 0 ? 2 : 6;
        double bx = corner == 0 ? 5 : 9, by = corner == 0 ? 7 : 11;
        Tensor pe_a = fm.positional_encoding((ax + 0.5) / 32, (ay + 0.5) / 32);
        Tensor pe_b = fm.positional_encoding((bx + 0.5) / 32, (by + 0.5) / 32);
        for (int d = 0; d < 16; ++d)
            CHECK(b.at(row, d) - a.at(row, d) ==
                  doctest::Approx(pe_b[static_cast<std::size_t>(d)] -
                                  pe_a[static_cast<std::size_t>(d)])
                      .epsilon(1e-12));
    }
    // Dense rows are untouched by box placement.
    for (int t = 0; t < kDensePromptTokens; ++t)
        for (int d = 0; d < 16; ++d) CHECK(a.at(t, d) == b.at(t, d));
}

TEST_CASE("prompt_encode rejects boxes outside the mask") {
    FoundationModel fm = small_model();
    BinaryMask mask(16, 16);
    mask.set(0, 0, true);
    CHECK_THROWS_AS(fm.prompt_encode(mask, {BoxPrompt(0, 0, 20, 20, 32, 32)}), InvalidBox);
}

TEST_CASE("mask_decode: output range and full-resolution shape") {
    FoundationModel fm = small_model();
    Rng rng = RngFactory(3).stream("dec");
    for (int trial = 0; trial < 20; ++trial) {
        Tensor feats = oracles::random_tensor({16, 4, 4}, rng, -2.0, 2.0);
        Tensor toks = oracles::random_tensor({5, 16}, rng, -2.0, 2.0);
        ProbabilityMap p = fm.mask_decode(FeatureMap(Var::constant(feats)),
                                          PromptEmbedding(Var::constant(toks)));
        CHECK(p.height() == 32);
        CHECK(p.width() == 32);
        CHECK(p.values().min() > 0.0);
        CHECK(p.values().max() < 1.0);
    }
}

TEST_CASE("mask_decode: zero prompts and zero features give a constant map") {
    FoundationModel fm = small_model();
    Tensor feats({16, 4, 4});
    Tensor toks({3, 16});
    ProbabilityMap p = fm.mask_decode(FeatureMap(Var::constant(feats)),
                                      PromptEmbedding(Var::constant(toks)));
    double v0 = p.values()[0];
    for (std::size_t i = 0; i < p.values().size(); ++i)
        CHECK(p.values()[i] == doctest::Approx(v0).epsilon(1e-9));
}

TEST_CASE("mask_decode rejects incompatible dims") {
    FoundationModel fm = small_model();
    Tensor bad_feats({8, 4, 4});
    Tensor toks({2, 16});
    CHECK_THROWS_AS(fm.mask_decode(FeatureMap(Var::constant(bad_feats)),
                                   PromptEmbedding(Var::constant(toks))),
                    DimensionMismatch);
    Tensor feats({16, 4, 4});
    Tensor bad_toks({2, 8});
    CHECK_THROWS_AS(fm.mask_decode(FeatureMap(Var::constant(feats)),
                                   PromptEmbedding(Var::constant(bad_toks))),
                    DimensionMismatch);
}

TEST_CASE("decoder and prompt-encoder gradients match finite differences") {
    FoundationSpec spec;
    spec.encoder_channels = 8;
    spec.prompt_dim = 8;
    Rng rng = RngFactory(4).stream("fm_grad");
    FoundationModel fm(spec, rng);
    Tensor feats = oracles::random_tensor({8, 2, 2}, rng);
    BinaryMask mask(16, 16);
    mask.set(5, 5, true);
    mask.set(5, 6, true);
    std::vector<BoxPrompt> boxes{BoxPrompt(5, 5, 6, 5, 16, 16)};
    auto forward = [&] {
        PromptEmbedding toks = fm.prompt_encode(mask, boxes);
        return ad::mean_all(
            fm.mask_decode(FeatureMap(Var::constant(feats)), toks).var());
    };
    nn::ParamList params;
    fm.collect_trainable("fm", params);
    for (auto& [name, var] : params) {
        INFO(name);
        CHECK(oracles::gradient_check(forward, var) < 1e-3);
    }
}

TEST_CASE("trainable parts actually move under training") {
    FoundationModel fm = small_model(99);
    Rng rng = RngFactory(5).stream("move");
    Tensor img = oracles::random_tensor({3, 16, 16}, rng);
    nn::ParamList params;
    fm.collect_trainable("fm", params);
    std::vector<Tensor> before;
    for (auto& [n, v] : params) before.push_back(v.value());

    std::vector<Var> vars;
    for (auto& [n, v] : params) vars.push_back(v);
    nn::AdamW opt(vars, {});
    opt.zero_grad();
    BinaryMask mask(16, 16);
    mask.set(1, 1, true);
    PromptEmbedding toks = fm.prompt_encode(mask, {BoxPrompt(1, 1, 1, 1, 16, 16)});
    ProbabilityMap p = fm.mask_decode(fm.image_encode(img), toks);
    ad::mean_all(p.var()).backward();
    opt.step(1e-2);

    bool decoder_moved = false, prompt_moved = false;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& now = params[i].second.value();
        for (std::size_t j = 0; j < now.size(); ++j)
            if (now[j] != before[i][j]) {
                if (params[i].first.find(".decoder.") != std::string::npos) decoder_moved = true;
                if (params[i].first.find(".prompt.") != std::string::npos) prompt_moved = true;
            }
    }
    CHECK(decoder_moved);
    CHECK(prompt_moved);
}
