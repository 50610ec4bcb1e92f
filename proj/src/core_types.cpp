#include "imdp/core_types.hpp"

namespace imdp {

const char* to_string(ViewId v) {
    switch (v) {
        case ViewId::RGB: return "RGB";
        case ViewId::SRM: return "SRM";
        case ViewId::BAYAR: return "BAYAR";
        case ViewId::NOISEPRINT: return "NOISEPRINT";
        case ViewId::ENS: return "ENS";
    }
    return "?";
}

ViewId view_from_string(const std::string& s) {
    for (ViewId v : kViewOrder)
        if (s == to_string(v)) return v;
    throw Error("unknown view id: " + s);
}

namespace {
ImageSample::AccessHook& access_hook() {
    static ImageSample::AccessHook hook;
    return hook;
}
}  // namespace

ImageSample::ImageSample(std::string id, Tensor image, std::optional<Tensor> mask, int label)
    : id_(std::move(id)), image_(std::move(image)), mask_(std::move(mask)), label_(label) {}

void ImageSample::set_access_hook(AccessHook hook) { access_hook() = std::move(hook); }
void ImageSample::clear_access_hook() { access_hook() = nullptr; }

void ImageSample::observe(const char* field) const {
    if (access_hook()) access_hook()(*this, field);
}

const ImageSample& validate_sample(const ImageSample& sample) {
    const Tensor& img = sample.image();
    check_or<DimensionMismatch>(img.rank() == 3 && img.dim(2) == 3,
                                "sample image must be HxWx3");
    check_or<NonFinite>(img.all_finite(), "sample image contains non-finite values");
    check_or<ValueRange>(img.min() >= 0.0 && img.max() <= 255.0,
                         "sample pixel outside [0,255]");
    const auto& mask = sample.mask_unchecked();
    if (mask.has_value()) {
        check_or<DimensionMismatch>(
            mask->rank() == 2 && mask->dim(0) == img.dim(0) && mask->dim(1) == img.dim(1),
            "mask dims differ from image");
        check_or<NonFinite>(mask->all_finite(), "mask contains non-finite values");
        for (std::size_t i = 0; i < mask->size(); ++i)
            check_or<ValueRange>((*mask)[i] == 0.0 || (*mask)[i] == 1.0,
                                 "mask values must be binary");
    }
    check_or<ValueRange>(sample.label_unchecked() == 0 || sample.label_unchecked() == 1,
                         "label must be 0 or 1");
    return sample;
}

ProbabilityMap::ProbabilityMap(ad::Var values) : values_(std::move(values)) {
    const Tensor& v = values_.value();
    check_or<DimensionMismatch>(v.rank() == 2, "probability map must be HxW");
    check_or<NonFinite>(v.all_finite(), "probability map contains non-finite values");
    check_or<ValueRange>(v.min() >= 0.0 && v.max() <= 1.0, "probability outside [0,1]");
}

std::size_t BinaryMask::count() const {
    std::size_t n = 0;
    for (auto v : values_) n += v;
    return n;
}

Tensor BinaryMask::to_tensor() const {
    Tensor t({h_, w_});
    for (std::size_t i = 0; i < values_.size(); ++i) t[i] = values_[i] ? 1.0 : 0.0;
    return t;
}

BoxPrompt::BoxPrompt(int x1_, int y1_, int x2_, int y2_, int img_w, int img_h)
    : x1(x1_), y1(y1_), x2(x2_), y2(y2_) {
    check_or<InvalidBox>(0 <= x1 && x1 <= x2 && x2 < img_w && 0 <= y1 && y1 <= y2 && y2 < img_h,
                         "box outside image or inverted");
}

FeatureMap::FeatureMap(ad::Var values) : values_(std::move(values)) {
    const Tensor& v = values_.value();
    check_or<DimensionMismatch>(v.rank() == 3, "feature map must be CxHxW");
    check_or<NonFinite>(v.all_finite(), "feature map contains non-finite values");
}

PromptEmbedding::PromptEmbedding(ad::Var tokens) : tokens_(std::move(tokens)) {
    const Tensor& v = tokens_.value();
    check_or<DimensionMismatch>(v.rank() == 2, "prompt embedding must be NxD");
    check_or<NonFinite>(v.all_finite(), "prompt embedding contains non-finite values");
}

LossBreakdown make_loss_breakdown(double seg_sam, double seg_p, double cpc, double img_level,
                                  double lambda1, double lambda2, double lambda3) {
    LossBreakdown b;
    b.seg_sam = seg_sam;
    b.seg_p = seg_p;
    b.cpc = cpc;
    b.img_level = img_level;
    b.lambda1 = lambda1;
    b.lambda2 = lambda2;
    b.lambda3 = lambda3;
    b.total = seg_sam + lambda1 * seg_p + lambda2 * cpc + lambda3 * img_level;
    check_or<NonFinite>(std::isfinite(b.total), "loss total is not finite");
    return b;
}

}  // namespace imdp
