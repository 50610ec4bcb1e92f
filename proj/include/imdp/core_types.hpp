// Shared domain types. All are immutable value objects; invariants are
// enforced at construction so downstream code can assume them.

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "imdp/autodiff.hpp"
#include "imdp/tensor.hpp"

namespace imdp {

enum class ViewId { RGB, SRM, BAYAR, NOISEPRINT, ENS };

/// Fixed tie-break and iteration order for OPS.
inline constexpr ViewId kViewOrder[5] = {ViewId::RGB, ViewId::SRM, ViewId::BAYAR,
                                         ViewId::NOISEPRINT, ViewId::ENS};

const char* to_string(ViewId v);
ViewId view_from_string(const std::string& s);

/// Ignore value for padded ground-truth pixels; excluded from losses/metrics.
inline constexpr double kIgnoreValue = 255.0;

// ---------------------------------------------------------------------------

/// An RGB image with optional ground-truth tamper mask and image-level label.
/// Pixels are channel-last (H,W,3) in [0,255]; the data model is the single
/// source of truth for H and W. Mask and label reads go through accessors so
/// tests can install a tripwire proving the inference path never touches them.
class ImageSample {
public:
    ImageSample() = default;
    ImageSample(std::string id, Tensor image, std::optional<Tensor> mask, int label);

    const std::string& id() const { return id_; }
    const Tensor& image() const { return image_; }
    int height() const { return image_.dim(0); }
    int width() const { return image_.dim(1); }

    const std::optional<Tensor>& mask() const {
        observe("mask");
        return mask_;
    }
    int label() const {
        observe("label");
        return label_;
    }

    /// Ground-truth access without tripwire, for constructors/validators only.
    const std::optional<Tensor>& mask_unchecked() const { return mask_; }
    int label_unchecked() const { return label_; }

    using AccessHook = std::function<void(const ImageSample&, const char* field)>;
    static void set_access_hook(AccessHook hook);
    static void clear_access_hook();

private:
    void observe(const char* field) const;

    std::string id_;
    Tensor image_;                // (H,W,3)
    std::optional<Tensor> mask_;  // (H,W) in {0,1}
    int label_ = 0;
};

/// Returns the sample unchanged if all invariants hold; throws otherwise.
/// Idempotent by construction.
const ImageSample& validate_sample(const ImageSample& sample);

// ---------------------------------------------------------------------------

/// Per-pixel manipulation probability in [0,1]. Carries the autodiff handle
/// so losses can be backpropagated through it.
class ProbabilityMap {
public:
    ProbabilityMap() = default;
    explicit ProbabilityMap(ad::Var values);
    explicit ProbabilityMap(Tensor values) : ProbabilityMap(ad::Var::constant(std::move(values))) {}

    const ad::Var& var() const { return values_; }
    const Tensor& values() const { return values_.value(); }
    int height() const { return values().dim(0); }
    int width() const { return values().dim(1); }

private:
    ad::Var values_;
};

/// H x W boolean mask.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int h, int w) : h_(h), w_(w), values_(static_cast<std::size_t>(h) * w, 0) {}

    int height() const { return h_; }
    int width() const { return w_; }
    bool at(int y, int x) const { return values_[static_cast<std::size_t>(y) * w_ + x] != 0; }
    void set(int y, int x, bool v) { values_[static_cast<std::size_t>(y) * w_ + x] = v ? 1 : 0; }
    std::size_t count() const;
    bool empty_mask() const { return count() == 0; }
    const std::vector<std::uint8_t>& raw() const { return values_; }

    /// As a (H,W) tensor of {0,1}.
    Tensor to_tensor() const;

private:
    int h_ = 0, w_ = 0;
    std::vector<std::uint8_t> values_;
};

/// Axis-aligned box in pixel coordinates, inclusive corners.
struct BoxPrompt {
    int x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    BoxPrompt() = default;
    BoxPrompt(int x1_, int y1_, int x2_, int y2_, int img_w, int img_h);
};

/// C x H' x W' real feature tensor (graph-carrying).
class FeatureMap {
public:
    FeatureMap() = default;
    explicit FeatureMap(ad::Var values);

    const ad::Var& var() const { return values_; }
    const Tensor& values() const { return values_.value(); }
    int channels() const { return values().dim(0); }
    int height() const { return values().dim(1); }
    int width() const { return values().dim(2); }

private:
    ad::Var values_;
};

/// N tokens of dimension D (graph-carrying).
class PromptEmbedding {
public:
    PromptEmbedding() = default;
    explicit PromptEmbedding(ad::Var tokens);

    const ad::Var& var() const { return tokens_; }
    const Tensor& values() const { return tokens_.value(); }
    int token_count() const { return values().dim(0); }
    int dim() const { return values().dim(1); }

private:
    ad::Var tokens_;
};

// ---------------------------------------------------------------------------

/// The four weighted loss components and their total.
struct LossBreakdown {
    double seg_sam = 0.0;
    double seg_p = 0.0;
    double cpc = 0.0;
    double img_level = 0.0;
    double lambda1 = 1.0;
    double lambda2 = 0.1;
    double lambda3 = 1.0;
    double total = 0.0;
};

/// Builds the breakdown with the exact weighted-sum invariant
/// total = seg_sam + l1*seg_p + l2*cpc + l3*img_level.
LossBreakdown make_loss_breakdown(double seg_sam, double seg_p, double cpc, double img_level,
                                  double lambda1, double lambda2, double lambda3);

}  // namespace imdp
