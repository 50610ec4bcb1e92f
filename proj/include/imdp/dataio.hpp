// Dataset ingestion, preprocessing, augmentation, synthetic tamper
// generation, and image-quality degradations for the robustness protocol.
//
// On-disk layout:  root/images/<id>.png, root/masks/<id>.png (white =
// tampered; only required for label-1 samples), root/labels.csv with
// header id,label,kind. In memory, ImageSample pixels are kept in storage
// channel order (BGR, as the preprocessing constants expect); the
// preprocessor swaps to RGB at the tensor boundary.

#pragma once

#include <string>
#include <vector>

#include "imdp/core_types.hpp"
#include "imdp/rng.hpp"

namespace imdp::dataio {

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

struct PreprocessConfig {
    double mean[3] = {123.675, 116.28, 103.53};
    double stddev[3] = {58.395, 57.12, 57.375};
    bool bgr_to_rgb = true;
    double pad_value = 0.0;  // applied after normalization
    int size = 64;           // square padded size
};

/// Image-only path (shared by training and inference): channel swap,
/// per-channel normalization, zero-pad to (size,size). Returns (3,S,S) and
/// fills `valid` with 1 on image pixels, 0 on padding.
Tensor preprocess_image(const Tensor& image_hwc, const PreprocessConfig& cfg, Tensor& valid);

/// Training path: also pads the ground-truth mask with the ignore value.
/// An absent mask is treated as all-zero (authentic).
struct Preprocessed {
    Tensor image;  // (3,S,S)
    Tensor gt;     // (S,S) in {0,1,255}
    Tensor valid;  // (S,S) in {0,1}
    int orig_h = 0, orig_w = 0;
};
Preprocessed preprocess(const ImageSample& sample, const PreprocessConfig& cfg);

/// Inverse of preprocess_image on the non-padded region.
Tensor unpreprocess(const Tensor& image_chw, const PreprocessConfig& cfg, int orig_h, int orig_w);

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

/// Horizontal flip of image and mask jointly (involution).
ImageSample flip_h(const ImageSample& sample);

/// Crop [y0,y0+h) x [x0,x0+w); label is recomputed from the cropped mask.
ImageSample crop(const ImageSample& sample, int x0, int y0, int w, int h);

struct AugmentConfig {
    double flip_prob = 0.5;
    double min_crop_fraction = 0.75;  // per-dimension
};

/// Random horizontal flip + random crop with identical geometry for image
/// and mask.
ImageSample augment(const ImageSample& sample, Rng& rng, const AugmentConfig& cfg = {});

// ---------------------------------------------------------------------------
// Synthetic tampering
// ---------------------------------------------------------------------------

enum class RegionShape { Rectangle, Ellipse };

/// Pastes the (src_x,src_y,w,h) region of donor at (dst_x,dst_y) in host;
/// the mask marks exactly the pasted region. Throws RegionTooLarge when the
/// geometry does not fit or has zero area.
ImageSample paste_region(const ImageSample& host, const ImageSample& donor, int src_x, int src_y,
                         int w, int h, int dst_x, int dst_y, RegionShape shape,
                         const std::string& id);

/// Random splice (donor != host) or copy-move (donor == host) sample.
ImageSample synthesize_splice(const ImageSample& host, const ImageSample& donor, Rng& rng);

/// Procedural authentic image (smooth gradients + texture + sensor-ish
/// noise), integer-valued so PNG round trips are exact.
ImageSample generate_authentic(Rng& rng, int h, int w, const std::string& id);

// ---------------------------------------------------------------------------
// Degradations
// ---------------------------------------------------------------------------

inline constexpr int kJpegGrid[6] = {100, 90, 80, 70, 60, 50};
inline constexpr int kBlurGrid[6] = {0, 5, 11, 17, 23, 29};

struct DegradationSpec {
    enum class Kind { Jpeg, Blur };
    Kind kind = Kind::Jpeg;
    int level = 100;

    static DegradationSpec jpeg(int quality);
    static DegradationSpec blur(int kernel);
    bool identity() const {
        return (kind == Kind::Jpeg && level == 100) || (kind == Kind::Blur && level == 0);
    }
    std::string name() const;
};

/// JPEG: encode/decode round trip at the quality level (100 = lossless
/// identity mode). Blur: Gaussian kernel of the given odd size with
/// sigma = 0.3*((k-1)/2 - 1) + 0.8, reflect borders; kernel 0 = identity.
Tensor degrade(const Tensor& image_hwc, const DegradationSpec& spec);

// ---------------------------------------------------------------------------
// Dataset I/O
// ---------------------------------------------------------------------------

/// Loads and validates all samples, deterministically ordered by id.
/// Label-1 samples must have a mask file; authentic masks default to zero.
std::vector<ImageSample> load_dataset(const std::string& root);

/// Manipulation-kind metadata from labels.csv, by sample id order.
std::vector<std::string> load_kinds(const std::string& root);

/// Writes samples in the documented layout (masks only for label-1).
void write_dataset(const std::string& root, const std::vector<ImageSample>& samples,
                   const std::vector<std::string>& kinds);

/// n synthetic tampered samples (alternating splice / copy-move over the
/// authentic pool) plus the authentic images themselves.
struct SyntheticDataset {
    std::vector<ImageSample> samples;
    std::vector<std::string> kinds;
};
SyntheticDataset make_synthetic(const std::vector<ImageSample>& authentic, int n,
                                std::uint64_t seed);

}  // namespace imdp::dataio
