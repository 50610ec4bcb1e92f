// Semantic-agnostic input views: fixed SRM residuals, constrained Bayar
// convolution residuals, and a small trainable Noiseprint surrogate.

#pragma once

#include <string>

#include "imdp/core_types.hpp"
#include "imdp/nn.hpp"

namespace imdp::noise {

using ad::Var;

// ---------------------------------------------------------------------------
// SRM
// ---------------------------------------------------------------------------

/// Fixed zero-sum high-pass kernels, shipped as a data file.
class SrmKernels {
public:
    static SrmKernels load(const std::string& path);
    /// Loads from $IMDP_DATA_DIR/srm_kernels.txt or the source-tree default.
    static const SrmKernels& standard();

    int count() const { return static_cast<int>(kernels_.size()); }
    const Tensor& kernel(int k) const { return kernels_[static_cast<std::size_t>(k)]; }

private:
    std::vector<Tensor> kernels_;  // each (5,5)
};

/// Resolves a file under the data directory (env IMDP_DATA_DIR wins).
std::string data_file(const std::string& name);

/// Residual extraction: output channel k is the cross-correlation of the
/// channel-summed image with kernel k, reflect-padded to the input size.
/// Input is channel-last (H,W,3); output is (count,H,W).
Tensor srm_extract(const Tensor& image_hwc, const SrmKernels& kernels = SrmKernels::standard());
/// Channel-first variant used inside the pipeline.
Tensor srm_extract_chw(const Tensor& image_chw, const SrmKernels& kernels = SrmKernels::standard());

// ---------------------------------------------------------------------------
// Bayar constrained convolution
// ---------------------------------------------------------------------------

/// K learned 5x5 kernels over the grayscale image. The constraint (center
/// weight -1, remaining weights summing to 1) is enforced by projection, not
/// penalty: call project() after every optimizer step.
class BayarKernelSet {
public:
    BayarKernelSet() = default;
    BayarKernelSet(int k, int kernel_size, Rng& rng);

    int count() const { return weights_.value().dim(0); }
    int kernel_size() const { return weights_.value().dim(2); }
    const Var& weights() const { return weights_; }
    Var& weights() { return weights_; }

    /// True if every kernel satisfies the constraint within tol.
    bool projected(double tol = 1e-6) const;

    void collect(const std::string& prefix, nn::ParamList& out) const {
        nn::add_param(out, prefix + ".w", weights_);
    }

private:
    Var weights_;  // (K,1,ks,ks) conv layout
};

/// Projects in place: center -1, non-center weights rescaled to sum to 1.
/// Throws DegenerateKernel when a kernel's non-center sum is 0 or non-finite.
BayarKernelSet& bayar_project(BayarKernelSet& kernels);

/// Like bayar_project but re-initializes any degenerate kernel from rng
/// before projecting it. Used by the training loop.
BayarKernelSet& bayar_project_or_reinit(BayarKernelSet& kernels, Rng& rng);

/// ITU-R 601 grayscale of a channel-first (3,H,W) image -> (1,H,W).
Tensor grayscale_601(const Tensor& image_chw);

/// Residuals of the grayscale image under the projected kernels, reflect
/// padding, same spatial size. Throws UnprojectedKernel if the invariant is
/// violated. Gradient flows into the kernel weights.
Var bayar_forward(const Tensor& image_chw, const BayarKernelSet& kernels);
/// Spec-facing variant on channel-last input, values only.
Tensor bayar_extract(const Tensor& image_hwc, const BayarKernelSet& kernels);

// ---------------------------------------------------------------------------
// Noiseprint surrogate
// ---------------------------------------------------------------------------

/// 5-layer, 16-channel residual CNN with a single-channel output, trained
/// jointly with the rest of the pipeline. Stands in for the pretrained
/// Noiseprint network at desk scale.
class NoiseprintSurrogate {
public:
    NoiseprintSurrogate() = default;
    NoiseprintSurrogate(int hidden, Rng& rng);

    /// (3,H,W) -> (1,H,W), same spatial dims.
    Var forward(const Var& image_chw) const;
    Tensor extract(const Tensor& image_hwc) const;

    void collect(const std::string& prefix, nn::ParamList& out) const;

private:
    nn::Conv2d in_, mid1_, mid2_, mid3_, out_;
};

/// (H,W,3) -> (3,H,W) and back; the only layout conversion points.
Tensor hwc_to_chw(const Tensor& hwc);
Tensor chw_to_hwc(const Tensor& chw);

}  // namespace imdp::noise
