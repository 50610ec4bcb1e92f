// Training objectives: focal segmentation loss, Otsu-threshold adaptive
// pooling for the image-level score, BCE, and the total-loss assembly.

#pragma once

#include "imdp/core_types.hpp"

namespace imdp::losses {

using ad::Var;

struct FocalParams {
    double gamma = 2.0;
    double alpha = 0.25;
    double clamp_eps = 1e-6;
};

/// Splits a ground-truth mask with optional 255-valued ignore pixels into a
/// {0,1} target and a {0,1} validity mask.
void split_target(const Tensor& gt, Tensor& target01, Tensor& valid);

/// Mean over valid pixels of -alpha_t (1-p_t)^gamma log(p_t), with
/// p_t = P at positive pixels and 1-P at negatives, alpha_t = alpha / 1-alpha
/// respectively. Probabilities are clamped to [eps, 1-eps] before the log.
Var focal_seg_loss(const Var& p, const Tensor& gt, const FocalParams& params);
inline Var focal_seg_loss(const ProbabilityMap& p, const Tensor& gt, const FocalParams& params) {
    return focal_seg_loss(p.var(), gt, params);
}
Var focal_seg_loss(const Var& p, const BinaryMask& target, const FocalParams& params);

/// Value-only evaluation (no graph); used by OPS candidate scoring.
double focal_seg_value(const Tensor& p, const Tensor& gt, const FocalParams& params);

/// Otsu threshold over the (valid) pixel responses: the candidate drawn from
/// the distinct pixel values minimizing size-weighted within-class variance,
/// ties broken by the smallest candidate. Maps with at most
/// `kExactOtsuLimit` pixels are scanned exactly; larger maps restrict
/// candidates to 256 histogram-bin minima (still actual pixel values).
inline constexpr std::size_t kExactOtsuLimit = 4096;
double otsu_threshold(const Tensor& p);
double otsu_threshold(const Tensor& p, const Tensor& valid);
inline double otsu_threshold(const ProbabilityMap& p) { return otsu_threshold(p.values()); }

/// Size-weighted within-class variance objective at threshold omega;
/// the quantity otsu_threshold minimizes. Exposed for oracle tests.
double otsu_objective(const Tensor& p, double omega);

/// Mean of responses >= omega0 (nonempty by construction when omega0 came
/// from otsu_threshold on the same map).
double adaptive_pool(const Tensor& p, double omega0);
inline double adaptive_pool(const ProbabilityMap& p, double omega0) {
    return adaptive_pool(p.values(), omega0);
}
/// Graph-carrying variant: the >= omega0 membership is treated as constant
/// during backprop (the threshold selection is discrete).
Var adaptive_pool_var(const Var& p, double omega0, const Tensor& valid);

/// Binary cross-entropy of the pooled score against the image-level label.
double image_level_loss(double yhat, double y, double eps = 1e-6);
Var image_level_loss(const Var& yhat, double y, double eps = 1e-6);

/// Assembles the weighted total; exact identity
/// total = seg_sam + l1*seg_p + l2*cpc + l3*img_level.
LossBreakdown total_loss(double seg_sam, double seg_p, double cpc, double img_level,
                         double lambda1 = 1.0, double lambda2 = 0.1, double lambda3 = 1.0);

}  // namespace imdp::losses
