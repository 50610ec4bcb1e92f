#include "imdp/losses.hpp"

#include <algorithm>

namespace imdp::losses {

void split_target(const Tensor& gt, Tensor& target01, Tensor& valid) {
    target01 = Tensor(gt.shape());
    valid = Tensor(gt.shape());
    for (std::size_t i = 0; i < gt.size(); ++i) {
        double v = gt[i];
        if (v == kIgnoreValue) continue;
        check_or<ValueRange>(v == 0.0 || v == 1.0, "ground truth values must be 0, 1 or 255");
        target01[i] = v;
        valid[i] = 1.0;
    }
}

Var focal_seg_loss(const Var& p, const Tensor& gt, const FocalParams& params) {
    check_or<DimensionMismatch>(p.value().same_shape(gt), "focal loss: dims mismatch");
    Tensor target, valid;
    split_target(gt, target, valid);
    return ad::focal_loss_op(p, target, valid, params.gamma, params.alpha, params.clamp_eps);
}

Var focal_seg_loss(const Var& p, const BinaryMask& target, const FocalParams& params) {
    return focal_seg_loss(p, target.to_tensor(), params);
}

double focal_seg_value(const Tensor& p, const Tensor& gt, const FocalParams& params) {
    check_or<DimensionMismatch>(p.same_shape(gt), "focal loss: dims mismatch");
    double acc = 0.0;
    std::size_t nv = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double t = gt[i];
        if (t == kIgnoreValue) continue;
        ++nv;
        bool pos = t != 0.0;
        double pc = std::min(1.0 - params.clamp_eps, std::max(params.clamp_eps, p[i]));
        double pt = pos ? pc : 1.0 - pc;
        double at = pos ? params.alpha : 1.0 - params.alpha;
        acc += -at * std::pow(1.0 - pt, params.gamma) * std::log(pt);
    }
    return nv ? acc / static_cast<double>(nv) : 0.0;
}

namespace {

// Scans candidate thresholds over sorted responses using prefix sums;
// n*var(class) = sum(x^2) - sum(x)^2/n, empty classes contribute 0.
double otsu_scan(std::vector<double>& vals) {
    std::sort(vals.begin(), vals.end());
    std::size_t n = vals.size();
    std::vector<double> ps(n + 1, 0.0), ps2(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        ps[i + 1] = ps[i] + vals[i];
        ps2[i + 1] = ps2[i] + vals[i] * vals[i];
    }
    double best_obj = 0.0, best_omega = 0.0;
    bool first = true;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0 && vals[i] == vals[i - 1]) continue;  // distinct values only
        double omega = vals[i];
        // class below: indices [0, i), class at/above: [i, n)
        double lo = i > 0 ? ps2[i] - ps[i] * ps[i] / static_cast<double>(i) : 0.0;
        std::size_t hi_n = n - i;
        double hi = ps2[n] - ps2[i] -
                    (ps[n] - ps[i]) * (ps[n] - ps[i]) / static_cast<double>(hi_n);
        double obj = lo + hi;
        if (first || obj < best_obj) {  // strict: ties keep the smaller omega
            best_obj = obj;
            best_omega = omega;
            first = false;
        }
    }
    return best_omega;
}

std::vector<double> collect_valid(const Tensor& p, const Tensor* valid) {
    std::vector<double> vals;
    vals.reserve(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        if (!valid || (*valid)[i] != 0.0) vals.push_back(p[i]);
    check_or<EmptyInput>(!vals.empty(), "otsu threshold on an empty map");
    return vals;
}

}  // namespace

double otsu_threshold(const Tensor& p) { return otsu_threshold(p, Tensor()); }

double otsu_threshold(const Tensor& p, const Tensor& valid) {
    std::vector<double> vals = collect_valid(p, valid.empty() ? nullptr : &valid);
    if (vals.size() <= kExactOtsuLimit) return otsu_scan(vals);

    // Histogram mode: restrict candidates to the smallest actual value in
    // each of 256 bins. Split statistics stay exact for those candidates.
    double lo = vals[0], hi = vals[0];
    for (double v : vals) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo == hi) return lo;
    constexpr int kBins = 256;
    double width = (hi - lo) / kBins;
    std::vector<double> bin_min(kBins, 0.0), bin_sum(kBins, 0.0), bin_sum2(kBins, 0.0);
    std::vector<std::size_t> bin_n(kBins, 0);
    for (double v : vals) {
        int b = std::min(kBins - 1, static_cast<int>((v - lo) / width));
        if (bin_n[static_cast<std::size_t>(b)] == 0 || v < bin_min[static_cast<std::size_t>(b)])
            bin_min[static_cast<std::size_t>(b)] = v;
        bin_n[static_cast<std::size_t>(b)]++;
        bin_sum[static_cast<std::size_t>(b)] += v;
        bin_sum2[static_cast<std::size_t>(b)] += v * v;
    }
    double below_n = 0.0, below_s = 0.0, below_s2 = 0.0;
    double total_n = static_cast<double>(vals.size());
    double total_s = 0.0, total_s2 = 0.0;
    for (int b = 0; b < kBins; ++b) {
        total_s += bin_sum[static_cast<std::size_t>(b)];
        total_s2 += bin_sum2[static_cast<std::size_t>(b)];
    }
    double best_obj = 0.0, best_omega = 0.0;
    bool first = true;
    for (int b = 0; b < kBins; ++b) {
        if (bin_n[static_cast<std::size_t>(b)] == 0) continue;
        double lo_term =
            below_n > 0.0 ? below_s2 - below_s * below_s / below_n : 0.0;
        double hi_n = total_n - below_n;
        double hi_s = total_s - below_s, hi_s2 = total_s2 - below_s2;
        double hi_term = hi_n > 0.0 ? hi_s2 - hi_s * hi_s / hi_n : 0.0;
        double obj = lo_term + hi_term;
        if (first || obj < best_obj) {
            best_obj = obj;
            best_omega = bin_min[static_cast<std::size_t>(b)];
            first = false;
        }
        below_n += static_cast<double>(bin_n[static_cast<std::size_t>(b)]);
        below_s += bin_sum[static_cast<std::size_t>(b)];
        below_s2 += bin_sum2[static_cast<std::size_t>(b)];
    }
    return best_omega;
}

double otsu_objective(const Tensor& p, double omega) {
    double n0 = 0, s0 = 0, s20 = 0, n1 = 0, s1 = 0, s21 = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double v = p[i];
        if (v < omega) {
            n0 += 1;
            s0 += v;
            s20 += v * v;
        } else {
            n1 += 1;
            s1 += v;
            s21 += v * v;
        }
    }
    double lo = n0 > 0 ? s20 - s0 * s0 / n0 : 0.0;
    double hi = n1 > 0 ? s21 - s1 * s1 / n1 : 0.0;
    return lo + hi;
}

double adaptive_pool(const Tensor& p, double omega0) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] >= omega0) {
            acc += p[i];
            ++n;
        }
    check_or<EmptyInput>(n > 0, "adaptive pool: no responses at or above the threshold");
    return acc / static_cast<double>(n);
}

Var adaptive_pool_var(const Var& p, double omega0, const Tensor& valid) {
    Tensor select(p.value().shape());
    std::size_t n = 0;
    for (std::size_t i = 0; i < select.size(); ++i) {
        bool ok = (valid.empty() || valid[i] != 0.0) && p.value()[i] >= omega0;
        if (ok) {
            select[i] = 1.0;
            ++n;
        }
    }
    check_or<EmptyInput>(n > 0, "adaptive pool: no responses at or above the threshold");
    return ad::masked_mean(p, select);
}

double image_level_loss(double yhat, double y, double eps) {
    double vc = std::min(1.0 - eps, std::max(eps, yhat));
    return -(y * std::log(vc) + (1.0 - y) * std::log(1.0 - vc));
}

Var image_level_loss(const Var& yhat, double y, double eps) {
    return ad::bce_scalar(yhat, y, eps);
}

LossBreakdown total_loss(double seg_sam, double seg_p, double cpc, double img_level,
                         double lambda1, double lambda2, double lambda3) {
    check_or<NonFinite>(std::isfinite(seg_sam) && std::isfinite(seg_p) && std::isfinite(cpc) &&
                            std::isfinite(img_level),
                        "loss components must be finite");
    check(seg_sam >= 0.0 && seg_p >= 0.0 && cpc >= 0.0 && img_level >= 0.0,
          "loss components must be nonnegative");
    return make_loss_breakdown(seg_sam, seg_p, cpc, img_level, lambda1, lambda2, lambda3);
}

}  // namespace imdp::losses
