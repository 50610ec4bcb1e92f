// Evaluation battery: pixel-level F1 (fixed and best threshold), image-level
// sensitivity / specificity / I-F1 / AUC, and composite F1.

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "imdp/core_types.hpp"

namespace imdp::metrics {

/// F1 of (p >= threshold) against the ground truth, ignore pixels excluded.
/// Returns 0 when the 2TP+FP+FN denominator is 0.
double pixel_f1(const Tensor& p, const Tensor& gt, double threshold = 0.5);
inline double pixel_f1(const ProbabilityMap& p, const Tensor& gt, double threshold = 0.5) {
    return pixel_f1(p.values(), gt, threshold);
}

/// Maximum pixel_f1 over thresholds drawn from the distinct values of p
/// (plus 0.5); ties resolved toward the smaller threshold.
std::pair<double, double> best_threshold_f1(const Tensor& p, const Tensor& gt);

struct ImageDetectionMetrics {
    std::optional<double> sensitivity;  // TP rate on manipulated images
    std::optional<double> specificity;  // TN rate on authentic images
    std::optional<double> i_f1;         // harmonic mean of the two
    std::optional<double> auc;          // rank statistic with tie correction
};

/// Image-level metrics from per-image scores and labels at the decision
/// threshold. Rates whose class is absent are reported absent, not 0.
ImageDetectionMetrics image_metrics(const std::vector<double>& scores,
                                    const std::vector<int>& labels, double threshold = 0.5);

/// Harmonic mean 2ab/(a+b); 0 when a+b == 0. Unit-agnostic.
double composite_f1(double i_f1, double p_f1);

/// One evaluation row. Pixel-level values are per-image F1 averaged over
/// manipulated images only.
struct MetricsReport {
    std::string dataset;
    int n_images = 0;
    int n_manipulated = 0;
    std::optional<double> auc, sensitivity, specificity, i_f1;
    std::optional<double> p_f1_fixed, p_f1_best, com_f1;

    bool operator==(const MetricsReport&) const = default;
};

/// CSV with the column contract
/// dataset,I-AUC,Sen,Spe,I-F1,P-F1-fixed,P-F1-best,Com-F1 (absent = empty).
std::string report_csv_header();
std::string report_csv_row(const MetricsReport& r);
MetricsReport report_from_csv_row(const std::string& row);
std::string report_table(const std::vector<MetricsReport>& rows);

}  // namespace imdp::metrics
