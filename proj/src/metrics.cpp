#include "imdp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace imdp::metrics {

double pixel_f1(const Tensor& p, const Tensor& gt, double threshold) {
    check_or<DimensionMismatch>(p.same_shape(gt), "pixel_f1: dims mismatch");
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double t = gt[i];
        if (t == kIgnoreValue) continue;
        bool pred = p[i] >= threshold;
        bool pos = t != 0.0;
        if (pred && pos)
            ++tp;
        else if (pred && !pos)
            ++fp;
        else if (!pred && pos)
            ++fn;
    }
    std::int64_t denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

std::pair<double, double> best_threshold_f1(const Tensor& p, const Tensor& gt) {
    check_or<DimensionMismatch>(p.same_shape(gt), "best_threshold_f1: dims mismatch");
    // Sort valid pixels by score descending; sweeping the distinct scores as
    // thresholds updates TP/FP incrementally.
    struct Px {
        double score;
        bool pos;
    };
    std::vector<Px> px;
    std::int64_t total_pos = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (gt[i] == kIgnoreValue) continue;
        px.push_back({p[i], gt[i] != 0.0});
        total_pos += gt[i] != 0.0 ? 1 : 0;
    }
    check_or<EmptyInput>(!px.empty(), "best_threshold_f1: no valid pixels");
    std::sort(px.begin(), px.end(), [](const Px& a, const Px& b) { return a.score > b.score; });

    auto f1_of = [total_pos](std::int64_t tp, std::int64_t fp) {
        std::int64_t fn = total_pos - tp;
        std::int64_t denom = 2 * tp + fp + fn;
        return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    };

    double best_f1 = -1.0, best_thr = 0.5;
    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < px.size()) {
        double thr = px[i].score;
        while (i < px.size() && px[i].score == thr) {  // all pixels >= thr enter
            if (px[i].pos)
                ++tp;
            else
                ++fp;
            ++i;
        }
        double f1 = f1_of(tp, fp);
        if (f1 >= best_f1) {  // >= prefers the smaller (later) threshold on ties
            best_f1 = f1;
            best_thr = thr;
        }
    }
    // The fixed default participates too.
    std::int64_t tp5 = 0, fp5 = 0;
    for (const Px& q : px)
        if (q.score >= 0.5) (q.pos ? tp5 : fp5)++;
    double f1_half = f1_of(tp5, fp5);
    if (f1_half > best_f1 || (f1_half == best_f1 && 0.5 < best_thr)) {
        best_f1 = f1_half;
        best_thr = 0.5;
    }
    return {best_f1, best_thr};
}

ImageDetectionMetrics image_metrics(const std::vector<double>& scores,
                                    const std::vector<int>& labels, double threshold) {
    check_or<EmptyInput>(!scores.empty() && scores.size() == labels.size(),
                         "image_metrics: empty or mismatched inputs");
    std::int64_t tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        bool pred = scores[i] >= threshold;
        if (labels[i] == 1)
            pred ? ++tp : ++fn;
        else
            pred ? ++fp : ++tn;
    }
    ImageDetectionMetrics out;
    std::int64_t npos = tp + fn, nneg = tn + fp;
    if (npos > 0) out.sensitivity = static_cast<double>(tp) / static_cast<double>(npos);
    if (nneg > 0) out.specificity = static_cast<double>(tn) / static_cast<double>(nneg);
    if (out.sensitivity && out.specificity)
        out.i_f1 = composite_f1(*out.sensitivity, *out.specificity);

    if (npos > 0 && nneg > 0) {
        // Mann-Whitney rank form with average ranks on ties.
        std::vector<std::size_t> order(scores.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
        std::vector<double> rank(scores.size());
        std::size_t i = 0;
        while (i < order.size()) {
            std::size_t j = i;
            while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
            double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
            i = j + 1;
        }
        double rank_sum_pos = 0.0;
        for (std::size_t k = 0; k < scores.size(); ++k)
            if (labels[k] == 1) rank_sum_pos += rank[k];
        double u = rank_sum_pos - static_cast<double>(npos) * (static_cast<double>(npos) + 1) / 2;
        out.auc = u / (static_cast<double>(npos) * static_cast<double>(nneg));
    }
    return out;
}

double composite_f1(double i_f1, double p_f1) {
    check(i_f1 >= 0.0 && p_f1 >= 0.0, "composite_f1: inputs must be nonnegative");
    double s = i_f1 + p_f1;
    return s == 0.0 ? 0.0 : 2.0 * i_f1 * p_f1 / s;
}

// ---------------------------------------------------------------------------

namespace {
std::string cell(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream os;
    os << std::setprecision(17) << *v;
    return os.str();
}
std::optional<double> parse_cell(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return std::stod(s);
}
}  // namespace

std::string report_csv_header() {
    return "dataset,n_images,n_manipulated,I-AUC,Sen,Spe,I-F1,P-F1-fixed,P-F1-best,Com-F1";
}

std::string report_csv_row(const MetricsReport& r) {
    std::ostringstream os;
    os << r.dataset << "," << r.n_images << "," << r.n_manipulated << "," << cell(r.auc) << ","
       << cell(r.sensitivity) << "," << cell(r.specificity) << "," << cell(r.i_f1) << ","
       << cell(r.p_f1_fixed) << "," << cell(r.p_f1_best) << "," << cell(r.com_f1);
    return os.str();
}

MetricsReport report_from_csv_row(const std::string& row) {
    std::vector<std::string> cells;
    std::string cur;
    std::istringstream is(row);
    while (std::getline(is, cur, ',')) cells.push_back(cur);
    while (cells.size() < 10) cells.emplace_back();
    MetricsReport r;
    r.dataset = cells[0];
    r.n_images = std::stoi(cells[1]);
    r.n_manipulated = std::stoi(cells[2]);
    r.auc = parse_cell(cells[3]);
    r.sensitivity = parse_cell(cells[4]);
    r.specificity = parse_cell(cells[5]);
    r.i_f1 = parse_cell(cells[6]);
    r.p_f1_fixed = parse_cell(cells[7]);
    r.p_f1_best = parse_cell(cells[8]);
    r.com_f1 = parse_cell(cells[9]);
    return r;
}

std::string report_table(const std::vector<MetricsReport>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "dataset" << std::right << std::setw(8) << "I-AUC"
       << std::setw(8) << "Sen" << std::setw(8) << "Spe" << std::setw(8) << "I-F1" << std::setw(10)
       << "P-F1@0.5" << std::setw(10) << "P-F1best" << std::setw(8) << "Com-F1" << "\n";
    auto fmt = [&](const std::optional<double>& v, int width) {
        if (v)
            os << std::right << std::setw(width) << std::fixed << std::setprecision(3) << *v;
        else
            os << std::right << std::setw(width) << "-";
        os.unsetf(std::ios::fixed);
    };
    for (const auto& r : rows) {
        os << std::left << std::setw(16) << r.dataset;
        fmt(r.auc, 8);
        fmt(r.sensitivity, 8);
        fmt(r.specificity, 8);
        fmt(r.i_f1, 8);
        fmt(r.p_f1_fixed, 10);
        fmt(r.p_f1_best, 10);
        fmt(r.com_f1, 8);
        os << "\n";
    }
    return os.str();
}

}  // namespace imdp::metrics
