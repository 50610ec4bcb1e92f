#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "imdp/metrics.hpp"
#include "oracles.hpp"

using namespace imdp;
using namespace imdp::metrics;

TEST_CASE("pixel_f1: exact match, zero-denominator rule, arithmetic") {
    Tensor gt({2, 2}, {1.0, 0.0, 1.0, 0.0});
    Tensor exact({2, 2}, {0.9, 0.1, 0.8, 0.2});
    CHECK(pixel_f1(exact, gt) == 1.0);

    Tensor zeros({2, 2});
    CHECK(pixel_f1(zeros, gt) == 0.0);

    // TP=2, FP=1, FN=1 -> 2*2/(2*2+1+1) = 0.6667
    Tensor gt2({1, 4}, {1.0, 1.0, 1.0, 0.0});
    Tensor p2({1, 4}, {0.9, 0.9, 0.1, 0.9});
    CHECK(pixel_f1(p2, gt2) == doctest::Approx(4.0 / 6.0));
}

TEST_CASE("pixel_f1 excludes ignore pixels") {
    Tensor gt({1, 4}, {1.0, 0.0, kIgnoreValue, kIgnoreValue});
    Tensor p({1, 4}, {0.9, 0.1, 0.9, 0.9});  // poisoned under the ignores
    CHECK(pixel_f1(p, gt) == 1.0);
}

TEST_CASE("best_threshold_f1: separable map reaches 1.0 and dominates fixed") {
    Tensor gt({1, 6}, {1.0, 1.0, 1.0, 0.0, 0.0, 0.0});
    Tensor p({1, 6}, {0.4, 0.45, 0.42, 0.3, 0.1, 0.2});  // separable below 0.5
    auto [f1, thr] = best_threshold_f1(p, gt);
    CHECK(f1 == 1.0);
    CHECK(thr == 0.4);
    CHECK(f1 >= pixel_f1(p, gt, 0.5));
}

TEST_CASE("best_threshold_f1 matches an exhaustive scan on random maps") {
    Rng rng = RngFactory(1).stream("best_thr");
    for (int trial = 0; trial < 50; ++trial) {
        Tensor p({4, 8}), gt({4, 8});
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] = rng.uniform(0.0, 1.0);
            gt[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
        }
        auto [f1, thr] = best_threshold_f1(p, gt);

        // Oracle: scan every distinct value plus 0.5 directly.
        std::vector<double> cands(p.data(), p.data() + p.size());
        cands.push_back(0.5);
        std::sort(cands.begin(), cands.end());
        cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
        double best = -1.0, best_t = 0.0;
        for (double t : cands) {
            double f = pixel_f1(p, gt, t);
            if (f > best || (f == best && t < best_t)) {
                best = f;
                best_t = t;
            }
        }
        CHECK(f1 == doctest::Approx(best).epsilon(1e-12));
        CHECK(thr == best_t);
        CHECK(f1 >= pixel_f1(p, gt, 0.5));
    }
}

TEST_CASE("image_metrics: paper rows reproduce I-F1") {
    // Harmonic mean of (sen, spe); the published rows quote percentages.
    CHECK(composite_f1(91.6, 66.9) == doctest::Approx(77.3).epsilon(0.001));
    CHECK(composite_f1(96.8, 55.2) == doctest::Approx(70.3).epsilon(0.001));
}

TEST_CASE("image_metrics: perfect ranking AUC = 1, all-ties AUC = 0.5") {
    ImageDetectionMetrics m =
        image_metrics({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
    CHECK(m.auc.has_value());
    CHECK(*m.auc == 1.0);
    CHECK(*m.sensitivity == 1.0);
    CHECK(*m.specificity == 1.0);
    CHECK(*m.i_f1 == 1.0);

    ImageDetectionMetrics ties = image_metrics({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0});
    CHECK(*ties.auc == 0.5);
}

TEST_CASE("image_metrics: absent classes give absent rates") {
    ImageDetectionMetrics pos_only = image_metrics({0.9, 0.4}, {1, 1});
    CHECK(pos_only.sensitivity.has_value());
    CHECK_FALSE(pos_only.specificity.has_value());
    CHECK_FALSE(pos_only.i_f1.has_value());
    CHECK_FALSE(pos_only.auc.has_value());

    ImageDetectionMetrics neg_only = image_metrics({0.1, 0.2}, {0, 0});
    CHECK_FALSE(neg_only.sensitivity.has_value());
    CHECK(neg_only.specificity.has_value());
    CHECK(*neg_only.specificity == 1.0);

    CHECK_THROWS_AS(image_metrics({}, {}), EmptyInput);
}

TEST_CASE("AUC equals the probability a positive outranks a negative (oracle)") {
    Rng rng = RngFactory(2).stream("auc");
    for (int trial = 0; trial < 50; ++trial) {
        int n = 20;
        std::vector<double> scores;
        std::vector<int> labels;
        for (int i = 0; i < n; ++i) {
            // Coarse quantization forces plenty of ties.
            scores.push_back(std::round(rng.uniform(0.0, 1.0) * 8.0) / 8.0);
            labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
        }
        int npos = 0, nneg = 0;
        for (int l : labels) l ? ++npos : ++nneg;
        if (npos == 0 || nneg == 0) continue;
        double wins = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (labels[i] != 1 || labels[j] != 0) continue;
                if (scores[i] > scores[j])
                    wins += 1.0;
                else if (scores[i] == scores[j])
                    wins += 0.5;
            }
        double expect = wins / (static_cast<double>(npos) * nneg);
        ImageDetectionMetrics m = image_metrics(scores, labels);
        CHECK(*m.auc == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("AUC is invariant under strictly monotone transforms") {
    Rng rng = RngFactory(3).stream("auc_mono");
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 30; ++i) {
        scores.push_back(rng.uniform(0.0, 1.0));
        labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
    }
    auto auc_of = [&](const std::vector<double>& s) { return *image_metrics(s, labels).auc; };
    std::vector<double> squashed = scores, cubed = scores;
    for (double& v : squashed) v = 1.0 / (1.0 + std::exp(-8.0 * (v - 0.3)));
    for (double& v : cubed) v = v * v * v + 2.0;
    CHECK(auc_of(squashed) == doctest::Approx(auc_of(scores)).epsilon(1e-12));
    CHECK(auc_of(cubed) == doctest::Approx(auc_of(scores)).epsilon(1e-12));
}

TEST_CASE("composite_f1: paper values, equal-inputs identity, bounds") {
    CHECK(composite_f1(77.3, 76.3) == doctest::Approx(76.8).epsilon(0.001));
    CHECK(composite_f1(75.8, 45.2) == doctest::Approx(56.6).epsilon(0.001));
    CHECK(composite_f1(0.0, 0.0) == 0.0);

    Rng rng = RngFactory(4).stream("comf1");
    for (int trial = 0; trial < 200; ++trial) {
        double x = rng.uniform(0.0, 100.0);
        CHECK(composite_f1(x, x) == doctest::Approx(x).epsilon(1e-12));
        double a = rng.uniform(0.0, 100.0), b = rng.uniform(0.0, 100.0);
        double c = composite_f1(a, b);
        CHECK(c <= (a + b) / 2.0 + 1e-12);           // below the arithmetic mean
        CHECK(c <= 2.0 * std::min(a, b) + 1e-12);    // sensitive to the low value
    }
}

TEST_CASE("report CSV row round trips") {
    MetricsReport r;
    r.dataset = "fixture";
    r.n_images = 16;
    r.n_manipulated = 8;
    r.auc = 0.875;
    r.sensitivity = 0.75;
    r.specificity = 1.0;
    r.i_f1 = composite_f1(0.75, 1.0);
    r.p_f1_fixed = 0.9125;
    r.p_f1_best = 0.95;
    r.com_f1 = composite_f1(*r.i_f1, *r.p_f1_fixed);
    MetricsReport back = report_from_csv_row(report_csv_row(r));
    CHECK(back == r);

    MetricsReport sparse;
    sparse.dataset = "auth_only";
    sparse.n_images = 3;
    sparse.n_manipulated = 0;
    sparse.specificity = 1.0;
    CHECK(report_from_csv_row(report_csv_row(sparse)) == sparse);
}
