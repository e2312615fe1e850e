#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "mtps/metrics.hpp"
#include "mtps/rng.hpp"

using namespace mtps;

namespace {

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

// O(n²) pairwise comparison oracle for the rank-statistic AUC.
double auc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    long pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("wilson interval reproduces the worked confusion-matrix example") {
    const WilsonInterval precision = wilson_ci(7277.0 / 7983.0, 7983);
    CHECK(round3(precision.lower) == 0.905);
    CHECK(round3(precision.upper) == 0.918);

    const WilsonInterval recall = wilson_ci(7277.0 / 8602.0, 8602);
    CHECK(round3(recall.lower) == 0.838);
    CHECK(round3(recall.upper) == 0.853);
}

TEST_CASE("wilson interval at p = 0") {
    const WilsonInterval ci = wilson_ci(0.0, 10);
    CHECK(ci.lower == 0.0);
    CHECK(ci.upper == doctest::Approx(0.278).epsilon(2e-3));
}

TEST_CASE("wilson interval rejects empty samples") {
    CHECK_THROWS_AS(wilson_ci(0.5, 0), UsageError);
}

TEST_CASE("wilson interval always contains the point estimate and shrinks like 1/sqrt(n)") {
    Rng rng(42);
    for (int rep = 0; rep < 200; ++rep) {
        const long n = 1 + rng.uniform_int(5000);
        const double p = static_cast<double>(rng.uniform_int(static_cast<int>(n) + 1)) /
                         static_cast<double>(n);
        const WilsonInterval ci = wilson_ci(p, n);
        CHECK(ci.lower <= p + 1e-12);
        CHECK(ci.upper >= p - 1e-12);
        // Shrunk midpoint lies inside by construction.
        const double z2 = 1.96 * 1.96;
        const double mid = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
        CHECK(ci.lower <= mid);
        CHECK(ci.upper >= mid);

        const WilsonInterval wider = wilson_ci(p, n * 4);
        CHECK(wider.upper - wider.lower <= (ci.upper - ci.lower) * 0.62);
    }
}

TEST_CASE("class metrics reproduce the worked example") {
    // One-vs-rest counts folded into a 2x2 matrix: TP=7277, FP=706, FN=1325.
    ConfusionMatrix cm(2);
    cm.at(1, 1) = 7277;
    cm.at(0, 1) = 706;
    cm.at(1, 0) = 1325;
    cm.at(0, 0) = 10000;
    const auto metrics = class_metrics(cm);
    const ClassMetrics& positive = metrics[1];
    CHECK(round3(positive.precision) == 0.912);
    CHECK(round3(positive.recall) == 0.846);
    CHECK(positive.f1 == doctest::Approx(0.878).epsilon(0.0012));
    CHECK(positive.precision_n == 7983);
    CHECK(positive.recall_n == 8602);
    CHECK(round3(positive.precision_ci.lower) == 0.905);
    CHECK(round3(positive.precision_ci.upper) == 0.918);
    CHECK(round3(positive.recall_ci.lower) == 0.838);
    CHECK(round3(positive.recall_ci.upper) == 0.853);
}

TEST_CASE("diagonal confusion matrix gives perfect metrics") {
    ConfusionMatrix cm(3);
    for (int c = 0; c < 3; ++c) cm.at(c, c) = 10 + c;
    for (const auto& m : class_metrics(cm)) {
        CHECK(m.precision == 1.0);
        CHECK(m.recall == 1.0);
        CHECK(m.f1 == 1.0);
    }
    CHECK(cm.accuracy() == 1.0);
}

TEST_CASE("class metrics match a naive recomputation on random matrices") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        ConfusionMatrix cm(3);
        for (int t = 0; t < 3; ++t)
            for (int p = 0; p < 3; ++p) cm.at(t, p) = rng.uniform_int(200);
        if (cm.total() == 0) continue;
        const auto metrics = class_metrics(cm);
        for (int c = 0; c < 3; ++c) {
            long tp = cm.at(c, c), fp = 0, fn = 0;
            for (int o = 0; o < 3; ++o) {
                if (o == c) continue;
                fp += cm.at(o, c);
                fn += cm.at(c, o);
            }
            if (tp + fp == 0 && tp + fn == 0) {
                CHECK_FALSE(metrics[static_cast<size_t>(c)].defined);
                continue;
            }
            const double precision = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
            const double recall = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
            CHECK(std::abs(metrics[static_cast<size_t>(c)].precision - precision) < 1e-12);
            CHECK(std::abs(metrics[static_cast<size_t>(c)].recall - recall) < 1e-12);
        }
        // accuracy == trace/total
        long diag = 0;
        for (int c = 0; c < 3; ++c) diag += cm.at(c, c);
        CHECK(cm.accuracy() == doctest::Approx(double(diag) / double(cm.total())).epsilon(1e-15));
    }
}

TEST_CASE("absent classes are marked undefined, not zero") {
    ConfusionMatrix cm(3);
    cm.at(0, 0) = 5;
    cm.at(1, 0) = 2;
    cm.at(1, 1) = 3;
    const auto metrics = class_metrics(cm);
    CHECK(metrics[0].defined);
    CHECK(metrics[1].defined);
    CHECK_FALSE(metrics[2].defined);
}

TEST_CASE("roc auc on perfectly separated and uninformative scores") {
    std::vector<double> sep = {0.1, 0.2, 0.3, 0.8, 0.9, 0.95};
    std::vector<int> lab = {0, 0, 0, 1, 1, 1};
    CHECK(roc_auc_binary(sep, lab) == doctest::Approx(1.0));

    Rng rng(3);
    std::vector<double> rand_scores;
    std::vector<int> rand_labels;
    for (int i = 0; i < 4000; ++i) {
        rand_scores.push_back(rng.uniform());
        rand_labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
    }
    CHECK(roc_auc_binary(rand_scores, rand_labels) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("roc auc equals the pairwise oracle, ties included") {
    Rng rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 20 + rng.uniform_int(480);
        std::vector<double> scores;
        std::vector<int> labels;
        int positives = 0;
        for (int i = 0; i < n; ++i) {
            // Quantized scores force plenty of ties.
            scores.push_back(rng.uniform_int(20) / 20.0);
            const int l = rng.bernoulli(0.4) ? 1 : 0;
            positives += l;
            labels.push_back(l);
        }
        if (positives == 0 || positives == n) continue;
        CHECK(std::abs(roc_auc_binary(scores, labels) - auc_pairwise(scores, labels)) < 1e-12);
    }
}

TEST_CASE("roc auc is invariant under strictly monotone transforms") {
    Rng rng(13);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 300; ++i) {
        scores.push_back(rng.normal());
        labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
    }
    std::vector<double> mapped;
    for (double s : scores) mapped.push_back(std::exp(2.0 * s) + 1.0);
    CHECK(roc_auc_binary(scores, labels) ==
          doctest::Approx(roc_auc_binary(mapped, labels)).epsilon(1e-12));
}

TEST_CASE("roc auc requires both outcome kinds") {
    std::vector<double> s = {0.4, 0.6};
    std::vector<int> l = {1, 1};
    CHECK_THROWS_AS(roc_auc_binary(s, l), UsageError);
}

TEST_CASE("regression metrics basics and naive oracle") {
    std::vector<double> truth = {0, 1, 2, 1, 0};
    CHECK(regression_metrics(truth, truth).mae == 0.0);
    CHECK(regression_metrics(truth, truth).mse == 0.0);
    CHECK(regression_metrics(truth, truth).r2 == 1.0);

    const double mean = 0.8;
    std::vector<double> mean_pred(truth.size(), mean);
    CHECK(regression_metrics(mean_pred, truth).r2 == doctest::Approx(0.0).epsilon(1e-12));

    Rng rng(17);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> p, t;
        for (int i = 0; i < 100; ++i) {
            p.push_back(rng.normal());
            t.push_back(rng.normal());
        }
        const RegressionMetrics m = regression_metrics(p, t);
        double mae = 0, mse = 0, tmean = 0, ss_res = 0, ss_tot = 0;
        for (double v : t) tmean += v;
        tmean /= 100;
        for (int i = 0; i < 100; ++i) {
            mae += std::abs(p[i] - t[i]);
            mse += (p[i] - t[i]) * (p[i] - t[i]);
            ss_res += (p[i] - t[i]) * (p[i] - t[i]);
            ss_tot += (t[i] - tmean) * (t[i] - tmean);
        }
        CHECK(std::abs(m.mae - mae / 100) < 1e-12);
        CHECK(std::abs(m.mse - mse / 100) < 1e-12);
        CHECK(std::abs(m.r2 - (1.0 - ss_res / ss_tot)) < 1e-12);
    }

    std::vector<double> constant = {2, 2, 2};
    std::vector<double> pred = {1, 2, 3};
    CHECK_FALSE(regression_metrics(pred, constant).r2_defined);
}

TEST_CASE("calibration curve and expected calibration error") {
    SUBCASE("confident correct predictions have zero ECE") {
        std::vector<std::vector<double>> scores;
        std::vector<int> labels;
        for (int i = 0; i < 60; ++i) {
            const int c = i % 3;
            std::vector<double> row(3, 0.0);
            row[static_cast<size_t>(c)] = 1.0;
            scores.push_back(row);
            labels.push_back(c);
        }
        const CalibrationReport rep = calibration_curve(scores, labels, 3);
        CHECK(rep.ece_macro == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("well-specified probabilistic model is calibrated") {
        Rng rng(23);
        std::vector<std::vector<double>> scores;
        std::vector<int> labels;
        for (int i = 0; i < 5000; ++i) {
            // Random simplex point via normalized gammas, label drawn from it.
            std::vector<double> p(3);
            double sum = 0.0;
            for (auto& v : p) {
                v = rng.gamma(1.0, 1.0);
                sum += v;
            }
            for (auto& v : p) v /= sum;
            const double u = rng.uniform();
            const int label = u < p[0] ? 0 : (u < p[0] + p[1] ? 1 : 2);
            scores.push_back(p);
            labels.push_back(label);
        }
        const CalibrationReport rep = calibration_curve(scores, labels, 3);
        CHECK(rep.ece_macro < 0.05);
    }
    SUBCASE("bins below 2 are rejected") {
        std::vector<std::vector<double>> scores = {{1, 0, 0}};
        std::vector<int> labels = {0};
        CHECK_THROWS_AS(calibration_curve(scores, labels, 3, 1), UsageError);
    }
}

TEST_CASE("paired t-test matches the manual formula and flags degenerate input") {
    std::vector<double> a = {2, 4, 6};
    std::vector<double> b = {1, 3, 5};
    const TTestResult degenerate = paired_ttest(a, b);
    CHECK(degenerate.degenerate);
    CHECK(degenerate.mean_diff == doctest::Approx(1.0));

    std::vector<double> b2 = {1.0, 3.1, 4.9};
    const TTestResult r = paired_ttest(a, b2);
    CHECK_FALSE(r.degenerate);
    // d = {1.0, 0.9, 1.1}: mean 1.0, sd 0.1 -> t = 1.0 / (0.1/sqrt(3))
    CHECK(r.t == doctest::Approx(std::sqrt(3.0) / 0.1).epsilon(1e-9));
    CHECK(r.df == 2);
    CHECK(r.p > 0.0);
    CHECK(r.p < 0.01);

    SUBCASE("identical vectors are degenerate") {
        CHECK(paired_ttest(a, a).degenerate);
    }
    SUBCASE("constant shift with tiny noise is extremely significant") {
        Rng rng(31);
        std::vector<double> x, y;
        for (int i = 0; i < 10; ++i) {
            const double base = rng.normal();
            x.push_back(base + 1.0 + 1e-4 * rng.normal());
            y.push_back(base);
        }
        const TTestResult big = paired_ttest(x, y);
        CHECK(std::abs(big.t) > 100.0);
        CHECK(big.p < 0.001);
    }
}

TEST_CASE("t distribution tail matches reference values") {
    // Two-sided p for t=2.0, df=10 is 0.07338803 (reference: scipy.stats).
    CHECK(student_t_sf2(2.0, 10) == doctest::Approx(0.0733880292).epsilon(1e-8));
    CHECK(student_t_sf2(0.0, 5) == doctest::Approx(1.0));
}

TEST_CASE("one-way anova") {
    std::vector<std::vector<double>> groups = {
        {1.1, 1.3, 0.9, 1.0}, {2.0, 2.2, 1.9, 2.1}, {3.2, 2.9, 3.1, 3.0}};
    const AnovaResult r = one_way_anova(groups);
    CHECK_FALSE(r.degenerate);
    CHECK(r.df_between == 2);
    CHECK(r.df_within == 9);
    CHECK(r.f > 50.0);
    CHECK(r.p < 1e-6);

    std::vector<std::vector<double>> flat = {{1.0, 1.0}, {1.0, 1.0}};
    CHECK(one_way_anova(flat).degenerate);
}

TEST_CASE("macro f1 lies between the per-class extremes") {
    Rng rng(37);
    for (int rep = 0; rep < 30; ++rep) {
        ConfusionMatrix cm(3);
        for (int t = 0; t < 3; ++t) {
            cm.at(t, t) = 1 + rng.uniform_int(50);
            for (int p = 0; p < 3; ++p)
                if (p != t) cm.at(t, p) = rng.uniform_int(30);
        }
        const auto metrics = class_metrics(cm);
        double lo = 1.0, hi = 0.0, macro = 0.0;
        for (const auto& m : metrics) {
            lo = std::min(lo, m.f1);
            hi = std::max(hi, m.f1);
            macro += m.f1 / 3.0;
        }
        CHECK(macro >= lo - 1e-12);
        CHECK(macro <= hi + 1e-12);
    }
}

TEST_CASE("aggregated report is internally consistent") {
    Rng rng(41);
    std::vector<std::vector<double>> scores;
    std::vector<int> labels;
    for (int i = 0; i < 400; ++i) {
        const int label = rng.uniform_int(3);
        std::vector<double> p(3);
        double sum = 0.0;
        for (int c = 0; c < 3; ++c) {
            p[static_cast<size_t>(c)] = rng.gamma(1.0, 1.0) + (c == label ? 1.2 : 0.0);
            sum += p[static_cast<size_t>(c)];
        }
        for (auto& v : p) v /= sum;
        scores.push_back(p);
        labels.push_back(label);
    }
    const MetricsReport rep = evaluate_predictions(scores, labels, 3, {"HTP", "LTP", "NTP"});
    CHECK(rep.cm.total() == 400);
    CHECK(rep.accuracy == doctest::Approx(rep.cm.accuracy()));
    CHECK(rep.accuracy_ci.lower <= rep.accuracy);
    CHECK(rep.accuracy_ci.upper >= rep.accuracy);
    CHECK(rep.auc.per_class.size() == 3);
    for (double auc : rep.auc.per_class) CHECK(auc > 0.5);

    const std::string text = report_to_text(rep);
    CHECK(text.find("accuracy") != std::string::npos);
    const std::string csv = report_to_csv(rep);
    CHECK(csv.find("precision,HTP") != std::string::npos);
    const std::string cm_csv = confusion_to_csv(rep.cm, rep.class_names);
    CHECK(cm_csv.find("HTP") != std::string::npos);
}

TEST_CASE("chi-square tail behaves at the extremes") {
    CHECK(chi_square_sf(0.0, 2) == doctest::Approx(1.0));
    CHECK(chi_square_sf(100.0, 2) < 1e-20);
    // p for chi2=0.1, df=2 is exp(-0.05) ~ 0.9512.
    CHECK(chi_square_sf(0.1, 2) == doctest::Approx(std::exp(-0.05)).epsilon(1e-10));
}
