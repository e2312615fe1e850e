#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtps/errors.hpp"

namespace mtps {

struct WilsonInterval {
    double lower = 0.0;
    double upper = 0.0;
};

// 95% score interval for a binomial proportion (z = 1.96 by default).
WilsonInterval wilson_ci(double p, long n, double z = 1.96);

// Row = true class, column = predicted class.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int classes) : k_(classes), counts_(static_cast<size_t>(classes) * classes, 0) {}

    static ConfusionMatrix from_predictions(std::span<const int> predicted,
                                            std::span<const int> truth, int classes);

    int classes() const { return k_; }
    long& at(int true_cls, int pred_cls) { return counts_[idx(true_cls, pred_cls)]; }
    long at(int true_cls, int pred_cls) const { return counts_[idx(true_cls, pred_cls)]; }
    long total() const;
    long true_positives(int cls) const { return at(cls, cls); }
    long false_positives(int cls) const;
    long false_negatives(int cls) const;
    double accuracy() const;

private:
    size_t idx(int t, int p) const { return static_cast<size_t>(t) * k_ + p; }
    int k_;
    std::vector<long> counts_;
};

struct ClassMetrics {
    bool defined = true;  // false when the class never occurs (as truth or prediction)
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    WilsonInterval precision_ci, recall_ci, f1_ci;
    long precision_n = 0;  // TP+FP
    long recall_n = 0;     // TP+FN
};

// Precision n = TP+FP, recall n = TP+FN; F1 treated as a proportion over
// TP + (FP+FN)/2 adjusted trials for its interval.
std::vector<ClassMetrics> class_metrics(const ConfusionMatrix& cm);

// One-vs-rest AUC via the midrank statistic; ties count half.
double roc_auc_binary(std::span<const double> scores, std::span<const int> labels);

struct AucReport {
    std::vector<double> per_class;
    double macro = 0.0;
};

// scores[i] holds one probability per class for sample i.
AucReport roc_auc(const std::vector<std::vector<double>>& scores, std::span<const int> labels,
                  int classes);

struct RegressionMetrics {
    double mae = 0.0;
    double mse = 0.0;
    double r2 = 0.0;
    bool r2_defined = true;  // false when the truth is constant
};

RegressionMetrics regression_metrics(std::span<const double> predicted,
                                     std::span<const double> truth);

struct CalibrationBin {
    double confidence = 0.0;  // mean predicted probability in the bin
    double accuracy = 0.0;    // empirical frequency in the bin
    long count = 0;
};

struct CalibrationReport {
    std::vector<std::vector<CalibrationBin>> per_class;  // empty bins omitted
    std::vector<double> ece_per_class;
    double ece_macro = 0.0;
};

CalibrationReport calibration_curve(const std::vector<std::vector<double>>& scores,
                                    std::span<const int> labels, int classes, int bins = 10);

struct TTestResult {
    bool degenerate = false;  // zero variance of pairwise differences
    double t = 0.0;
    double p = 1.0;
    long df = 0;
    double mean_diff = 0.0;
};

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

struct AnovaResult {
    bool degenerate = false;
    double f = 0.0;
    double p = 1.0;
    long df_between = 0;
    long df_within = 0;
};

AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups);

// ---- special functions (exposed for tests) ----------------------------------
double incomplete_beta(double a, double b, double x);   // regularized I_x(a,b)
double incomplete_gamma_q(double a, double x);          // regularized Q(a,x)
double student_t_sf2(double t, long df);                // two-sided tail
double f_dist_sf(double f, long d1, long d2);
double chi_square_sf(double x, long df);
double normal_cdf(double x);

// ---- aggregated evaluation ---------------------------------------------------

struct MetricsReport {
    ConfusionMatrix cm{3};
    double accuracy = 0.0;
    WilsonInterval accuracy_ci;
    std::vector<ClassMetrics> per_class;
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    AucReport auc;
    RegressionMetrics regression;
    CalibrationReport calibration;
    std::vector<std::string> class_names;
};

MetricsReport evaluate_predictions(const std::vector<std::vector<double>>& scores,
                                   std::span<const int> labels, int classes,
                                   const std::vector<std::string>& class_names);

std::string report_to_text(const MetricsReport& report);
std::string report_to_csv(const MetricsReport& report);
std::string confusion_to_csv(const ConfusionMatrix& cm, const std::vector<std::string>& names);

}  // namespace mtps
