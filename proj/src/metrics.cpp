#include "mtps/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mtps {

WilsonInterval wilson_ci(double p, long n, double z) {
    if (n < 1) throw UsageError("wilson_ci requires n >= 1");
    if (p < 0.0 || p > 1.0) throw UsageError("wilson_ci requires 0 <= p <= 1");
    const double nn = static_cast<double>(n);
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = (p + z2 / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
    WilsonInterval ci{center - half, center + half};
    ci.lower = std::max(0.0, ci.lower);
    ci.upper = std::min(1.0, ci.upper);
    if (p == 0.0) ci.lower = 0.0;  // analytically exact at the extremes
    if (p == 1.0) ci.upper = 1.0;
    return ci;
}

ConfusionMatrix ConfusionMatrix::from_predictions(std::span<const int> predicted,
                                                  std::span<const int> truth, int classes) {
    if (predicted.size() != truth.size())
        throw UsageError("confusion matrix input lengths differ");
    ConfusionMatrix cm(classes);
    for (size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= classes || predicted[i] < 0 || predicted[i] >= classes)
            throw UsageError("class index out of range in confusion matrix input");
        ++cm.at(truth[i], predicted[i]);
    }
    return cm;
}

long ConfusionMatrix::total() const {
    return std::accumulate(counts_.begin(), counts_.end(), 0L);
}

long ConfusionMatrix::false_positives(int cls) const {
    long fp = 0;
    for (int t = 0; t < k_; ++t)
        if (t != cls) fp += at(t, cls);
    return fp;
}

long ConfusionMatrix::false_negatives(int cls) const {
    long fn = 0;
    for (int p = 0; p < k_; ++p)
        if (p != cls) fn += at(cls, p);
    return fn;
}

double ConfusionMatrix::accuracy() const {
    const long n = total();
    if (n == 0) throw UsageError("accuracy of an empty confusion matrix");
    long diag = 0;
    for (int c = 0; c < k_; ++c) diag += at(c, c);
    return static_cast<double>(diag) / static_cast<double>(n);
}

std::vector<ClassMetrics> class_metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw UsageError("class metrics of an empty confusion matrix");
    std::vector<ClassMetrics> out;
    for (int c = 0; c < cm.classes(); ++c) {
        ClassMetrics m;
        const long tp = cm.true_positives(c);
        const long fp = cm.false_positives(c);
        const long fn = cm.false_negatives(c);
        m.precision_n = tp + fp;
        m.recall_n = tp + fn;
        if (m.precision_n == 0 && m.recall_n == 0) {
            m.defined = false;  // class absent from both truth and predictions
            out.push_back(m);
            continue;
        }
        m.precision = m.precision_n > 0 ? static_cast<double>(tp) / m.precision_n : 0.0;
        m.recall = m.recall_n > 0 ? static_cast<double>(tp) / m.recall_n : 0.0;
        const double pr = m.precision + m.recall;
        m.f1 = pr > 0.0 ? 2.0 * m.precision * m.recall / pr : 0.0;
        if (m.precision_n > 0) m.precision_ci = wilson_ci(m.precision, m.precision_n);
        if (m.recall_n > 0) m.recall_ci = wilson_ci(m.recall, m.recall_n);
        const long f1_n = tp + (fp + fn + 1) / 2;  // adjusted trials, rounded up
        if (f1_n > 0) m.f1_ci = wilson_ci(m.f1, f1_n);
        out.push_back(m);
    }
    return out;
}

double roc_auc_binary(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw UsageError("roc_auc input lengths differ");
    const size_t n = scores.size();
    long n_pos = 0;
    for (int l : labels) n_pos += l ? 1 : 0;
    const long n_neg = static_cast<long>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw UsageError("roc_auc undefined: needs at least one positive and one negative");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&scores](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Midranks over tied score groups.
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (size_t t = i; t <= j; ++t)
            if (labels[order[t]]) rank_sum_pos += midrank;
        i = j + 1;
    }
    const double auc = (rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1)) /
                       (static_cast<double>(n_pos) * static_cast<double>(n_neg));
    return auc;
}

AucReport roc_auc(const std::vector<std::vector<double>>& scores, std::span<const int> labels,
                  int classes) {
    AucReport report;
    std::vector<double> s(labels.size());
    std::vector<int> y(labels.size());
    for (int c = 0; c < classes; ++c) {
        for (size_t i = 0; i < labels.size(); ++i) {
            s[i] = scores[i][static_cast<size_t>(c)];
            y[i] = labels[i] == c ? 1 : 0;
        }
        report.per_class.push_back(roc_auc_binary(s, y));
    }
    report.macro = std::accumulate(report.per_class.begin(), report.per_class.end(), 0.0) /
                   static_cast<double>(classes);
    return report;
}

RegressionMetrics regression_metrics(std::span<const double> predicted,
                                     std::span<const double> truth) {
    if (predicted.size() != truth.size() || truth.empty())
        throw UsageError("regression metrics need equal-length non-empty vectors");
    RegressionMetrics m;
    const double n = static_cast<double>(truth.size());
    double mean = 0.0;
    for (double v : truth) mean += v;
    mean /= n;
    double ss_res = 0.0, ss_tot = 0.0;
    for (size_t i = 0; i < truth.size(); ++i) {
        const double d = predicted[i] - truth[i];
        m.mae += std::abs(d);
        ss_res += d * d;
        const double c = truth[i] - mean;
        ss_tot += c * c;
    }
    m.mae /= n;
    m.mse = ss_res / n;
    if (ss_tot == 0.0) {
        m.r2_defined = false;
        m.r2 = 0.0;
    } else {
        m.r2 = 1.0 - ss_res / ss_tot;
    }
    return m;
}

CalibrationReport calibration_curve(const std::vector<std::vector<double>>& scores,
                                    std::span<const int> labels, int classes, int bins) {
    if (bins < 2) throw UsageError("calibration needs at least 2 bins");
    CalibrationReport report;
    const double n_total = static_cast<double>(labels.size());
    for (int c = 0; c < classes; ++c) {
        std::vector<double> conf_sum(static_cast<size_t>(bins), 0.0);
        std::vector<long> hits(static_cast<size_t>(bins), 0);
        std::vector<long> count(static_cast<size_t>(bins), 0);
        for (size_t i = 0; i < labels.size(); ++i) {
            const double p = scores[i][static_cast<size_t>(c)];
            int b = static_cast<int>(p * bins);
            b = std::clamp(b, 0, bins - 1);
            conf_sum[static_cast<size_t>(b)] += p;
            hits[static_cast<size_t>(b)] += labels[i] == c ? 1 : 0;
            ++count[static_cast<size_t>(b)];
        }
        std::vector<CalibrationBin> curve;
        double ece = 0.0;
        for (int b = 0; b < bins; ++b) {
            if (count[static_cast<size_t>(b)] == 0) continue;  // empty bins skipped
            CalibrationBin bin;
            bin.count = count[static_cast<size_t>(b)];
            bin.confidence = conf_sum[static_cast<size_t>(b)] / bin.count;
            bin.accuracy = static_cast<double>(hits[static_cast<size_t>(b)]) / bin.count;
            ece += (bin.count / n_total) * std::abs(bin.confidence - bin.accuracy);
            curve.push_back(bin);
        }
        report.per_class.push_back(std::move(curve));
        report.ece_per_class.push_back(ece);
    }
    report.ece_macro =
        std::accumulate(report.ece_per_class.begin(), report.ece_per_class.end(), 0.0) /
        static_cast<double>(classes);
    return report;
}

// ---- special functions -------------------------------------------------------

namespace {

double beta_cf(double a, double b, double x) {
    // Lentz's continued fraction for the incomplete beta.
    constexpr int kMaxIter = 300;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double incomplete_gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw UsageError("incomplete_gamma_q domain error");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) {
        // Series for P(a,x), return 1-P.
        double sum = 1.0 / a, term = sum, ap = a;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-16) break;
        }
        const double p = sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
        return 1.0 - p;
    }
    // Continued fraction for Q directly.
    constexpr double kTiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / kTiny, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double student_t_sf2(double t, long df) {
    const double x = static_cast<double>(df) / (df + t * t);
    return incomplete_beta(0.5 * df, 0.5, x);
}

double f_dist_sf(double f, long d1, long d2) {
    if (f <= 0.0) return 1.0;
    const double x = static_cast<double>(d2) / (d2 + d1 * f);
    return incomplete_beta(0.5 * d2, 0.5 * d1, x);
}

double chi_square_sf(double x, long df) { return incomplete_gamma_q(0.5 * df, 0.5 * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2)
        throw UsageError("paired t-test needs equal-length vectors of size >= 2");
    TTestResult r;
    const size_t n = a.size();
    std::vector<double> d(n);
    for (size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : d) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);
    r.mean_diff = mean;
    r.df = static_cast<long>(n) - 1;
    if (var == 0.0) {
        r.degenerate = true;  // identical differences carry no test information
        return r;
    }
    r.t = mean / std::sqrt(var / static_cast<double>(n));
    r.p = student_t_sf2(r.t, r.df);
    return r;
}

AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw UsageError("anova needs at least 2 groups");
    AnovaResult r;
    long n_total = 0;
    double grand = 0.0;
    for (const auto& g : groups) {
        if (g.size() < 2) throw UsageError("anova needs at least 2 samples per group");
        n_total += static_cast<long>(g.size());
        grand += std::accumulate(g.begin(), g.end(), 0.0);
    }
    grand /= static_cast<double>(n_total);
    double ss_between = 0.0, ss_within = 0.0;
    for (const auto& g : groups) {
        const double m = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
        ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
        for (double v : g) ss_within += (v - m) * (v - m);
    }
    r.df_between = static_cast<long>(groups.size()) - 1;
    r.df_within = n_total - static_cast<long>(groups.size());
    if (ss_within == 0.0) {
        r.degenerate = true;
        return r;
    }
    r.f = (ss_between / r.df_between) / (ss_within / r.df_within);
    r.p = f_dist_sf(r.f, r.df_between, r.df_within);
    return r;
}

// ---- aggregated evaluation ---------------------------------------------------

MetricsReport evaluate_predictions(const std::vector<std::vector<double>>& scores,
                                   std::span<const int> labels, int classes,
                                   const std::vector<std::string>& class_names) {
    if (scores.size() != labels.size() || scores.empty())
        throw UsageError("evaluate_predictions needs matching non-empty scores and labels");
    MetricsReport report;
    report.class_names = class_names;
    std::vector<int> predicted(labels.size());
    for (size_t i = 0; i < scores.size(); ++i) {
        int best = 0;
        for (int c = 1; c < classes; ++c)
            if (scores[i][static_cast<size_t>(c)] > scores[i][static_cast<size_t>(best)]) best = c;
        predicted[i] = best;
    }
    report.cm = ConfusionMatrix::from_predictions(predicted, labels, classes);
    report.accuracy = report.cm.accuracy();
    report.accuracy_ci = wilson_ci(report.accuracy, report.cm.total());
    report.per_class = class_metrics(report.cm);

    int defined = 0;
    for (const auto& m : report.per_class) {
        if (!m.defined) continue;
        report.macro_precision += m.precision;
        report.macro_recall += m.recall;
        report.macro_f1 += m.f1;
        ++defined;
    }
    if (defined > 0) {
        report.macro_precision /= defined;
        report.macro_recall /= defined;
        report.macro_f1 /= defined;
    }

    report.auc = roc_auc(scores, labels, classes);

    std::vector<double> pred_d(labels.size()), true_d(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        pred_d[i] = static_cast<double>(predicted[i]);
        true_d[i] = static_cast<double>(labels[i]);
    }
    report.regression = regression_metrics(pred_d, true_d);
    report.calibration = calibration_curve(scores, labels, classes);
    return report;
}

namespace {

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << std::fixed << v;
    return os.str();
}

}  // namespace

std::string report_to_text(const MetricsReport& r) {
    std::ostringstream os;
    os << "accuracy: " << fmt(r.accuracy) << "  95% CI [" << fmt(r.accuracy_ci.lower) << ", "
       << fmt(r.accuracy_ci.upper) << "]\n";
    os << "macro precision/recall/F1: " << fmt(r.macro_precision) << " / " << fmt(r.macro_recall)
       << " / " << fmt(r.macro_f1) << "\n";
    os << "macro ROC-AUC: " << fmt(r.auc.macro) << "\n";
    os << "MAE " << fmt(r.regression.mae) << "  MSE " << fmt(r.regression.mse) << "  R2 "
       << (r.regression.r2_defined ? fmt(r.regression.r2) : std::string("undefined")) << "\n";
    os << "ECE (macro): " << fmt(r.calibration.ece_macro) << "\n";
    for (size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& m = r.per_class[c];
        os << r.class_names[c] << ": ";
        if (!m.defined) {
            os << "undefined (class absent)\n";
            continue;
        }
        os << "precision " << fmt(m.precision, 3) << " [" << fmt(m.precision_ci.lower, 3) << ", "
           << fmt(m.precision_ci.upper, 3) << "]"
           << "  recall " << fmt(m.recall, 3) << " [" << fmt(m.recall_ci.lower, 3) << ", "
           << fmt(m.recall_ci.upper, 3) << "]"
           << "  F1 " << fmt(m.f1, 3) << " [" << fmt(m.f1_ci.lower, 3) << ", "
           << fmt(m.f1_ci.upper, 3) << "]"
           << "  AUC " << fmt(r.auc.per_class[c], 4) << "\n";
    }
    return os.str();
}

std::string report_to_csv(const MetricsReport& r) {
    std::ostringstream os;
    os << "metric,class,value,ci_lower,ci_upper\n";
    os << "accuracy,all," << r.accuracy << "," << r.accuracy_ci.lower << "," << r.accuracy_ci.upper
       << "\n";
    os << "macro_precision,all," << r.macro_precision << ",,\n";
    os << "macro_recall,all," << r.macro_recall << ",,\n";
    os << "macro_f1,all," << r.macro_f1 << ",,\n";
    os << "macro_roc_auc,all," << r.auc.macro << ",,\n";
    os << "mae,all," << r.regression.mae << ",,\n";
    os << "mse,all," << r.regression.mse << ",,\n";
    if (r.regression.r2_defined) os << "r2,all," << r.regression.r2 << ",,\n";
    os << "ece_macro,all," << r.calibration.ece_macro << ",,\n";
    for (size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& m = r.per_class[c];
        const std::string& name = r.class_names[c];
        if (!m.defined) {
            os << "precision," << name << ",undefined,,\n";
            continue;
        }
        os << "precision," << name << "," << m.precision << "," << m.precision_ci.lower << ","
           << m.precision_ci.upper << "\n";
        os << "recall," << name << "," << m.recall << "," << m.recall_ci.lower << ","
           << m.recall_ci.upper << "\n";
        os << "f1," << name << "," << m.f1 << "," << m.f1_ci.lower << "," << m.f1_ci.upper << "\n";
        os << "roc_auc," << name << "," << r.auc.per_class[c] << ",,\n";
        os << "ece," << name << "," << r.calibration.ece_per_class[c] << ",,\n";
    }
    return os.str();
}

std::string confusion_to_csv(const ConfusionMatrix& cm, const std::vector<std::string>& names) {
    std::ostringstream os;
    os << "true\\pred";
    for (int c = 0; c < cm.classes(); ++c) os << "," << names[static_cast<size_t>(c)];
    os << "\n";
    for (int t = 0; t < cm.classes(); ++t) {
        os << names[static_cast<size_t>(t)];
        for (int p = 0; p < cm.classes(); ++p) os << "," << cm.at(t, p);
        os << "\n";
    }
    return os.str();
}

}  // namespace mtps
