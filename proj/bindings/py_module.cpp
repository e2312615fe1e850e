#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mtps/augment.hpp"
#include "mtps/generator.hpp"
#include "mtps/metrics.hpp"
#include "mtps/thresholds.hpp"
#include "mtps/training.hpp"

namespace py = pybind11;
using namespace mtps;

namespace {

StateProbabilities make_probs(double p_ntp, double p_ltp, double p_htp) {
    std::array<double, 3> probs{};
    probs[ClassLabel::kNtp] = p_ntp;
    probs[ClassLabel::kLtp] = p_ltp;
    probs[ClassLabel::kHtp] = p_htp;
    return StateProbabilities::from_probs(probs);
}

py::dict decision_to_dict(const RiderStateDecision& d) {
    py::dict out;
    out["phase"] = d.phase;
    out["name"] = d.name;
    out["intervention"] = d.intervention;
    out["argmax"] = std::string(d.argmax.name());
    out["confidence"] = d.confidence;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Time-pressure state classification for powered two-wheeler telemetry";

    m.def(
        "wilson_ci",
        [](double p, long n, double z) {
            const WilsonInterval ci = wilson_ci(p, n, z);
            return py::make_tuple(ci.lower, ci.upper);
        },
        py::arg("p"), py::arg("n"), py::arg("z") = 1.96,
        "Wilson score interval for a binomial proportion");

    m.def(
        "class_metrics_from_counts",
        [](long tp, long fp, long fn) {
            ConfusionMatrix cm(2);
            cm.at(1, 1) = tp;
            cm.at(0, 1) = fp;
            cm.at(1, 0) = fn;
            cm.at(0, 0) = 1;  // placeholder true negatives; unused by these metrics
            const ClassMetrics cs = class_metrics(cm)[1];
            py::dict out;
            out["precision"] = cs.precision;
            out["recall"] = cs.recall;
            out["f1"] = cs.f1;
            out["precision_ci"] = py::make_tuple(cs.precision_ci.lower, cs.precision_ci.upper);
            out["recall_ci"] = py::make_tuple(cs.recall_ci.lower, cs.recall_ci.upper);
            return out;
        },
        py::arg("tp"), py::arg("fp"), py::arg("fn"),
        "Precision/recall/F1 with Wilson intervals from one-vs-rest counts");

    m.def(
        "roc_auc",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
            return roc_auc_binary(scores, labels);
        },
        py::arg("scores"), py::arg("labels"), "Binary AUC via the midrank statistic");

    m.def(
        "classify_state",
        [](double p_ntp, double p_ltp, double p_htp) {
            return decision_to_dict(classify_state(make_probs(p_ntp, p_ltp, p_htp),
                                                   RuleSet::defaults()));
        },
        py::arg("p_ntp"), py::arg("p_ltp"), py::arg("p_htp"),
        "Map a probability triple to the six-phase rider state");

    m.def("schema_feature_names", [] {
        std::vector<std::string> names;
        for (const auto& f : FeatureSchema::standard().features()) names.push_back(f.name);
        return names;
    });
    m.def("schema_hash", [] { return FeatureSchema::standard().hash(); });

    m.def(
        "generate_corpus",
        [](const std::filesystem::path& out_dir, int rides_per_class, int duration,
           uint64_t seed) {
            GeneratorConfig cfg;
            cfg.rides_per_class = rides_per_class;
            cfg.duration = duration;
            cfg.seed = seed;
            const auto sessions = generate_corpus(cfg);
            write_corpus(out_dir, sessions, cfg);
            return sessions.size();
        },
        py::arg("out_dir"), py::arg("rides_per_class") = 10, py::arg("duration") = 1000,
        py::arg("seed") = 7, "Generate a labeled synthetic corpus and return the session count");

    m.def(
        "validate_corpus_dir",
        [](const std::filesystem::path& dir) {
            const auto sessions = ingest_csv(dir);
            const CorpusReport rep = validate_corpus(sessions);
            py::dict out;
            out["all_ok"] = rep.all_ok;
            out["speed_ratio"] = rep.htp_ntp_speed_ratio;
            out["text"] = report_to_text(rep);
            return out;
        },
        py::arg("dir"), "Check a corpus directory against the behavioral targets");

    m.def(
        "train_model",
        [](const std::filesystem::path& data, const std::filesystem::path& out_dir,
           uint64_t seed, int max_epochs, int window_length, int window_stride, int batch_size,
           int threads, const std::string& variant) {
            TrainConfig cfg;
            cfg.seed = seed;
            cfg.max_epochs = max_epochs;
            cfg.window_length = window_length;
            cfg.window_stride = window_stride;
            cfg.batch_size = batch_size;
            cfg.threads = threads;
            cfg.variant = variant_from_name(variant);
            cfg.validate();
            auto sessions = ingest_csv(data);
            PreparedData prepared = prepare_data(std::move(sessions), cfg, cfg.seed);
            ModelConfig mc;
            mc.dropout = cfg.dropout;
            mc.variant = cfg.variant;
            const TrainResult result = train(cfg, mc, prepared.train, prepared.val);
            std::filesystem::create_directories(out_dir);
            CheckpointExtras extras;
            extras.schema_hash = FeatureSchema::standard().hash();
            extras.window_length = cfg.window_length;
            extras.window_stride = cfg.window_stride;
            extras.normalization_json = prepared.stats.to_json();
            save_checkpoint(out_dir / "checkpoint.mtps", result.params, extras);
            const EvalStats test = evaluate(result.params, prepared.test, cfg.threads);
            py::dict out;
            out["checkpoint"] = (out_dir / "checkpoint.mtps").string();
            out["best_val_loss"] = result.best_val_loss;
            out["best_epoch"] = result.best_epoch;
            out["epochs_run"] = result.epochs_run;
            out["test_accuracy"] = test.accuracy;
            return out;
        },
        py::arg("data"), py::arg("out_dir"), py::arg("seed") = 64, py::arg("max_epochs") = 20,
        py::arg("window_length") = 64, py::arg("window_stride") = 32, py::arg("batch_size") = 64,
        py::arg("threads") = 0, py::arg("variant") = "full",
        "Train on a corpus and write a checkpoint; returns summary statistics");

    m.def(
        "evaluate_checkpoint",
        [](const std::filesystem::path& checkpoint, const std::filesystem::path& data,
           int threads) {
            const LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
            if (ckpt.extras.schema_hash != FeatureSchema::standard().hash())
                throw SchemaError("checkpoint schema hash does not match this build");
            auto sessions = ingest_csv(data);
            impute(sessions);
            normalize(sessions, NormalizationStats::from_json(ckpt.extras.normalization_json));
            const WindowSet windows =
                window(sessions, ckpt.extras.window_length, ckpt.extras.window_stride);
            const auto preds = predict_all(ckpt.params, windows, threads);
            std::vector<std::vector<double>> scores;
            std::vector<int> labels;
            for (size_t i = 0; i < preds.size(); ++i) {
                scores.push_back({preds[i].p_htp, preds[i].p_ltp, preds[i].p_ntp});
                labels.push_back(windows.labels[i].value);
            }
            const MetricsReport rep =
                evaluate_predictions(scores, labels, 3, {"HTP", "LTP", "NTP"});
            py::dict out;
            out["accuracy"] = rep.accuracy;
            out["macro_f1"] = rep.macro_f1;
            out["macro_roc_auc"] = rep.auc.macro;
            out["mae"] = rep.regression.mae;
            out["mse"] = rep.regression.mse;
            out["ece_macro"] = rep.calibration.ece_macro;
            out["windows"] = static_cast<long>(windows.size());
            out["text"] = report_to_text(rep);
            return out;
        },
        py::arg("checkpoint"), py::arg("data"), py::arg("threads") = 0,
        "Evaluate a checkpoint on a labeled corpus");

    m.def(
        "predict_window",
        [](const std::filesystem::path& checkpoint, const std::vector<std::vector<double>>& rows) {
            const LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
            std::vector<double> flat;
            for (const auto& row : rows) {
                if (row.size() != static_cast<size_t>(ckpt.params.config.input_features))
                    throw SchemaError("each row must have " +
                                      std::to_string(ckpt.params.config.input_features) +
                                      " features");
                flat.insert(flat.end(), row.begin(), row.end());
            }
            const StateProbabilities p =
                forward(ckpt.params, flat, static_cast<int>(rows.size()));
            py::dict out;
            out["p_ntp"] = p.p_ntp;
            out["p_ltp"] = p.p_ltp;
            out["p_htp"] = p.p_htp;
            out["argmax"] = std::string(p.argmax_class.name());
            out["confidence"] = p.confidence;
            return out;
        },
        py::arg("checkpoint"), py::arg("rows"),
        "Run one already-normalized window (list of 63-feature rows) through a checkpoint");

    m.def(
        "complexity",
        [](int t_len) {
            MtpsParams params = MtpsParams::init(ModelConfig{}, 0);
            const Complexity c = count_complexity(params, t_len);
            py::dict out;
            out["parameters"] = c.parameters;
            out["flops"] = c.flops;
            out["attention_score_flops"] = c.attention_score_flops;
            out["serialized_bytes"] = c.serialized_bytes;
            return out;
        },
        py::arg("t_len") = 64, "Parameter/FLOP accounting of the full model at length T");

    m.attr("__version__") = "0.1.0";
}
