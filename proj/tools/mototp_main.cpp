#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "mtps/augment.hpp"
#include "mtps/config.hpp"
#include "mtps/generator.hpp"
#include "mtps/metrics.hpp"
#include "mtps/svg.hpp"
#include "mtps/thresholds.hpp"
#include "mtps/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mtps;

namespace {

constexpr const char* kVersion = "0.1.0";

uint64_t env_seed_fallback(uint64_t hard_default) {
    if (const char* env = std::getenv("MOTO_TP_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError("MOTO_TP_SEED is not an integer: " + std::string(env));
        }
    }
    return hard_default;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("short write on " + path.string());
}

struct ManifestClock {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void write(const fs::path& dir, const std::string& subcommand, const json& config,
               const json& inputs, const json& outputs) const {
        json m;
        m["tool_version"] = kVersion;
        m["subcommand"] = subcommand;
        m["config"] = config;
        m["inputs"] = inputs;
        m["outputs"] = outputs;
        m["schema_hash"] = FeatureSchema::standard().hash();
        m["duration_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_text(dir / "manifest.json", m.dump(2) + "\n");
    }
};

TrainConfig train_config_from(const KeyValueConfig& file) {
    TrainConfig cfg;
    cfg.learning_rate = file.get_double("learning_rate", cfg.learning_rate);
    cfg.batch_size = static_cast<int>(file.get_long("batch_size", cfg.batch_size));
    cfg.max_epochs = static_cast<int>(file.get_long("max_epochs", cfg.max_epochs));
    cfg.early_stop_patience =
        static_cast<int>(file.get_long("early_stop_patience", cfg.early_stop_patience));
    cfg.lr_plateau_patience =
        static_cast<int>(file.get_long("lr_plateau_patience", cfg.lr_plateau_patience));
    cfg.lr_factor = file.get_double("lr_factor", cfg.lr_factor);
    cfg.dropout = file.get_double("dropout", cfg.dropout);
    cfg.seed = file.get_u64("seed", cfg.seed);
    cfg.split_fraction = file.get_double("split_fraction", cfg.split_fraction);
    cfg.val_fraction = file.get_double("val_fraction", cfg.val_fraction);
    cfg.improve_threshold = file.get_double("improve_threshold", cfg.improve_threshold);
    cfg.threads = static_cast<int>(file.get_long("threads", cfg.threads));
    cfg.window_length = static_cast<int>(file.get_long("window_length", cfg.window_length));
    cfg.window_stride = static_cast<int>(file.get_long("window_stride", cfg.window_stride));
    cfg.variant = variant_from_name(file.get_string("variant", "full"));
    file.reject_unknown();
    return cfg;
}

json train_config_json(const TrainConfig& c) {
    json j;
    j["learning_rate"] = c.learning_rate;
    j["batch_size"] = c.batch_size;
    j["max_epochs"] = c.max_epochs;
    j["early_stop_patience"] = c.early_stop_patience;
    j["lr_plateau_patience"] = c.lr_plateau_patience;
    j["lr_factor"] = c.lr_factor;
    j["dropout"] = c.dropout;
    j["seed"] = c.seed;
    j["split_fraction"] = c.split_fraction;
    j["val_fraction"] = c.val_fraction;
    j["improve_threshold"] = c.improve_threshold;
    j["threads"] = c.threads;
    j["window_length"] = c.window_length;
    j["window_stride"] = c.window_stride;
    j["variant"] = variant_name(c.variant);
    return j;
}

// Per-window class scores in label order, for the metrics suite.
std::vector<std::vector<double>> to_scores(const std::vector<StateProbabilities>& preds) {
    std::vector<std::vector<double>> scores;
    scores.reserve(preds.size());
    for (const auto& p : preds) scores.push_back({p.p_htp, p.p_ltp, p.p_ntp});
    return scores;
}

struct LoadedData {
    std::vector<RawSession> sessions;
    WindowSet windows;
};

// Ingest + impute + normalize with checkpoint stats + window with checkpoint
// geometry; enforces the schema hash.
LoadedData load_for_checkpoint(const fs::path& data_path, const LoadedCheckpoint& ckpt) {
    if (ckpt.extras.schema_hash != FeatureSchema::standard().hash())
        throw SchemaError("checkpoint schema hash does not match this build's feature schema");
    LoadedData d;
    d.sessions = ingest_csv(data_path);
    if (d.sessions.empty()) throw UsageError("no sessions found under " + data_path.string());
    impute(d.sessions);
    if (ckpt.extras.normalization_json.empty())
        throw IoError("checkpoint carries no normalization stats");
    normalize(d.sessions, NormalizationStats::from_json(ckpt.extras.normalization_json));
    d.windows = window(d.sessions, ckpt.extras.window_length, ckpt.extras.window_stride);
    if (d.windows.size() == 0) throw UsageError("no windows could be formed from the data");
    return d;
}

// ---- subcommands -------------------------------------------------------------

int cmd_generate(const fs::path& out_dir, int rides_per_class, int duration, uint64_t seed,
                 double noise_scale, bool no_collisions, const std::string& config_path) {
    ManifestClock clock;
    GeneratorConfig cfg;
    cfg.rides_per_class = rides_per_class;
    cfg.duration = duration;
    cfg.seed = seed;
    cfg.noise_scale = noise_scale;
    cfg.attach_collisions = !no_collisions;
    if (!config_path.empty()) {
        const KeyValueConfig file = KeyValueConfig::load(config_path);
        cfg.rides_per_class =
            static_cast<int>(file.get_long("rides_per_class", cfg.rides_per_class));
        cfg.duration = static_cast<int>(file.get_long("duration", cfg.duration));
        cfg.seed = file.get_u64("seed", cfg.seed);
        cfg.noise_scale = file.get_double("noise_scale", cfg.noise_scale);
        cfg.mean_reversion = file.get_double("mean_reversion", cfg.mean_reversion);
        cfg.collision.bias = file.get_double("collision.bias", cfg.collision.bias);
        cfg.collision.tp_weight = file.get_double("collision.tp_weight", cfg.collision.tp_weight);
        cfg.collision.brake_weight =
            file.get_double("collision.brake_weight", cfg.collision.brake_weight);
        cfg.collision.speed_sd_weight =
            file.get_double("collision.speed_sd_weight", cfg.collision.speed_sd_weight);
        cfg.attach_collisions = file.get_bool("attach_collisions", cfg.attach_collisions);
        file.reject_unknown();
    }
    if (cfg.noise_scale < 0.0) throw ConfigError("noise scale must be non-negative");

    const auto sessions = generate_corpus(cfg);
    write_corpus(out_dir, sessions, cfg);
    const CorpusReport report = validate_corpus(sessions);
    std::cout << report_to_text(report);

    json config = {{"rides_per_class", cfg.rides_per_class},
                   {"duration", cfg.duration},
                   {"seed", cfg.seed},
                   {"noise_scale", cfg.noise_scale},
                   {"mean_reversion", cfg.mean_reversion},
                   {"attach_collisions", cfg.attach_collisions}};
    clock.write(out_dir, "generate", config, json::object(),
                {{"sessions", sessions.size()}, {"directory", out_dir.string()}});
    return 0;
}

int cmd_train(const fs::path& data_path, const fs::path& out_dir, const std::string& config_path,
              std::optional<uint64_t> seed_flag, std::optional<int> epochs_flag,
              std::optional<int> batch_flag, std::optional<double> lr_flag,
              std::optional<int> threads_flag, const std::string& variant_flag) {
    ManifestClock clock;
    TrainConfig cfg = config_path.empty() ? TrainConfig{}
                                          : train_config_from(KeyValueConfig::load(config_path));
    cfg.seed = seed_flag.value_or(env_seed_fallback(cfg.seed));
    if (epochs_flag) cfg.max_epochs = *epochs_flag;
    if (batch_flag) cfg.batch_size = *batch_flag;
    if (lr_flag) cfg.learning_rate = *lr_flag;
    if (threads_flag) cfg.threads = *threads_flag;
    if (!variant_flag.empty()) cfg.variant = variant_from_name(variant_flag);
    cfg.validate();

    auto sessions = ingest_csv(data_path);  // fails before any output exists
    if (sessions.empty()) throw UsageError("no sessions found under " + data_path.string());

    PreparedData data = prepare_data(std::move(sessions), cfg, cfg.seed);
    for (const auto& w : data.stats.warnings) std::cerr << "note: " << w << "\n";

    ModelConfig mc;
    mc.dropout = cfg.dropout;
    mc.variant = cfg.variant;
    const TrainResult result = train(cfg, mc, data.train, data.val);

    fs::create_directories(out_dir);
    CheckpointExtras extras;
    extras.schema_hash = FeatureSchema::standard().hash();
    extras.window_length = cfg.window_length;
    extras.window_stride = cfg.window_stride;
    extras.normalization_json = data.stats.to_json();
    const fs::path ckpt_path = out_dir / "checkpoint.mtps";
    save_checkpoint(ckpt_path, result.params, extras);
    write_text(out_dir / "training_log.csv", training_log_csv(result.log));

    const EvalStats test = evaluate(result.params, data.test, cfg.threads);
    std::cout << "best val loss " << result.best_val_loss << " (epoch " << result.best_epoch
              << "), test accuracy " << test.accuracy << " over " << data.test.size()
              << " windows\n";

    clock.write(out_dir, "train", train_config_json(cfg), {{"data", data_path.string()}},
                {{"checkpoint", ckpt_path.string()},
                 {"training_log", (out_dir / "training_log.csv").string()},
                 {"epochs_run", result.epochs_run},
                 {"best_epoch", result.best_epoch},
                 {"test_accuracy", test.accuracy}});
    return 0;
}

int cmd_eval(const fs::path& ckpt_path, const fs::path& data_path, const fs::path& report_dir,
             int threads) {
    ManifestClock clock;
    const LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
    LoadedData data = load_for_checkpoint(data_path, ckpt);

    const auto preds = predict_all(ckpt.params, data.windows, threads);
    std::vector<int> labels;
    for (const auto& l : data.windows.labels) labels.push_back(l.value);
    const MetricsReport report =
        evaluate_predictions(to_scores(preds), labels, 3, {"HTP", "LTP", "NTP"});

    fs::create_directories(report_dir);
    write_text(report_dir / "metrics_report.txt", report_to_text(report));
    write_text(report_dir / "metrics_report.csv", report_to_csv(report));
    write_text(report_dir / "confusion_matrix.csv",
               confusion_to_csv(report.cm, report.class_names));

    // ROC curves: sweep thresholds over each one-vs-rest score.
    const char* colors[] = {"crimson", "darkorange", "steelblue"};
    std::vector<Series> roc_series;
    for (int c = 0; c < 3; ++c) {
        Series s;
        s.label = report.class_names[static_cast<size_t>(c)];
        s.color = colors[c];
        for (int step = 0; step <= 200; ++step) {
            const double thr = 1.0 - step / 200.0;
            long tp = 0, fp = 0, pos = 0, neg = 0;
            for (size_t i = 0; i < labels.size(); ++i) {
                const bool is_pos = labels[i] == c;
                const double score = c == 0   ? preds[i].p_htp
                                     : c == 1 ? preds[i].p_ltp
                                              : preds[i].p_ntp;
                if (is_pos) ++pos;
                else ++neg;
                if (score >= thr) (is_pos ? tp : fp) += 1;
            }
            s.x.push_back(neg ? static_cast<double>(fp) / neg : 0.0);
            s.y.push_back(pos ? static_cast<double>(tp) / pos : 0.0);
        }
        roc_series.push_back(std::move(s));
    }
    write_text(report_dir / "roc.svg",
               svg_line_plot("One-vs-rest ROC", "false positive rate", "true positive rate",
                             roc_series, true));

    std::vector<Series> cal_series;
    for (int c = 0; c < 3; ++c) {
        Series s;
        s.label = report.class_names[static_cast<size_t>(c)];
        s.color = colors[c];
        for (const auto& bin : report.calibration.per_class[static_cast<size_t>(c)]) {
            s.x.push_back(bin.confidence);
            s.y.push_back(bin.accuracy);
        }
        cal_series.push_back(std::move(s));
    }
    write_text(report_dir / "calibration.svg",
               svg_line_plot("Calibration", "predicted probability", "observed frequency",
                             cal_series, true));

    std::cout << report_to_text(report);
    clock.write(report_dir, "eval", {{"threads", threads}},
                {{"checkpoint", ckpt_path.string()}, {"data", data_path.string()}},
                {{"report_dir", report_dir.string()}, {"accuracy", report.accuracy}});
    return 0;
}

int cmd_states(const fs::path& ckpt_path, const fs::path& data_path, const fs::path& out_dir,
               const std::string& rules_path, int smooth_k, int threads) {
    ManifestClock clock;
    const RuleSet rules = rules_path.empty() ? RuleSet::defaults() : load_rules(rules_path);
    rules.validate();
    const LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
    LoadedData data = load_for_checkpoint(data_path, ckpt);
    const auto preds = predict_all(ckpt.params, data.windows, threads);

    std::vector<RiderStateDecision> decisions;
    std::vector<int> raw_phases;
    for (const auto& p : preds) {
        decisions.push_back(classify_state(p, rules));
        raw_phases.push_back(decisions.back().phase);
    }
    // Smoothing is per ride: the persistence window restarts at ride bounds.
    std::vector<int> smoothed(raw_phases.size());
    size_t i = 0;
    while (i < raw_phases.size()) {
        size_t j = i;
        while (j < raw_phases.size() &&
               data.windows.ride_index[j] == data.windows.ride_index[i])
            ++j;
        StateSmoother sm(smooth_k);
        for (size_t k = i; k < j; ++k) smoothed[k] = sm.feed(raw_phases[k]);
        i = j;
    }

    std::ostringstream csv;
    csv.precision(17);
    csv << "window,ride_id,raw_phase,smoothed_phase,intervention,p_ntp,p_ltp,p_htp\n";
    std::vector<long> occupancy(7, 0);
    for (size_t k = 0; k < decisions.size(); ++k) {
        const auto& d = decisions[k];
        const auto& ride =
            data.sessions[static_cast<size_t>(data.windows.ride_index[k])].ride_id;
        csv << k << "," << ride << "," << d.phase << "," << smoothed[k] << ","
            << (d.intervention.empty() ? "none" : d.intervention) << "," << d.probabilities.p_ntp
            << "," << d.probabilities.p_ltp << "," << d.probabilities.p_htp << "\n";
        ++occupancy[static_cast<size_t>(smoothed[k])];
    }
    fs::create_directories(out_dir);
    write_text(out_dir / "decisions.csv", csv.str());

    std::ostringstream summary;
    summary << "phase occupancy over " << decisions.size() << " windows\n";
    const char* names[] = {"Indeterminate", "1 Calm",     "2 Transition", "3 Manageable",
                           "4 Elevated",    "5 Critical", "6 Recovery"};
    for (int phase = 0; phase <= 6; ++phase)
        summary << names[phase] << ": " << occupancy[static_cast<size_t>(phase)] << " ("
                << (decisions.empty()
                        ? 0.0
                        : 100.0 * occupancy[static_cast<size_t>(phase)] / decisions.size())
                << "%)\n";
    write_text(out_dir / "occupancy.txt", summary.str());
    std::cout << summary.str();

    clock.write(out_dir, "states",
                {{"rules", rules_path.empty() ? "<default>" : rules_path},
                 {"smooth_k", smooth_k},
                 {"threads", threads}},
                {{"checkpoint", ckpt_path.string()}, {"data", data_path.string()}},
                {{"decisions", (out_dir / "decisions.csv").string()}});
    return 0;
}

int cmd_augment(const fs::path& corpus_path, const std::string& ckpt_path,
                const fs::path& out_dir, const std::string& modes_csv, int seeds, int epochs,
                int threads, bool hard, const std::string& variant_flag) {
    ManifestClock clock;
    AugmentConfig cfg;
    cfg.modes.clear();
    std::stringstream ss(modes_csv);
    std::string mode;
    while (std::getline(ss, mode, ',')) cfg.modes.push_back(augment_mode_from_name(mode));
    if (cfg.modes.empty()) throw ConfigError("no augmentation modes requested");
    cfg.seeds.clear();
    for (int s = 1; s <= seeds; ++s) cfg.seeds.push_back(static_cast<uint64_t>(s));
    cfg.soft = !hard;
    cfg.downstream.max_epochs = epochs;
    cfg.downstream.threads = threads;
    if (!variant_flag.empty()) cfg.downstream.variant = variant_from_name(variant_flag);

    const bool wants_predicted = std::find(cfg.modes.begin(), cfg.modes.end(),
                                           AugmentMode::predicted) != cfg.modes.end();
    std::optional<LoadedCheckpoint> ckpt;
    std::optional<NormalizationStats> stats;
    if (wants_predicted) {
        if (ckpt_path.empty()) throw ConfigError("predicted mode requires --checkpoint");
        ckpt = load_checkpoint(ckpt_path);
        if (ckpt->extras.schema_hash != FeatureSchema::standard().hash())
            throw SchemaError("checkpoint schema hash does not match this build");
        if (ckpt->extras.normalization_json.empty())
            throw IoError("checkpoint carries no normalization stats");
        stats = NormalizationStats::from_json(ckpt->extras.normalization_json);
        cfg.downstream.window_length = ckpt->extras.window_length;
        cfg.downstream.window_stride = ckpt->extras.window_stride;
    }

    const auto corpus = ingest_csv(corpus_path);
    if (corpus.empty()) throw UsageError("no sessions found under " + corpus_path.string());

    const AugmentResult result =
        run_experiment(corpus, ckpt ? &ckpt->params : nullptr, stats ? &*stats : nullptr, cfg);

    fs::create_directories(out_dir);
    write_text(out_dir / "augment_result.csv", augment_result_csv(result));
    write_text(out_dir / "summary.txt", augment_result_text(result));
    std::cout << augment_result_text(result);

    clock.write(out_dir, "augment",
                {{"modes", modes_csv},
                 {"seeds", seeds},
                 {"epochs", epochs},
                 {"soft", cfg.soft},
                 {"threads", threads}},
                {{"corpus", corpus_path.string()}, {"checkpoint", ckpt_path}},
                {{"result", (out_dir / "augment_result.csv").string()}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-pressure state classification for powered two-wheeler telemetry"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    auto* generate = app.add_subcommand("generate", "Generate a synthetic labeled ride corpus");
    int rides_per_class = 34, duration = 1000;
    uint64_t gen_seed = 7;
    double noise_scale = 1.0;
    bool no_collisions = false;
    std::string gen_config, gen_out;
    generate->add_option("--rides-per-class", rides_per_class, "Rides per TP class");
    generate->add_option("--duration", duration, "Samples per ride at 100 Hz");
    generate->add_option("--seed", gen_seed, "Generator seed");
    generate->add_option("--noise-scale", noise_scale, "Stochasticity multiplier");
    generate->add_flag("--no-collisions", no_collisions, "Skip collision labels");
    generate->add_option("--config", gen_config, "Profile/collision overrides (key=value)");
    generate->add_option("--out", gen_out, "Output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "Train the classifier on a corpus");
    std::string train_data, train_out, train_config_path, train_variant;
    std::optional<uint64_t> train_seed;
    std::optional<int> train_epochs, train_batch, train_threads;
    std::optional<double> train_lr;
    train_cmd->add_option("--data", train_data, "Corpus CSV file or directory")->required();
    train_cmd->add_option("--out", train_out, "Output directory")->required();
    train_cmd->add_option("--config", train_config_path, "Training config (key=value)");
    train_cmd->add_option("--seed", train_seed, "Run seed (overrides config)");
    train_cmd->add_option("--epochs", train_epochs, "Max epochs override");
    train_cmd->add_option("--batch-size", train_batch, "Batch size override");
    train_cmd->add_option("--lr", train_lr, "Learning rate override");
    train_cmd->add_option("--threads", train_threads, "Worker thread cap");
    train_cmd->add_option("--variant", train_variant,
                          "full|no_se|no_attention|no_residual_norm|conv_only");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on labeled data");
    std::string eval_ckpt, eval_data, eval_report;
    int eval_threads = 0;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
    eval_cmd->add_option("--data", eval_data, "Corpus CSV file or directory")->required();
    eval_cmd->add_option("--report-dir", eval_report, "Report directory")->required();
    eval_cmd->add_option("--threads", eval_threads, "Worker thread cap");

    auto* states_cmd = app.add_subcommand("states", "Map predictions to rider-state phases");
    std::string states_ckpt, states_data, states_out, states_rules;
    int smooth_k = 1, states_threads = 0;
    states_cmd->add_option("--checkpoint", states_ckpt, "Checkpoint path")->required();
    states_cmd->add_option("--data", states_data, "Corpus CSV file or directory")->required();
    states_cmd->add_option("--out", states_out, "Output directory")->required();
    states_cmd->add_option("--rules", states_rules, "Threshold rules file (default: built-in)");
    states_cmd->add_option("--smooth-k", smooth_k, "Persistence window (1 = off)");
    states_cmd->add_option("--threads", states_threads, "Worker thread cap");

    auto* augment_cmd =
        app.add_subcommand("augment", "Collision-prediction experiment with TP features");
    std::string aug_corpus, aug_ckpt, aug_out, aug_modes = "baseline,predicted,oracle";
    std::string aug_variant;
    int aug_seeds = 3, aug_epochs = 10, aug_threads = 0;
    bool aug_hard = false;
    augment_cmd->add_option("--corpus", aug_corpus, "Collision-labeled corpus")->required();
    augment_cmd->add_option("--checkpoint", aug_ckpt, "Upstream checkpoint (predicted mode)");
    augment_cmd->add_option("--out", aug_out, "Output directory")->required();
    augment_cmd->add_option("--modes", aug_modes, "Comma list: baseline,predicted,oracle");
    augment_cmd->add_option("--seeds", aug_seeds, "Number of downstream seeds");
    augment_cmd->add_option("--epochs", aug_epochs, "Downstream training epochs");
    augment_cmd->add_option("--threads", aug_threads, "Worker thread cap");
    augment_cmd->add_flag("--hard", aug_hard, "Append one-hot predictions instead of soft");
    augment_cmd->add_option("--variant", aug_variant, "Downstream trunk variant");

    try {
        app.parse(argc, argv);
        if (*generate)
            return cmd_generate(gen_out, rides_per_class, duration,
                                generate->count("--seed") ? gen_seed : env_seed_fallback(gen_seed),
                                noise_scale, no_collisions, gen_config);
        if (*train_cmd)
            return cmd_train(train_data, train_out, train_config_path, train_seed, train_epochs,
                             train_batch, train_lr, train_threads, train_variant);
        if (*eval_cmd) return cmd_eval(eval_ckpt, eval_data, eval_report, eval_threads);
        if (*states_cmd)
            return cmd_states(states_ckpt, states_data, states_out, states_rules, smooth_k,
                              states_threads);
        if (*augment_cmd)
            return cmd_augment(aug_corpus, aug_ckpt, aug_out, aug_modes, aug_seeds, aug_epochs,
                               aug_threads, aug_hard, aug_variant);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
