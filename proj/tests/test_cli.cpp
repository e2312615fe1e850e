#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mtps/data.hpp"

namespace fs = std::filesystem;

namespace {

std::string binary() {
    const char* env = std::getenv("MOTOTP_BIN");
    REQUIRE_MESSAGE(env != nullptr, "MOTOTP_BIN must point at the CLI binary");
    return env;
}

int run(const std::string& args) {
    const std::string cmd = binary() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
};

// One small corpus + checkpoint shared by the downstream command tests.
struct Fixture {
    TempDir dir{"mtps_cli_test"};
    fs::path corpus, model_dir, checkpoint;

    Fixture() {
        corpus = dir.path / "corpus";
        model_dir = dir.path / "model";
        checkpoint = model_dir / "checkpoint.mtps";
        REQUIRE(run("generate --rides-per-class 6 --duration 300 --seed 5 --out " +
                    corpus.string()) == 0);
        REQUIRE(run("train --data " + corpus.string() + " --out " + model_dir.string() +
                    " --seed 3 --epochs 2 --variant conv_only --threads 2"
                    " --config " + write_train_config()) == 0);
    }

    std::string write_train_config() {
        const fs::path p = dir.path / "train.conf";
        std::ofstream f(p);
        f << "window_length = 32\nwindow_stride = 32\nbatch_size = 16\n";
        return p.string();
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

}  // namespace

TEST_CASE("generate writes one csv per ride plus manifest and report") {
    TempDir dir("mtps_cli_generate");
    const fs::path out = dir.path / "corpus";
    REQUIRE(run("generate --rides-per-class 10 --duration 1000 --seed 2 --out " + out.string()) ==
            0);
    int csvs = 0;
    for (const auto& e : fs::directory_iterator(out))
        if (e.path().extension() == ".csv") ++csvs;
    CHECK(csvs == 30);
    CHECK(fs::exists(out / "generation_manifest.json"));
    CHECK(fs::exists(out / "validation_report.txt"));
    CHECK(fs::exists(out / "manifest.json"));
}

TEST_CASE("generate is deterministic per seed") {
    TempDir dir("mtps_cli_determinism");
    const fs::path a = dir.path / "a", b = dir.path / "b";
    REQUIRE(run("generate --rides-per-class 2 --duration 200 --seed 9 --out " + a.string()) == 0);
    REQUIRE(run("generate --rides-per-class 2 --duration 200 --seed 9 --out " + b.string()) == 0);
    for (const auto& e : fs::directory_iterator(a)) {
        if (e.path().extension() != ".csv") continue;
        CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
    }
}

TEST_CASE("generate rejects invalid profile overrides with exit 2") {
    TempDir dir("mtps_cli_badgen");
    const fs::path cfg = dir.path / "bad.conf";
    std::ofstream(cfg) << "rides_per_klass = 4\n";  // unknown key
    CHECK(run("generate --config " + cfg.string() + " --out " + (dir.path / "x").string()) == 2);
    CHECK(run("generate --noise-scale -1 --out " + (dir.path / "y").string()) == 2);
}

TEST_CASE("train produces a checkpoint, log, and manifest") {
    Fixture& f = fixture();
    CHECK(fs::exists(f.checkpoint));
    const std::string log = slurp(f.model_dir / "training_log.csv");
    CHECK(log.find("epoch,train_loss,val_loss,val_acc,lr") == 0);
    CHECK(fs::exists(f.model_dir / "manifest.json"));
}

TEST_CASE("train with a missing data path exits 2 and writes nothing") {
    TempDir dir("mtps_cli_missing");
    const fs::path out = dir.path / "model";
    CHECK(run("train --data /nonexistent/corpus --out " + out.string()) == 2);
    CHECK_FALSE(fs::exists(out));
}

TEST_CASE("overfit on a handful of samples via flag overrides") {
    Fixture& f = fixture();
    TempDir dir("mtps_cli_overfit");
    // Tiny corpus, batch size 1: a handful of windows must be memorized.
    const fs::path small = dir.path / "small";
    REQUIRE(run("generate --rides-per-class 3 --duration 150 --seed 8 --out " + small.string()) ==
            0);
    const fs::path cfg = dir.path / "overfit.conf";
    std::ofstream(cfg) << "window_length = 32\nwindow_stride = 64\nbatch_size = 1\n"
                       << "dropout = 0\nmax_epochs = 150\nearly_stop_patience = 150\n"
                       << "lr_plateau_patience = 150\nvariant = conv_only\n"
                       << "split_fraction = 0.67\nval_fraction = 0.5\n";
    const fs::path out = dir.path / "model";
    REQUIRE(run("train --data " + small.string() + " --out " + out.string() + " --seed 4" +
                " --config " + cfg.string() + " --threads 2") == 0);
    const std::string log = slurp(out / "training_log.csv");
    // Parse the last train_loss column.
    std::stringstream ss(log);
    std::string line, last;
    std::getline(ss, line);  // header
    while (std::getline(ss, line))
        if (!line.empty()) last = line;
    const size_t c1 = last.find(',');
    const size_t c2 = last.find(',', c1 + 1);
    const double final_loss = std::stod(last.substr(c1 + 1, c2 - c1 - 1));
    CHECK(final_loss < 0.01);
}

TEST_CASE("eval emits reports whose intervals contain their point estimates") {
    Fixture& f = fixture();
    TempDir dir("mtps_cli_eval");
    const fs::path report = dir.path / "report";
    REQUIRE(run("eval --checkpoint " + f.checkpoint.string() + " --data " + f.corpus.string() +
                " --report-dir " + report.string() + " --threads 2") == 0);
    for (const char* name :
         {"metrics_report.txt", "metrics_report.csv", "confusion_matrix.csv", "roc.svg",
          "calibration.svg", "manifest.json"})
        CHECK(fs::exists(report / name));

    // Each per-class row carries precision/recall/f1 with CI bounds around the point.
    std::stringstream csv(slurp(report / "metrics_report.csv"));
    std::string line;
    std::getline(csv, line);  // header
    int ci_rows = 0;
    while (std::getline(csv, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() == 5 && !cells[3].empty() && cells[2] != "undefined") {
            const double value = std::stod(cells[2]);
            const double lo = std::stod(cells[3]);
            const double hi = std::stod(cells[4]);
            CHECK(lo <= value + 1e-12);
            CHECK(hi >= value - 1e-12);
            ++ci_rows;
        }
    }
    CHECK(ci_rows >= 9);  // 3 classes × precision/recall/f1 (+ accuracy)

    // Determinism across two runs of the same inputs.
    const fs::path report2 = dir.path / "report2";
    REQUIRE(run("eval --checkpoint " + f.checkpoint.string() + " --data " + f.corpus.string() +
                " --report-dir " + report2.string() + " --threads 2") == 0);
    CHECK(slurp(report / "metrics_report.csv") == slurp(report2 / "metrics_report.csv"));
}

TEST_CASE("eval with a schema-mismatched checkpoint exits 2") {
    Fixture& f = fixture();
    TempDir dir("mtps_cli_badhash");
    // Corrupt the stored schema hash.
    const fs::path tampered = dir.path / "tampered.mtps";
    std::string raw = slurp(f.checkpoint);
    const std::string needle = "\"schema_hash\":";
    const size_t pos = raw.find(needle);
    REQUIRE(pos != std::string::npos);
    raw[pos + needle.size() + 1] = raw[pos + needle.size() + 1] == '1' ? '2' : '1';
    std::ofstream(tampered, std::ios::binary) << raw;
    CHECK(run("eval --checkpoint " + tampered.string() + " --data " + f.corpus.string() +
              " --report-dir " + (dir.path / "r").string()) == 2);
}

TEST_CASE("states respects smoothing flags and validates rules") {
    Fixture& f = fixture();
    TempDir dir("mtps_cli_states");
    const fs::path raw_out = dir.path / "raw";
    REQUIRE(run("states --checkpoint " + f.checkpoint.string() + " --data " + f.corpus.string() +
                " --out " + raw_out.string() + " --smooth-k 1 --threads 2") == 0);
    CHECK(fs::exists(raw_out / "decisions.csv"));
    CHECK(fs::exists(raw_out / "occupancy.txt"));

    // smooth-k 1 output equals raw decisions column-for-column.
    std::stringstream csv(slurp(raw_out / "decisions.csv"));
    std::string line;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        REQUIRE(cells.size() >= 4);
        CHECK(cells[2] == cells[3]);
    }

    const fs::path bad_rules = dir.path / "bad.rules";
    std::ofstream(bad_rules) << "priority = 1\nphase1.name = X\nphase1.when = htp>=1.2\n"
                             << "phase1.tag = t\n";
    CHECK(run("states --checkpoint " + f.checkpoint.string() + " --data " + f.corpus.string() +
              " --out " + (dir.path / "bad").string() + " --rules " + bad_rules.string()) == 2);
}

TEST_CASE("augment baseline-only run reports no eta") {
    Fixture& f = fixture();
    TempDir dir("mtps_cli_augment");
    const fs::path out = dir.path / "aug";
    REQUIRE(run("augment --corpus " + f.corpus.string() + " --out " + out.string() +
                " --modes baseline --seeds 1 --epochs 1 --threads 2 --variant conv_only") == 0);
    const std::string csv = slurp(out / "augment_result.csv");
    CHECK(csv.find("baseline") != std::string::npos);
    CHECK(csv.find("\npredicted,") == std::string::npos);  // no predicted accuracy row
    CHECK(csv.find("eta_percent,undefined") != std::string::npos);

    // predicted without checkpoint is a configuration error
    CHECK(run("augment --corpus " + f.corpus.string() + " --out " + (dir.path / "x").string() +
              " --modes predicted --seeds 1") == 2);
}

TEST_CASE("unknown flags exit with code 2") {
    CHECK(run("generate --definitely-not-a-flag 1 --out /tmp/mtps_never") == 2);
    CHECK(run("") == 2);
}
