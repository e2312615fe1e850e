#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtps/errors.hpp"
#include "mtps/model.hpp"

namespace mtps {

enum class FeatureCategory {
    vehicle_controls,
    vehicle_performance,
    lighting_indicators,
    behavioral_violations,
    traffic_rule_violations,
    time_context,
    spatial_position,
    motion_proximity,
    brake_force,
};

enum class ValueKind { continuous, count, binary, categorical };

struct FeatureDescriptor {
    std::string name;
    FeatureCategory category;
    ValueKind kind;
    std::string units;
};

// The fixed 63-feature telemetry schema. Column order is part of every file
// format and of the checkpoint hash.
class FeatureSchema {
public:
    static const FeatureSchema& standard();

    int count() const { return static_cast<int>(features_.size()); }
    const std::vector<FeatureDescriptor>& features() const { return features_; }
    const FeatureDescriptor& at(int i) const { return features_[static_cast<size_t>(i)]; }
    int index_of(const std::string& name) const;  // -1 when absent
    uint64_t hash() const { return hash_; }

private:
    FeatureSchema();
    std::vector<FeatureDescriptor> features_;
    uint64_t hash_ = 0;
};

// One recorded ride: row-major rows×63 plus labels and identifiers.
struct RawSession {
    std::string ride_id;
    std::string participant_id;
    int tp_label = 0;  // ClassLabel encoding
    std::optional<int> collision;
    int rows = 0;
    std::vector<double> values;

    double at(int row, int feature) const {
        return values[static_cast<size_t>(row) * 63 + static_cast<size_t>(feature)];
    }
    double& at(int row, int feature) {
        return values[static_cast<size_t>(row) * 63 + static_cast<size_t>(feature)];
    }
};

// CSV columns: 63 schema names + tp_label + ride_id + participant_id
// [+ collision]; one row per 100 Hz sample.
std::vector<RawSession> ingest_csv(const std::filesystem::path& path);
void write_session_csv(const std::filesystem::path& path, const RawSession& session);

// Forward fill, then backward fill, then mean; categorical/binary/count gaps
// take the column mode. Output is NaN-free.
void impute(std::vector<RawSession>& sessions);

struct FeatureStats {
    enum class Kind { zscore, minmax, constant };
    Kind kind = Kind::zscore;
    double mu = 0.0, sigma = 1.0;  // zscore
    double lo = 0.0, hi = 1.0;     // minmax
};

// Per-feature scaling parameters; must be computed from the training split only.
struct NormalizationStats {
    std::vector<FeatureStats> per_feature;
    std::vector<std::string> warnings;  // constant features

    static NormalizationStats compute(std::span<const RawSession> train_sessions);
    static NormalizationStats identity();
    std::string to_json() const;
    static NormalizationStats from_json(const std::string& text);
};

// Continuous features are z-scored; counters, flags and categorical codes are
// min-max scaled. Constant features normalize to 0 (flagged).
void normalize(std::vector<RawSession>& sessions, const NormalizationStats& stats);

// Overlapping fixed-length windows; each inherits its ride's labels. Rides
// shorter than the window are skipped (with a warning entry).
struct WindowSet {
    int window_length = 0;
    std::vector<std::vector<double>> values;  // each T×63 row-major
    std::vector<ClassLabel> labels;
    std::vector<int> ride_index;
    std::vector<std::optional<int>> collision;
    std::vector<std::string> warnings;

    size_t size() const { return values.size(); }
};

WindowSet window(std::span<const RawSession> sessions, int length, int stride);

uint64_t fnv1a64(std::string_view text);

}  // namespace mtps
