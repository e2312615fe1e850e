#include "mtps/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace mtps {

uint64_t fnv1a64(std::string_view text) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

using FC = FeatureCategory;
using VK = ValueKind;

std::vector<FeatureDescriptor> build_schema() {
    std::vector<FeatureDescriptor> f;
    auto add = [&f](const char* name, FC cat, VK kind, const char* units = "") {
        f.push_back({name, cat, kind, units});
    };
    // Vehicle controls (10)
    add("ignition", FC::vehicle_controls, VK::binary);
    add("engine", FC::vehicle_controls, VK::binary);
    add("accelerator", FC::vehicle_controls, VK::continuous, "fraction");
    add("brake", FC::vehicle_controls, VK::continuous, "fraction");
    add("clutch", FC::vehicle_controls, VK::continuous, "fraction");
    add("handbrake", FC::vehicle_controls, VK::binary);
    add("steering", FC::vehicle_controls, VK::continuous, "deg");
    add("gear", FC::vehicle_controls, VK::categorical);
    add("headlight", FC::vehicle_controls, VK::binary);
    add("horn_violation", FC::vehicle_controls, VK::count);
    // Vehicle performance (4)
    add("speed", FC::vehicle_performance, VK::continuous, "km/h");
    add("rpm", FC::vehicle_performance, VK::continuous, "rpm");
    add("fuel_economy", FC::vehicle_performance, VK::continuous, "km/l");
    add("distance_travelled", FC::vehicle_performance, VK::continuous, "m");
    // Lighting and indicators (5)
    add("indicator", FC::lighting_indicators, VK::binary);
    add("indicated_before_moving_off", FC::lighting_indicators, VK::count);
    add("indicated_while_turning_at_junction", FC::lighting_indicators, VK::count);
    add("indicated_while_changing_lanes", FC::lighting_indicators, VK::count);
    add("failed_to_use_headlights", FC::lighting_indicators, VK::count);
    // Behavioral violations (15)
    add("over_speeding", FC::behavioral_violations, VK::count);
    add("incorrect_speed_at_intersections", FC::behavioral_violations, VK::count);
    add("incorrect_speed_on_speed_breakers", FC::behavioral_violations, VK::count);
    add("improper_gap_maintenance", FC::behavioral_violations, VK::count);
    add("dangerous_overtaking", FC::behavioral_violations, VK::count);
    add("turned_without_indication", FC::behavioral_violations, VK::count);
    add("incorrect_lane_driving", FC::behavioral_violations, VK::count);
    add("wrong_side_driving", FC::behavioral_violations, VK::count);
    add("driving_with_handbrake_applied", FC::behavioral_violations, VK::count);
    add("clutch_riding", FC::behavioral_violations, VK::count);
    add("incorrect_gear_change_sequence", FC::behavioral_violations, VK::count);
    add("improper_clutch_release", FC::behavioral_violations, VK::count);
    add("gear_shift_without_clutch", FC::behavioral_violations, VK::count);
    add("correct_gear_before_moving_off", FC::behavioral_violations, VK::binary);
    add("smooth_releasing_of_clutch", FC::behavioral_violations, VK::binary);
    // Traffic rule violations (7)
    add("crossed_white_line", FC::traffic_rule_violations, VK::count);
    add("crossed_yellow_line", FC::traffic_rule_violations, VK::count);
    add("crossed_stop_line", FC::traffic_rule_violations, VK::count);
    add("signal_jumping", FC::traffic_rule_violations, VK::count);
    add("no_entry_violation", FC::traffic_rule_violations, VK::count);
    add("u_turn_violation", FC::traffic_rule_violations, VK::count);
    add("no_parking_violation", FC::traffic_rule_violations, VK::count);
    // Time context (1)
    add("time_stamp", FC::time_context, VK::continuous, "s");
    // Spatial position (9)
    add("position_x", FC::spatial_position, VK::continuous, "m");
    add("position_y", FC::spatial_position, VK::continuous, "m");
    add("position_z", FC::spatial_position, VK::continuous, "m");
    add("rotation_x", FC::spatial_position, VK::continuous, "deg");
    add("rotation_y", FC::spatial_position, VK::continuous, "deg");
    add("rotation_z", FC::spatial_position, VK::continuous, "deg");
    add("lane_no", FC::spatial_position, VK::categorical);
    add("left_lane_offset", FC::spatial_position, VK::continuous, "m");
    add("right_lane_offset", FC::spatial_position, VK::continuous, "m");
    // Motion and proximity (9)
    add("lateral_velocity", FC::motion_proximity, VK::continuous, "m/s");
    add("longitudinal_velocity", FC::motion_proximity, VK::continuous, "m/s");
    add("headway_distance", FC::motion_proximity, VK::continuous, "m");
    add("headway_time", FC::motion_proximity, VK::continuous, "s");
    add("tailway_distance", FC::motion_proximity, VK::continuous, "m");
    add("tailway_time", FC::motion_proximity, VK::continuous, "s");
    add("leftway_distance", FC::motion_proximity, VK::continuous, "m");
    add("rightway_distance", FC::motion_proximity, VK::continuous, "m");
    add("steering_angle", FC::motion_proximity, VK::continuous, "deg");
    // Brake force (3)
    add("brake_test_done", FC::brake_force, VK::binary);
    add("front_tire_brake_force", FC::brake_force, VK::continuous, "sensor");
    add("rear_tire_brake_force", FC::brake_force, VK::continuous, "sensor");
    return f;
}

}  // namespace

FeatureSchema::FeatureSchema() : features_(build_schema()) {
    std::string acc;
    for (const auto& fd : features_) {
        acc += fd.name;
        acc += '|';
        acc += std::to_string(static_cast<int>(fd.category));
        acc += '|';
        acc += std::to_string(static_cast<int>(fd.kind));
        acc += ';';
    }
    hash_ = fnv1a64(acc);
}

const FeatureSchema& FeatureSchema::standard() {
    static FeatureSchema schema;
    return schema;
}

int FeatureSchema::index_of(const std::string& name) const {
    for (size_t i = 0; i < features_.size(); ++i)
        if (features_[i].name == name) return static_cast<int>(i);
    return -1;
}

// ---- CSV ---------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_cell(const std::string& cell, const FeatureDescriptor& fd, size_t line_no) {
    if (cell.empty() || cell == "NA" || cell == "nan" || cell == "NaN")
        return std::numeric_limits<double>::quiet_NaN();
    if (fd.name == "gear" && (cell == "N" || cell == "n")) return 0.0;  // neutral
    double v = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end)
        throw SchemaError("line " + std::to_string(line_no) + ": cannot parse '" + cell +
                          "' for column '" + fd.name + "'");
    return v;
}

std::vector<RawSession> ingest_one_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    const auto& schema = FeatureSchema::standard();

    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty file (no header): " + path.string());
    const auto header = split_csv_line(line);

    std::vector<int> feature_col(header.size(), -1);
    int col_tp = -1, col_ride = -1, col_participant = -1, col_collision = -1;
    std::vector<std::string> unknown;
    for (size_t c = 0; c < header.size(); ++c) {
        const std::string& name = header[c];
        if (name == "tp_label") col_tp = static_cast<int>(c);
        else if (name == "ride_id") col_ride = static_cast<int>(c);
        else if (name == "participant_id") col_participant = static_cast<int>(c);
        else if (name == "collision") col_collision = static_cast<int>(c);
        else {
            const int fi = schema.index_of(name);
            if (fi < 0) unknown.push_back(name);
            feature_col[c] = fi;
        }
    }
    if (!unknown.empty()) {
        std::string msg = "unknown columns in " + path.string() + ":";
        for (const auto& u : unknown) msg += " '" + u + "'";
        throw SchemaError(msg);
    }
    std::vector<bool> present(static_cast<size_t>(schema.count()), false);
    for (int fi : feature_col)
        if (fi >= 0) present[static_cast<size_t>(fi)] = true;
    for (int i = 0; i < schema.count(); ++i)
        if (!present[static_cast<size_t>(i)])
            throw SchemaError("missing column '" + schema.at(i).name + "' in " + path.string());
    if (col_tp < 0 || col_ride < 0 || col_participant < 0)
        throw SchemaError("missing tp_label/ride_id/participant_id columns in " + path.string());

    std::map<std::string, RawSession> by_ride;
    std::vector<std::string> ride_order;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw SchemaError("line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " cells, got " +
                              std::to_string(cells.size()));
        const std::string& ride = cells[static_cast<size_t>(col_ride)];
        auto [it, inserted] = by_ride.try_emplace(ride);
        RawSession& s = it->second;
        if (inserted) {
            s.ride_id = ride;
            s.participant_id = cells[static_cast<size_t>(col_participant)];
            s.tp_label = static_cast<int>(
                parse_cell(cells[static_cast<size_t>(col_tp)], {"tp_label", {}, {}, ""}, line_no));
            if (s.tp_label < 0 || s.tp_label > 2)
                throw SchemaError("line " + std::to_string(line_no) + ": tp_label must be 0/1/2");
            ride_order.push_back(ride);
        }
        if (col_collision >= 0) {
            const std::string& cc = cells[static_cast<size_t>(col_collision)];
            if (!cc.empty())
                s.collision = static_cast<int>(parse_cell(cc, {"collision", {}, {}, ""}, line_no));
        }
        std::vector<double> row(static_cast<size_t>(schema.count()), 0.0);
        for (size_t c = 0; c < cells.size(); ++c) {
            const int fi = feature_col[c];
            if (fi >= 0) row[static_cast<size_t>(fi)] = parse_cell(cells[c], schema.at(fi), line_no);
        }
        s.values.insert(s.values.end(), row.begin(), row.end());
        ++s.rows;
    }
    std::vector<RawSession> out;
    out.reserve(ride_order.size());
    for (const auto& ride : ride_order) out.push_back(std::move(by_ride[ride]));
    return out;
}

}  // namespace

std::vector<RawSession> ingest_csv(const std::filesystem::path& path) {
    if (std::filesystem::is_directory(path)) {
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(path))
            if (e.path().extension() == ".csv") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        std::vector<RawSession> all;
        for (const auto& f : files) {
            auto part = ingest_one_file(f);
            all.insert(all.end(), std::make_move_iterator(part.begin()),
                       std::make_move_iterator(part.end()));
        }
        return all;
    }
    return ingest_one_file(path);
}

void write_session_csv(const std::filesystem::path& path, const RawSession& session) {
    const auto& schema = FeatureSchema::standard();
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (int i = 0; i < schema.count(); ++i) out << schema.at(i).name << ",";
    out << "tp_label,ride_id,participant_id";
    if (session.collision) out << ",collision";
    out << "\n";
    std::ostringstream row;
    row.precision(17);
    for (int r = 0; r < session.rows; ++r) {
        row.str("");
        for (int i = 0; i < schema.count(); ++i) row << session.at(r, i) << ",";
        row << session.tp_label << "," << session.ride_id << "," << session.participant_id;
        if (session.collision) row << "," << *session.collision;
        out << row.str() << "\n";
    }
    if (!out) throw IoError("short write on " + path.string());
}

// ---- imputation --------------------------------------------------------------

void impute(std::vector<RawSession>& sessions) {
    const auto& schema = FeatureSchema::standard();
    for (auto& s : sessions) {
        for (int f = 0; f < schema.count(); ++f) {
            bool all_missing = true;
            for (int r = 0; r < s.rows; ++r)
                if (!std::isnan(s.at(r, f))) {
                    all_missing = false;
                    break;
                }
            if (all_missing && s.rows > 0)
                throw SchemaError("feature '" + schema.at(f).name + "' entirely missing in ride " +
                                  s.ride_id);

            if (schema.at(f).kind == ValueKind::continuous) {
                // Forward fill, backward fill for a missing head, then mean
                // for anything still open.
                double last = std::numeric_limits<double>::quiet_NaN();
                for (int r = 0; r < s.rows; ++r) {
                    double& v = s.at(r, f);
                    if (std::isnan(v)) {
                        if (!std::isnan(last)) v = last;
                    } else {
                        last = v;
                    }
                }
                double next = std::numeric_limits<double>::quiet_NaN();
                double sum = 0.0;
                int n = 0;
                for (int r = s.rows - 1; r >= 0; --r) {
                    double& v = s.at(r, f);
                    if (std::isnan(v)) {
                        if (!std::isnan(next)) v = next;
                    } else {
                        next = v;
                        sum += v;
                        ++n;
                    }
                }
                const double mean = sum / std::max(1, n);
                for (int r = 0; r < s.rows; ++r)
                    if (std::isnan(s.at(r, f))) s.at(r, f) = mean;
            } else {
                // Categorical, count and binary gaps take the column mode.
                std::map<double, int> freq;
                for (int r = 0; r < s.rows; ++r)
                    if (!std::isnan(s.at(r, f))) ++freq[s.at(r, f)];
                double mode = freq.begin()->first;
                int best = 0;
                for (auto& [v, count] : freq)
                    if (count > best) {
                        best = count;
                        mode = v;
                    }
                for (int r = 0; r < s.rows; ++r)
                    if (std::isnan(s.at(r, f))) s.at(r, f) = mode;
            }
        }
    }
}

// ---- normalization -------------------------------------------------------------

NormalizationStats NormalizationStats::compute(std::span<const RawSession> train_sessions) {
    const auto& schema = FeatureSchema::standard();
    NormalizationStats stats;
    stats.per_feature.resize(static_cast<size_t>(schema.count()));
    long total_rows = 0;
    for (const auto& s : train_sessions) total_rows += s.rows;
    if (total_rows == 0) throw UsageError("normalization stats over an empty training split");

    for (int f = 0; f < schema.count(); ++f) {
        double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& s : train_sessions)
            for (int r = 0; r < s.rows; ++r) {
                const double v = s.at(r, f);
                sum += v;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        const double mu = sum / static_cast<double>(total_rows);
        double ss = 0.0;
        for (const auto& s : train_sessions)
            for (int r = 0; r < s.rows; ++r) {
                const double d = s.at(r, f) - mu;
                ss += d * d;
            }
        const double sigma = std::sqrt(ss / static_cast<double>(total_rows));

        FeatureStats& fs = stats.per_feature[static_cast<size_t>(f)];
        if (hi == lo) {
            fs.kind = FeatureStats::Kind::constant;
            fs.mu = mu;
            stats.warnings.push_back("feature '" + schema.at(f).name +
                                     "' is constant on the training split; normalized to 0");
            continue;
        }
        if (schema.at(f).kind == ValueKind::continuous) {
            fs.kind = FeatureStats::Kind::zscore;
            fs.mu = mu;
            fs.sigma = sigma > 0.0 ? sigma : 1.0;
        } else {
            fs.kind = FeatureStats::Kind::minmax;
            fs.lo = lo;
            fs.hi = hi;
        }
    }
    return stats;
}

NormalizationStats NormalizationStats::identity() {
    NormalizationStats stats;
    stats.per_feature.resize(static_cast<size_t>(FeatureSchema::standard().count()));
    for (auto& fs : stats.per_feature) {
        fs.kind = FeatureStats::Kind::zscore;
        fs.mu = 0.0;
        fs.sigma = 1.0;
    }
    return stats;
}

std::string NormalizationStats::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& fs : per_feature) {
        nlohmann::json j;
        j["kind"] = fs.kind == FeatureStats::Kind::zscore ? "zscore"
                    : fs.kind == FeatureStats::Kind::minmax ? "minmax"
                                                            : "constant";
        j["mu"] = fs.mu;
        j["sigma"] = fs.sigma;
        j["lo"] = fs.lo;
        j["hi"] = fs.hi;
        arr.push_back(j);
    }
    return arr.dump();
}

NormalizationStats NormalizationStats::from_json(const std::string& text) {
    nlohmann::json arr = nlohmann::json::parse(text);
    NormalizationStats stats;
    for (const auto& j : arr) {
        FeatureStats fs;
        const std::string kind = j.at("kind").get<std::string>();
        fs.kind = kind == "zscore" ? FeatureStats::Kind::zscore
                  : kind == "minmax" ? FeatureStats::Kind::minmax
                                     : FeatureStats::Kind::constant;
        fs.mu = j.at("mu").get<double>();
        fs.sigma = j.at("sigma").get<double>();
        fs.lo = j.at("lo").get<double>();
        fs.hi = j.at("hi").get<double>();
        stats.per_feature.push_back(fs);
    }
    return stats;
}

void normalize(std::vector<RawSession>& sessions, const NormalizationStats& stats) {
    const int count = FeatureSchema::standard().count();
    if (stats.per_feature.size() != static_cast<size_t>(count))
        throw UsageError("normalization stats cover " + std::to_string(stats.per_feature.size()) +
                         " features, schema has " + std::to_string(count));
    for (auto& s : sessions) {
        for (int f = 0; f < count; ++f) {
            const FeatureStats& fs = stats.per_feature[static_cast<size_t>(f)];
            for (int r = 0; r < s.rows; ++r) {
                double& v = s.at(r, f);
                switch (fs.kind) {
                    case FeatureStats::Kind::zscore: v = (v - fs.mu) / fs.sigma; break;
                    case FeatureStats::Kind::minmax: v = (v - fs.lo) / (fs.hi - fs.lo); break;
                    case FeatureStats::Kind::constant: v = 0.0; break;
                }
            }
        }
    }
}

// ---- windowing -----------------------------------------------------------------

WindowSet window(std::span<const RawSession> sessions, int length, int stride) {
    if (length < 1 || stride < 1) throw ConfigError("window length and stride must be >= 1");
    const int f_count = FeatureSchema::standard().count();
    WindowSet out;
    out.window_length = length;
    for (size_t si = 0; si < sessions.size(); ++si) {
        const RawSession& s = sessions[si];
        if (s.rows < length) {
            out.warnings.push_back("ride " + s.ride_id + " shorter than window (" +
                                   std::to_string(s.rows) + " < " + std::to_string(length) +
                                   "), skipped");
            continue;
        }
        for (int start = 0; start + length <= s.rows; start += stride) {
            std::vector<double> w(static_cast<size_t>(length) * f_count);
            std::copy(s.values.begin() + static_cast<long>(start) * f_count,
                      s.values.begin() + static_cast<long>(start + length) * f_count, w.begin());
            out.values.push_back(std::move(w));
            out.labels.push_back(ClassLabel{s.tp_label});
            out.ride_index.push_back(static_cast<int>(si));
            out.collision.push_back(s.collision);
        }
    }
    return out;
}

}  // namespace mtps
