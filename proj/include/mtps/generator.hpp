#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "mtps/data.hpp"
#include "mtps/rng.hpp"

namespace mtps {

// Class-conditional behavioral profile. Speed/gear/brake/steering targets and
// per-ride event rates are the generator's calibration surface; LTP values not
// published for steering/events are midpoints of NTP and HTP (flagged).
struct ClassProfile {
    std::string name;
    int label = 0;               // ClassLabel encoding
    double mean_speed = 0.0;     // km/h
    double speed_sd = 0.0;
    double mean_gear = 0.0;
    double front_brake_mean = 0.0;  // sensor units
    double rear_brake_mean = 0.0;
    double steering_sd_mean = 0.0;  // deg; mean of per-ride steering SD
    double steering_sd_sd = 0.0;    // spread of per-ride steering SD
    double risky_turn_rate = 0.0;   // per-ride Poisson means
    double no_signal_turn_rate = 0.0;
    double sudden_brake_rate = 0.0;
    double clutch_ride_rate = 0.0;
    bool interpolated = false;  // true when event/steering values are midpoints

    static ClassProfile ntp();
    static ClassProfile ltp();
    static ClassProfile htp();
    static ClassProfile by_label(int label);
};

struct CollisionModel {
    // logit = bias + tp_weight·tp_level + brake_weight·(sudden_brakes - 1.5)
    //       + speed_sd_weight·(ride speed SD - 22), tp_level: NTP 0, LTP 1, HTP 2.
    double bias = -2.2;
    double tp_weight = 1.4;
    double brake_weight = 0.2;
    double speed_sd_weight = 0.02;

    static CollisionModel null_model() { return {0.0, 0.0, 0.0, 0.0}; }
};

struct GeneratorConfig {
    int rides_per_class = 34;
    int duration = 1000;  // samples at 100 Hz
    uint64_t seed = 7;
    double noise_scale = 1.0;
    double mean_reversion = 0.25;  // per-sample pull toward the class mean
    CollisionModel collision;
    bool attach_collisions = true;
};

RawSession generate_ride(const ClassProfile& profile, const GeneratorConfig& config,
                         int ride_index);

int attach_collision(const RawSession& ride, const ClassProfile& profile,
                     const CollisionModel& model, Rng& rng);

std::vector<RawSession> generate_corpus(const GeneratorConfig& config);

// Empirical per-class statistics with pass/fail flags against profile targets.
struct ClassStatsCheck {
    std::string cls;
    long rides = 0;
    double mean_speed = 0.0, speed_sd = 0.0;
    double mean_gear = 0.0;
    double front_brake = 0.0, rear_brake = 0.0;
    double steering_sd = 0.0;
    double risky_turns = 0.0, no_signal_turns = 0.0, sudden_brakes = 0.0, clutch_rides = 0.0;
    bool speed_mean_ok = false, speed_sd_ok = false, gear_ok = false;
    bool front_brake_ok = false, rear_brake_ok = false, events_ok = false;
    bool missing = false;
    bool interpolated_targets = false;
};

struct CorpusReport {
    std::vector<ClassStatsCheck> per_class;
    double htp_ntp_speed_ratio = 0.0;  // mean(HTP)/mean(NTP) - 1
    bool ratio_ok = false;
    bool all_ok = false;
};

CorpusReport validate_corpus(std::span<const RawSession> sessions);
std::string report_to_text(const CorpusReport& report);

void write_corpus(const std::filesystem::path& dir, std::span<const RawSession> sessions,
                  const GeneratorConfig& config);

}  // namespace mtps
