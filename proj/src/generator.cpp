#include "mtps/generator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mtps {

ClassProfile ClassProfile::ntp() {
    ClassProfile p;
    p.name = "NTP";
    p.label = ClassLabel::kNtp;
    p.mean_speed = 33.12;
    p.speed_sd = 19.42;
    p.mean_gear = 2.78;
    p.front_brake_mean = 0.021;
    p.rear_brake_mean = 1.91;
    p.steering_sd_mean = 7.48;
    p.steering_sd_sd = 6.80;
    p.risky_turn_rate = 0.73;
    p.no_signal_turn_rate = 1.76;
    p.sudden_brake_rate = 1.32;
    p.clutch_ride_rate = 0.43;
    return p;
}

ClassProfile ClassProfile::htp() {
    ClassProfile p;
    p.name = "HTP";
    p.label = ClassLabel::kHtp;
    p.mean_speed = 49.00;
    p.speed_sd = 26.48;
    p.mean_gear = 3.75;
    p.front_brake_mean = 0.148;
    p.rear_brake_mean = 2.87;
    p.steering_sd_mean = 9.08;
    p.steering_sd_sd = 8.00;
    p.risky_turn_rate = 1.15;
    p.no_signal_turn_rate = 2.11;
    p.sudden_brake_rate = 1.80;
    p.clutch_ride_rate = 0.14;
    return p;
}

ClassProfile ClassProfile::ltp() {
    // Speed/gear/brake rows are published for LTP; steering and event rates
    // are not and are taken midway between NTP and HTP.
    ClassProfile n = ntp(), h = htp();
    ClassProfile p;
    p.name = "LTP";
    p.label = ClassLabel::kLtp;
    p.mean_speed = 39.69;
    p.speed_sd = 21.67;
    p.mean_gear = 3.22;
    p.front_brake_mean = 0.046;
    p.rear_brake_mean = 2.29;
    p.steering_sd_mean = 0.5 * (n.steering_sd_mean + h.steering_sd_mean);
    p.steering_sd_sd = 0.5 * (n.steering_sd_sd + h.steering_sd_sd);
    p.risky_turn_rate = 0.5 * (n.risky_turn_rate + h.risky_turn_rate);
    p.no_signal_turn_rate = 0.5 * (n.no_signal_turn_rate + h.no_signal_turn_rate);
    p.sudden_brake_rate = 0.5 * (n.sudden_brake_rate + h.sudden_brake_rate);
    p.clutch_ride_rate = 0.5 * (n.clutch_ride_rate + h.clutch_ride_rate);
    p.interpolated = true;
    return p;
}

ClassProfile ClassProfile::by_label(int label) {
    switch (label) {
        case ClassLabel::kHtp: return htp();
        case ClassLabel::kLtp: return ltp();
        case ClassLabel::kNtp: return ntp();
    }
    throw ConfigError("unknown class label " + std::to_string(label));
}

namespace {

constexpr int kPulseLen = 50;        // sudden-brake pulse, samples
constexpr int kClutchEpisodeLen = 100;
constexpr double kBrakePedalIdle = 0.12;
constexpr double kBrakePedalPulse = 0.95;

struct EventTimes {
    std::vector<int> starts;
};

EventTimes draw_events(Rng& rng, double rate, int duration, int span) {
    EventTimes ev;
    const int n = rng.poisson(rate);
    const int max_start = std::max(1, duration - span);
    for (int i = 0; i < n; ++i) ev.starts.push_back(rng.uniform_int(max_start));
    std::sort(ev.starts.begin(), ev.starts.end());
    return ev;
}

// AR(1) path with stationary marginal N(mean, sd). noise=0 degenerates to the
// mean exactly.
std::vector<double> ar1_path(Rng& rng, int n, double mean, double sd, double kappa,
                             double noise) {
    std::vector<double> x(static_cast<size_t>(n));
    const double s_step = sd * std::sqrt(kappa * (2.0 - kappa));
    double v = mean + sd * noise * rng.normal();
    for (int t = 0; t < n; ++t) {
        x[static_cast<size_t>(t)] = v;
        v += kappa * (mean - v) + s_step * noise * rng.normal();
    }
    return x;
}

// Cumulative event-count column: value at t = events observed so far.
void fill_cumulative(RawSession& s, int feature, const EventTimes& ev) {
    size_t next = 0;
    int count = 0;
    for (int t = 0; t < s.rows; ++t) {
        while (next < ev.starts.size() && ev.starts[next] <= t) {
            ++count;
            ++next;
        }
        s.at(t, feature) = count;
    }
}

int fi(const char* name) {
    const int i = FeatureSchema::standard().index_of(name);
    if (i < 0) throw SchemaError(std::string("generator references unknown feature ") + name);
    return i;
}

}  // namespace

RawSession generate_ride(const ClassProfile& profile, const GeneratorConfig& config,
                         int ride_index) {
    if (config.duration < 10)
        throw ConfigError("ride duration must be at least 10 samples, got " +
                          std::to_string(config.duration));
    const int n = config.duration;
    const double ns = config.noise_scale;
    Rng rng(Rng::mix(config.seed, (static_cast<uint64_t>(profile.label) << 32) |
                                      static_cast<uint64_t>(ride_index)));

    RawSession s;
    s.ride_id = profile.name + std::string("_") + std::to_string(ride_index);
    s.participant_id = "P" + std::to_string(ride_index % 51);
    s.tp_label = profile.label;
    s.rows = n;
    s.values.assign(static_cast<size_t>(n) * 63, 0.0);

    // Speed: mean-reverting walk targeting the class marginal, clipped at 0.
    std::vector<double> speed = ar1_path(rng, n, profile.mean_speed, profile.speed_sd,
                                         config.mean_reversion, ns);
    for (double& v : speed) v = std::max(0.0, v);

    // Sudden-brake events: pulse mass carries half of each brake-force mean,
    // a per-ride baseline carries the other half. A class-independent sensor
    // gain multiplies both force channels (load-cell calibration drift), so
    // absolute force level alone does not identify the class; the
    // pulse-to-baseline structure does.
    const EventTimes sudden = draw_events(rng, profile.sudden_brake_rate, n, kPulseLen);
    const double expected_pulse = std::max(profile.sudden_brake_rate, 1e-9) * kPulseLen;
    const double brake_gain = std::max(0.25, 1.0 + 0.40 * ns * rng.normal());
    const double front_amp =
        brake_gain * 0.5 * profile.front_brake_mean * n / expected_pulse;
    const double rear_amp = brake_gain * 0.5 * profile.rear_brake_mean * n / expected_pulse;
    const double front_base =
        std::max(0.0, brake_gain * 0.5 * profile.front_brake_mean *
                          (1.0 + 0.10 * ns * rng.normal()));
    const double rear_base =
        std::max(0.02, brake_gain * 0.5 * profile.rear_brake_mean *
                           (1.0 + 0.10 * ns * rng.normal()));

    // Rider-style and instrument calibration factors, independent of the
    // class: they confound absolute levels on the secondary channels.
    const double throttle_style = 1.0 + 0.25 * ns * rng.normal();
    const double rpm_gain = 1.0 + 0.15 * ns * rng.normal();
    const double gear_offset = 0.35 * ns * rng.normal();
    std::vector<double> pulse(static_cast<size_t>(n), 0.0);
    for (int start : sudden.starts)
        for (int t = start; t < std::min(n, start + kPulseLen); ++t) pulse[static_cast<size_t>(t)] = 1.0;

    // Steering: per-ride variability is lognormal with the profile's
    // mean/SD. Its quantile is coupled to the brake-gain quantile with a
    // class-dependent sign (aligned under HTP, opposed under NTP,
    // independent under LTP): the marginals stay on target while the
    // cross-channel relation carries class information.
    double steer_sd = profile.steering_sd_mean;
    if (ns > 0.0 && profile.steering_sd_sd > 0.0) {
        const double m = profile.steering_sd_mean;
        const double s = profile.steering_sd_sd;
        const double ln_var = std::log(1.0 + (s * s) / (m * m));
        const double ln_mu = std::log(m) - 0.5 * ln_var;
        const double gain_z = (brake_gain - 1.0) / 0.40;
        double w;
        switch (profile.label) {
            case ClassLabel::kHtp: w = gain_z; break;
            case ClassLabel::kNtp: w = -gain_z; break;
            default: w = rng.normal(); break;
        }
        steer_sd = std::max(0.3, std::exp(ln_mu + std::sqrt(ln_var) * w));
    }
    std::vector<double> steering = ar1_path(rng, n, 0.0, steer_sd, 0.2, ns);

    const EventTimes clutch_ev = draw_events(rng, profile.clutch_ride_rate, n, kClutchEpisodeLen);
    std::vector<double> clutch_hold(static_cast<size_t>(n), 0.0);
    for (int start : clutch_ev.starts)
        for (int t = start; t < std::min(n, start + kClutchEpisodeLen); ++t)
            clutch_hold[static_cast<size_t>(t)] = 1.0;

    const EventTimes risky = draw_events(rng, profile.risky_turn_rate, n, 1);
    const EventTimes no_signal = draw_events(rng, profile.no_signal_turn_rate, n, 1);

    // Class-independent background events.
    const EventTimes horn = draw_events(rng, 0.5, n, 1);
    const EventTimes ind_turn = draw_events(rng, 1.5, n, 1);
    const EventTimes ind_lane = draw_events(rng, 1.0, n, 1);
    const EventTimes speed_breaker = draw_events(rng, 0.4, n, 1);
    const EventTimes gap = draw_events(rng, 0.6, n, 1);
    const EventTimes overtake = draw_events(rng, 0.5, n, 1);
    const EventTimes bad_lane = draw_events(rng, 0.7, n, 1);
    const EventTimes wrong_side = draw_events(rng, 0.15, n, 1);
    const EventTimes gear_seq = draw_events(rng, 0.3, n, 1);
    const EventTimes clutch_rel = draw_events(rng, 0.35, n, 1);
    const EventTimes gear_noclutch = draw_events(rng, 0.2, n, 1);
    const EventTimes white = draw_events(rng, 0.8, n, 1);
    const EventTimes yellow = draw_events(rng, 0.5, n, 1);
    const EventTimes stop = draw_events(rng, 0.4, n, 1);
    const EventTimes jump = draw_events(rng, 0.25, n, 1);
    const EventTimes no_entry = draw_events(rng, 0.1, n, 1);
    const EventTimes u_turn = draw_events(rng, 0.1, n, 1);
    const EventTimes no_park = draw_events(rng, 0.05, n, 1);
    const EventTimes lane_change = draw_events(rng, 1.0, n, 1);
    const EventTimes indicator_ep = draw_events(rng, 2.0, n, 150);

    const int correct_gear = rng.bernoulli(0.9) ? 1 : 0;
    const int smooth_clutch = rng.bernoulli(0.85) ? 1 : 0;
    const int indicated_start = rng.bernoulli(0.8) ? 1 : 0;

    std::vector<double> headway = ar1_path(rng, n, 30.0, 8.0, 0.1, ns);
    std::vector<double> tailway = ar1_path(rng, n, 25.0, 7.0, 0.1, ns);
    std::vector<double> lane_noise = ar1_path(rng, n, 0.0, 0.25, 0.15, ns);

    std::vector<double> indicator(static_cast<size_t>(n), 0.0);
    for (int start : indicator_ep.starts)
        for (int t = start; t < std::min(n, start + 150); ++t) indicator[static_cast<size_t>(t)] = 1.0;

    double lane = 1.0;
    size_t next_lane_change = 0;
    double dist = 0.0;

    // Over-speeding: rising edges of speed above the 50 km/h limit.
    int overspeed_count = 0;
    bool over_prev = false;

    for (int t = 0; t < n; ++t) {
        const double v = speed[static_cast<size_t>(t)];
        const double st = steering[static_cast<size_t>(t)];
        const bool braking = pulse[static_cast<size_t>(t)] > 0.0;
        dist += v / 3.6 / 100.0;  // m per 100 Hz sample

        if (next_lane_change < lane_change.starts.size() &&
            lane_change.starts[next_lane_change] <= t) {
            lane = lane == 1.0 ? 2.0 : 1.0;
            ++next_lane_change;
        }
        if (v > 50.0 && !over_prev) ++overspeed_count;
        over_prev = v > 50.0;

        s.at(t, fi("ignition")) = 1.0;
        s.at(t, fi("engine")) = 1.0;
        s.at(t, fi("accelerator")) =
            std::clamp(0.25 + 0.4 * throttle_style * v / 60.0 + 0.08 * ns * rng.normal(), 0.0,
                       1.0);
        s.at(t, fi("brake")) =
            braking ? kBrakePedalPulse
                    : std::clamp(kBrakePedalIdle + 0.04 * ns * std::abs(rng.normal()), 0.0, 0.5);
        s.at(t, fi("clutch")) = clutch_hold[static_cast<size_t>(t)] > 0.0
                                    ? 0.55
                                    : std::clamp(0.1 + 0.05 * ns * std::abs(rng.normal()), 0.0, 0.5);
        s.at(t, fi("handbrake")) = 0.0;
        s.at(t, fi("steering")) = st;
        s.at(t, fi("gear")) = std::clamp(std::round(0.7567 + 0.06109 * v + gear_offset), 0.0, 6.0);
        s.at(t, fi("headlight")) = 1.0;
        s.at(t, fi("speed")) = v;
        s.at(t, fi("rpm")) =
            std::max(800.0, rpm_gain * (850.0 + 95.0 * v / 3.6) + 60.0 * ns * rng.normal());
        s.at(t, fi("fuel_economy")) =
            std::max(5.0, 45.0 - 0.25 * throttle_style * v + 2.5 * ns * rng.normal());
        s.at(t, fi("distance_travelled")) = dist;
        s.at(t, fi("indicator")) = indicator[static_cast<size_t>(t)];
        s.at(t, fi("indicated_before_moving_off")) = indicated_start;
        s.at(t, fi("failed_to_use_headlights")) = 0.0;
        s.at(t, fi("correct_gear_before_moving_off")) = correct_gear;
        s.at(t, fi("smooth_releasing_of_clutch")) = smooth_clutch;
        s.at(t, fi("driving_with_handbrake_applied")) = 0.0;
        s.at(t, fi("time_stamp")) = t / 100.0;
        s.at(t, fi("position_x")) = dist;
        s.at(t, fi("position_y")) = 3.5 * std::sin(dist / 300.0) + 0.02 * st;
        s.at(t, fi("position_z")) = 0.5;
        s.at(t, fi("rotation_x")) = 0.0;
        s.at(t, fi("rotation_y")) = 0.04 * st + 0.2 * ns * rng.normal();
        s.at(t, fi("rotation_z")) = 0.05 * st;
        s.at(t, fi("lane_no")) = lane;
        s.at(t, fi("left_lane_offset")) = 1.75 + lane_noise[static_cast<size_t>(t)] + 0.01 * st;
        s.at(t, fi("right_lane_offset")) = 1.75 - lane_noise[static_cast<size_t>(t)] - 0.01 * st;
        s.at(t, fi("lateral_velocity")) = 0.03 * st + 0.05 * ns * rng.normal();
        s.at(t, fi("longitudinal_velocity")) = v / 3.6;
        s.at(t, fi("headway_distance")) = std::max(2.0, headway[static_cast<size_t>(t)]);
        s.at(t, fi("headway_time")) =
            std::max(0.1, headway[static_cast<size_t>(t)]) / std::max(1.0, v / 3.6);
        s.at(t, fi("tailway_distance")) = std::max(2.0, tailway[static_cast<size_t>(t)]);
        s.at(t, fi("tailway_time")) =
            std::max(0.1, tailway[static_cast<size_t>(t)]) / std::max(1.0, v / 3.6);
        s.at(t, fi("leftway_distance")) = 2.5 + 0.5 * std::abs(lane_noise[static_cast<size_t>(t)]);
        s.at(t, fi("rightway_distance")) = 2.6 + 0.5 * std::abs(lane_noise[static_cast<size_t>(t)]);
        s.at(t, fi("steering_angle")) = st + 0.2 * ns * rng.normal();
        s.at(t, fi("brake_test_done")) = 1.0;
        s.at(t, fi("front_tire_brake_force")) = std::max(
            0.0, front_base * (1.0 + 0.40 * ns * rng.normal()) +
                     (braking ? front_amp : 0.0));
        s.at(t, fi("rear_tire_brake_force")) = std::max(
            0.0, rear_base * (1.0 + 0.40 * ns * rng.normal()) + (braking ? rear_amp : 0.0));
        s.at(t, fi("over_speeding")) = overspeed_count;
    }

    fill_cumulative(s, fi("horn_violation"), horn);
    fill_cumulative(s, fi("indicated_while_turning_at_junction"), ind_turn);
    fill_cumulative(s, fi("indicated_while_changing_lanes"), ind_lane);
    fill_cumulative(s, fi("incorrect_speed_at_intersections"), risky);
    fill_cumulative(s, fi("incorrect_speed_on_speed_breakers"), speed_breaker);
    fill_cumulative(s, fi("improper_gap_maintenance"), gap);
    fill_cumulative(s, fi("dangerous_overtaking"), overtake);
    fill_cumulative(s, fi("turned_without_indication"), no_signal);
    fill_cumulative(s, fi("incorrect_lane_driving"), bad_lane);
    fill_cumulative(s, fi("wrong_side_driving"), wrong_side);
    fill_cumulative(s, fi("clutch_riding"), clutch_ev);
    fill_cumulative(s, fi("incorrect_gear_change_sequence"), gear_seq);
    fill_cumulative(s, fi("improper_clutch_release"), clutch_rel);
    fill_cumulative(s, fi("gear_shift_without_clutch"), gear_noclutch);
    fill_cumulative(s, fi("crossed_white_line"), white);
    fill_cumulative(s, fi("crossed_yellow_line"), yellow);
    fill_cumulative(s, fi("crossed_stop_line"), stop);
    fill_cumulative(s, fi("signal_jumping"), jump);
    fill_cumulative(s, fi("no_entry_violation"), no_entry);
    fill_cumulative(s, fi("u_turn_violation"), u_turn);
    fill_cumulative(s, fi("no_parking_violation"), no_park);
    return s;
}

namespace {

// Sudden-brake incidents are observable as rising edges of the brake pedal
// pulse level.
int count_brake_events(const RawSession& s) {
    const int b = FeatureSchema::standard().index_of("brake");
    int count = 0;
    bool active = false;
    for (int t = 0; t < s.rows; ++t) {
        const bool hi = s.at(t, b) > 0.5;
        if (hi && !active) ++count;
        active = hi;
    }
    return count;
}

double column_sd(const RawSession& s, int feature) {
    double mean = 0.0;
    for (int t = 0; t < s.rows; ++t) mean += s.at(t, feature);
    mean /= std::max(1, s.rows);
    double ss = 0.0;
    for (int t = 0; t < s.rows; ++t) {
        const double d = s.at(t, feature) - mean;
        ss += d * d;
    }
    return std::sqrt(ss / std::max(1, s.rows));
}

}  // namespace

int attach_collision(const RawSession& ride, const ClassProfile& profile,
                     const CollisionModel& model, Rng& rng) {
    const int tp_level = 2 - profile.label;  // NTP 0, LTP 1, HTP 2
    const double sb = count_brake_events(ride);
    const double speed_sd = column_sd(ride, FeatureSchema::standard().index_of("speed"));
    const double logit = model.bias + model.tp_weight * tp_level +
                         model.brake_weight * (sb - 1.5) +
                         model.speed_sd_weight * (speed_sd - 22.0);
    const double p = 1.0 / (1.0 + std::exp(-logit));
    return rng.bernoulli(p) ? 1 : 0;
}

std::vector<RawSession> generate_corpus(const GeneratorConfig& config) {
    if (config.rides_per_class < 1) throw ConfigError("rides_per_class must be >= 1");
    std::vector<RawSession> out;
    Rng collision_rng(Rng::mix(config.seed, 0xC0111D));
    for (int label : {ClassLabel::kHtp, ClassLabel::kLtp, ClassLabel::kNtp}) {
        const ClassProfile profile = ClassProfile::by_label(label);
        for (int i = 0; i < config.rides_per_class; ++i) {
            RawSession s = generate_ride(profile, config, i);
            if (config.attach_collisions)
                s.collision = attach_collision(s, profile, config.collision, collision_rng);
            out.push_back(std::move(s));
        }
    }
    return out;
}

// ---- validation ----------------------------------------------------------------

CorpusReport validate_corpus(std::span<const RawSession> sessions) {
    if (sessions.empty()) throw UsageError("validate_corpus on empty corpus");
    const auto& schema = FeatureSchema::standard();
    const int f_speed = schema.index_of("speed");
    const int f_gear = schema.index_of("gear");
    const int f_front = schema.index_of("front_tire_brake_force");
    const int f_rear = schema.index_of("rear_tire_brake_force");
    const int f_steer = schema.index_of("steering");
    const int f_risky = schema.index_of("incorrect_speed_at_intersections");
    const int f_nosig = schema.index_of("turned_without_indication");
    const int f_clutch = schema.index_of("clutch_riding");

    CorpusReport report;
    double ntp_mean = 0.0, htp_mean = 0.0;
    for (int label : {ClassLabel::kNtp, ClassLabel::kLtp, ClassLabel::kHtp}) {
        const ClassProfile target = ClassProfile::by_label(label);
        ClassStatsCheck c;
        c.cls = target.name;
        c.interpolated_targets = target.interpolated;
        double sum = 0.0, ss = 0.0, gear = 0.0, front = 0.0, rear = 0.0, steer_sd = 0.0;
        double risky = 0.0, nosig = 0.0, sudden = 0.0, clutch = 0.0;
        long rows = 0;
        for (const auto& s : sessions) {
            if (s.tp_label != label) continue;
            ++c.rides;
            rows += s.rows;
            for (int t = 0; t < s.rows; ++t) {
                const double v = s.at(t, f_speed);
                sum += v;
                ss += v * v;
                gear += s.at(t, f_gear);
                front += s.at(t, f_front);
                rear += s.at(t, f_rear);
            }
            steer_sd += column_sd(s, f_steer);
            risky += s.at(s.rows - 1, f_risky);
            nosig += s.at(s.rows - 1, f_nosig);
            clutch += s.at(s.rows - 1, f_clutch);
            sudden += count_brake_events(s);
        }
        if (c.rides == 0) {
            c.missing = true;
            report.per_class.push_back(c);
            continue;
        }
        c.mean_speed = sum / rows;
        c.speed_sd = std::sqrt(std::max(0.0, ss / rows - c.mean_speed * c.mean_speed));
        c.mean_gear = gear / rows;
        c.front_brake = front / rows;
        c.rear_brake = rear / rows;
        c.steering_sd = steer_sd / c.rides;
        c.risky_turns = risky / c.rides;
        c.no_signal_turns = nosig / c.rides;
        c.sudden_brakes = sudden / c.rides;
        c.clutch_rides = clutch / c.rides;

        auto within = [](double value, double target, double tol) {
            return std::abs(value - target) <= tol * std::abs(target);
        };
        c.speed_mean_ok = within(c.mean_speed, target.mean_speed, 0.03);
        c.speed_sd_ok = within(c.speed_sd, target.speed_sd, 0.10);
        c.gear_ok = within(c.mean_gear, target.mean_gear, 0.10);
        c.front_brake_ok = within(c.front_brake, target.front_brake_mean, 0.20);
        c.rear_brake_ok = within(c.rear_brake, target.rear_brake_mean, 0.20);
        c.events_ok = within(c.risky_turns, target.risky_turn_rate, 0.25) &&
                      within(c.no_signal_turns, target.no_signal_turn_rate, 0.25) &&
                      within(c.sudden_brakes, target.sudden_brake_rate, 0.25) &&
                      within(c.clutch_rides, target.clutch_ride_rate, 0.35);
        if (label == ClassLabel::kNtp) ntp_mean = c.mean_speed;
        if (label == ClassLabel::kHtp) htp_mean = c.mean_speed;
        report.per_class.push_back(c);
    }
    if (ntp_mean > 0.0 && htp_mean > 0.0) {
        report.htp_ntp_speed_ratio = htp_mean / ntp_mean - 1.0;
        report.ratio_ok = std::abs(report.htp_ntp_speed_ratio - 0.48) <= 0.05 * 0.48;
    }
    report.all_ok = report.ratio_ok;
    for (const auto& c : report.per_class)
        report.all_ok = report.all_ok && !c.missing && c.speed_mean_ok && c.speed_sd_ok &&
                        c.gear_ok && c.front_brake_ok && c.rear_brake_ok && c.events_ok;
    return report;
}

std::string report_to_text(const CorpusReport& report) {
    std::ostringstream os;
    os.precision(4);
    os << std::fixed;
    auto flag = [](bool ok) { return ok ? "pass" : "FAIL"; };
    for (const auto& c : report.per_class) {
        if (c.missing) {
            os << c.cls << ": MISSING (no rides)\n";
            continue;
        }
        os << c.cls << " (" << c.rides << " rides"
           << (c.interpolated_targets ? ", interpolated targets" : "") << ")\n";
        os << "  mean speed " << c.mean_speed << " [" << flag(c.speed_mean_ok) << "]"
           << "  speed sd " << c.speed_sd << " [" << flag(c.speed_sd_ok) << "]\n";
        os << "  mean gear " << c.mean_gear << " [" << flag(c.gear_ok) << "]"
           << "  front brake " << c.front_brake << " [" << flag(c.front_brake_ok) << "]"
           << "  rear brake " << c.rear_brake << " [" << flag(c.rear_brake_ok) << "]\n";
        os << "  steering sd " << c.steering_sd << "  events (risky/no-signal/sudden/clutch) "
           << c.risky_turns << "/" << c.no_signal_turns << "/" << c.sudden_brakes << "/"
           << c.clutch_rides << " [" << flag(c.events_ok) << "]\n";
    }
    os << "HTP/NTP mean-speed change " << report.htp_ntp_speed_ratio * 100.0 << "% ["
       << flag(report.ratio_ok) << "]\n";
    os << "overall: " << (report.all_ok ? "pass" : "FAIL") << "\n";
    return os.str();
}

void write_corpus(const std::filesystem::path& dir, std::span<const RawSession> sessions,
                  const GeneratorConfig& config) {
    std::filesystem::create_directories(dir);
    for (const auto& s : sessions) write_session_csv(dir / (s.ride_id + ".csv"), s);

    nlohmann::json manifest;
    manifest["rides_per_class"] = config.rides_per_class;
    manifest["duration"] = config.duration;
    manifest["seed"] = config.seed;
    manifest["noise_scale"] = config.noise_scale;
    manifest["mean_reversion"] = config.mean_reversion;
    manifest["collision_model"] = {{"bias", config.collision.bias},
                                   {"tp_weight", config.collision.tp_weight},
                                   {"brake_weight", config.collision.brake_weight},
                                   {"speed_sd_weight", config.collision.speed_sd_weight}};
    manifest["schema_hash"] = FeatureSchema::standard().hash();
    nlohmann::json profiles = nlohmann::json::array();
    for (int label : {ClassLabel::kHtp, ClassLabel::kLtp, ClassLabel::kNtp}) {
        const ClassProfile p = ClassProfile::by_label(label);
        profiles.push_back({{"name", p.name},
                            {"mean_speed", p.mean_speed},
                            {"speed_sd", p.speed_sd},
                            {"mean_gear", p.mean_gear},
                            {"front_brake_mean", p.front_brake_mean},
                            {"rear_brake_mean", p.rear_brake_mean},
                            {"steering_sd_mean", p.steering_sd_mean},
                            {"steering_sd_sd", p.steering_sd_sd},
                            {"risky_turn_rate", p.risky_turn_rate},
                            {"no_signal_turn_rate", p.no_signal_turn_rate},
                            {"sudden_brake_rate", p.sudden_brake_rate},
                            {"clutch_ride_rate", p.clutch_ride_rate},
                            {"interpolated", p.interpolated}});
    }
    manifest["profiles"] = profiles;
    manifest["tolerances"] = {{"speed_mean", 0.03}, {"speed_sd", 0.10}, {"gear", 0.10},
                              {"brake", 0.20},      {"events", 0.25},   {"speed_ratio", 0.05}};

    std::ofstream out(dir / "generation_manifest.json");
    out << manifest.dump(2) << "\n";

    std::ofstream rep(dir / "validation_report.txt");
    rep << report_to_text(validate_corpus(sessions));
}

}  // namespace mtps
