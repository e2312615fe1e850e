#include "mtps/thresholds.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace mtps {

bool Condition::holds(const StateProbabilities& p) const {
    const double v = field == ProbField::ntp ? p.p_ntp
                     : field == ProbField::ltp ? p.p_ltp
                                               : p.p_htp;
    switch (cmp) {
        case Cmp::ge: return v >= bound;
        case Cmp::gt: return v > bound;
        case Cmp::le: return v <= bound;
        case Cmp::lt: return v < bound;
    }
    return false;
}

namespace {

Condition cond(ProbField f, Cmp c, double b) { return {f, c, b}; }

}  // namespace

RuleSet RuleSet::defaults() {
    using PF = ProbField;
    RuleSet rs;
    rs.rules = {
        {1,
         "Calm (NTP)",
         {cond(PF::ntp, Cmp::ge, 0.80), cond(PF::ltp, Cmp::le, 0.15), cond(PF::htp, Cmp::le, 0.10)},
         "routine-monitoring"},
        {2,
         "Transition",
         {cond(PF::ntp, Cmp::ge, 0.50), cond(PF::ntp, Cmp::lt, 0.70), cond(PF::ltp, Cmp::ge, 0.25),
          cond(PF::ltp, Cmp::lt, 0.40), cond(PF::htp, Cmp::lt, 0.10)},
         "watchlist"},
        {3,
         "Manageable Stress (LTP)",
         {cond(PF::ltp, Cmp::ge, 0.65), cond(PF::ntp, Cmp::le, 0.30), cond(PF::htp, Cmp::le, 0.10)},
         "mild-advisory"},
        {4,
         "Elevated Risk",
         {cond(PF::htp, Cmp::ge, 0.30), cond(PF::ltp, Cmp::ge, 0.40), cond(PF::ltp, Cmp::lt, 0.60),
          cond(PF::ntp, Cmp::le, 0.15)},
         "early-warning-alert"},
        {5,
         "Critical (HTP)",
         {cond(PF::htp, Cmp::ge, 0.70), cond(PF::ntp, Cmp::le, 0.10)},
         "critical-alarm-haptic"},
        {6,
         "Recovery (LTP)",
         {cond(PF::ltp, Cmp::ge, 0.65), cond(PF::htp, Cmp::gt, 0.10), cond(PF::htp, Cmp::le, 0.20),
          cond(PF::ntp, Cmp::gt, 0.10), cond(PF::ntp, Cmp::le, 0.20)},
         "relax-intervention"},
    };
    rs.priority = {5, 4, 1, 3, 6, 2};
    return rs;
}

void RuleSet::validate() const {
    if (rules.empty()) throw ConfigError("rule set is empty");
    std::map<int, int> seen;
    for (const auto& r : rules) {
        if (r.phase < 1) throw ConfigError("rule phase ids must be >= 1");
        if (++seen[r.phase] > 1)
            throw ConfigError("duplicate rule for phase " + std::to_string(r.phase));
        if (r.conditions.empty())
            throw ConfigError("phase " + std::to_string(r.phase) + " has no conditions");
        for (const auto& c : r.conditions)
            if (c.bound < 0.0 || c.bound > 1.0)
                throw ConfigError("phase " + std::to_string(r.phase) + " has bound " +
                                  std::to_string(c.bound) + " outside [0,1]");
    }
    if (priority.size() != rules.size())
        throw ConfigError("priority list must name every phase exactly once");
    for (int phase : priority)
        if (!find(phase))
            throw ConfigError("priority names unknown phase " + std::to_string(phase));
}

const ThresholdRule* RuleSet::find(int phase) const {
    for (const auto& r : rules)
        if (r.phase == phase) return &r;
    return nullptr;
}

RiderStateDecision classify_state(const StateProbabilities& p, const RuleSet& rules) {
    RiderStateDecision d;
    d.probabilities = p;
    d.argmax = p.argmax_class;
    d.confidence = p.confidence;
    for (int phase : rules.priority) {
        const ThresholdRule* rule = rules.find(phase);
        bool all = true;
        for (const auto& c : rule->conditions)
            if (!c.holds(p)) {
                all = false;
                break;
            }
        if (all) {
            d.phase = rule->phase;
            d.name = rule->name;
            d.intervention = rule->intervention;
            return d;
        }
    }
    d.phase = kIndeterminate;
    d.name = "Indeterminate";
    return d;
}

StateSmoother::StateSmoother(int k) : k_(k) {
    if (k < 1) throw ConfigError("persistence window must be >= 1");
}

int StateSmoother::feed(int raw_phase) {
    if (raw_phase == 5) {  // escalation bypasses persistence
        emitted_ = 5;
        candidate_ = 5;
        run_ = k_;
        return 5;
    }
    if (!emitted_) {
        emitted_ = raw_phase;
        candidate_ = raw_phase;
        run_ = k_;
        return raw_phase;
    }
    if (raw_phase == candidate_) {
        ++run_;
    } else {
        candidate_ = raw_phase;
        run_ = 1;
    }
    if (candidate_ != *emitted_ && run_ >= k_) emitted_ = candidate_;
    return *emitted_;
}

std::vector<int> smooth_state(std::span<const int> raw_phases, int k) {
    StateSmoother sm(k);
    std::vector<int> out;
    out.reserve(raw_phases.size());
    for (int p : raw_phases) out.push_back(sm.feed(p));
    return out;
}

CoverageReport coverage_report(const RuleSet& rules, int resolution) {
    rules.validate();
    int max_phase = 0;
    for (const auto& r : rules.rules) max_phase = std::max(max_phase, r.phase);
    CoverageReport rep;
    rep.phase_fraction.assign(static_cast<size_t>(max_phase) + 1, 0.0);
    rep.overlap.assign(static_cast<size_t>(max_phase) + 1,
                       std::vector<long>(static_cast<size_t>(max_phase) + 1, 0));

    long total = 0;
    std::vector<long> counts(static_cast<size_t>(max_phase) + 1, 0);
    for (int i = 0; i <= resolution; ++i) {
        for (int j = 0; j + i <= resolution; ++j) {
            const double p_ntp = static_cast<double>(i) / resolution;
            const double p_ltp = static_cast<double>(j) / resolution;
            const double p_htp = static_cast<double>(resolution - i - j) / resolution;
            StateProbabilities p;
            p.p_ntp = p_ntp;
            p.p_ltp = p_ltp;
            p.p_htp = p_htp;
            ++total;

            std::vector<int> matched;
            for (const auto& r : rules.rules) {
                bool all = true;
                for (const auto& c : r.conditions)
                    if (!c.holds(p)) {
                        all = false;
                        break;
                    }
                if (all) matched.push_back(r.phase);
            }
            for (size_t a = 0; a < matched.size(); ++a)
                for (size_t b = a + 1; b < matched.size(); ++b) {
                    ++rep.overlap[static_cast<size_t>(matched[a])][static_cast<size_t>(matched[b])];
                    ++rep.overlap[static_cast<size_t>(matched[b])][static_cast<size_t>(matched[a])];
                }
            // Resolution by priority, as in classify_state.
            int winner = kIndeterminate;
            for (int phase : rules.priority) {
                if (std::find(matched.begin(), matched.end(), phase) != matched.end()) {
                    winner = phase;
                    break;
                }
            }
            ++counts[static_cast<size_t>(winner)];
        }
    }
    rep.grid_points = total;
    for (size_t ph = 0; ph < counts.size(); ++ph)
        rep.phase_fraction[ph] = static_cast<double>(counts[ph]) / static_cast<double>(total);
    rep.indeterminate_fraction = rep.phase_fraction[kIndeterminate];
    return rep;
}

// ---- rules file -----------------------------------------------------------------
// Format:
//   priority = 5,4,1,3,6,2
//   phase1.name = Calm (NTP)
//   phase1.when = ntp>=0.80 ltp<=0.15 htp<=0.10
//   phase1.tag = routine-monitoring

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

Condition parse_condition(const std::string& token, int line_no) {
    static const std::pair<const char*, Cmp> ops[] = {
        {">=", Cmp::ge}, {"<=", Cmp::le}, {">", Cmp::gt}, {"<", Cmp::lt}};
    for (const auto& [op, cmp] : ops) {
        const size_t pos = token.find(op);
        if (pos == std::string::npos) continue;
        const std::string field = trim(token.substr(0, pos));
        const std::string value = trim(token.substr(pos + std::strlen(op)));
        Condition c;
        if (field == "ntp") c.field = ProbField::ntp;
        else if (field == "ltp") c.field = ProbField::ltp;
        else if (field == "htp") c.field = ProbField::htp;
        else
            throw ConfigError("rules line " + std::to_string(line_no) + ": unknown field '" +
                              field + "'");
        c.cmp = cmp;
        try {
            c.bound = std::stod(value);
        } catch (const std::exception&) {
            throw ConfigError("rules line " + std::to_string(line_no) + ": bad bound '" + value +
                              "'");
        }
        return c;
    }
    throw ConfigError("rules line " + std::to_string(line_no) + ": no comparator in '" + token +
                      "'");
}

}  // namespace

RuleSet load_rules(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open rules file " + path.string());
    RuleSet rs;
    std::map<int, ThresholdRule> by_phase;
    std::string line;
    int line_no = 0;
    std::map<int, int> when_line;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("rules line " + std::to_string(line_no) + ": expected key=value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key == "priority") {
            std::stringstream ss(value);
            std::string item;
            while (std::getline(ss, item, ',')) rs.priority.push_back(std::stoi(trim(item)));
            continue;
        }
        if (key.rfind("phase", 0) != 0)
            throw ConfigError("rules line " + std::to_string(line_no) + ": unknown key '" + key +
                              "'");
        const size_t dot = key.find('.');
        if (dot == std::string::npos)
            throw ConfigError("rules line " + std::to_string(line_no) + ": expected phaseN.field");
        const int phase = std::stoi(key.substr(5, dot - 5));
        ThresholdRule& rule = by_phase[phase];
        rule.phase = phase;
        const std::string field = key.substr(dot + 1);
        if (field == "name") {
            rule.name = value;
        } else if (field == "tag") {
            rule.intervention = value;
        } else if (field == "when") {
            when_line[phase] = line_no;
            std::stringstream ss(value);
            std::string token;
            while (ss >> token) rule.conditions.push_back(parse_condition(token, line_no));
        } else {
            throw ConfigError("rules line " + std::to_string(line_no) + ": unknown field '" +
                              field + "'");
        }
    }
    for (auto& [phase, rule] : by_phase) rs.rules.push_back(rule);
    if (rs.priority.empty())
        for (const auto& r : rs.rules) rs.priority.push_back(r.phase);
    try {
        rs.validate();
    } catch (const ConfigError& e) {
        // Name the offending line when the failure is a bad bound.
        for (const auto& [phase, ln] : when_line) {
            const ThresholdRule* r = rs.find(phase);
            if (!r) continue;
            for (const auto& c : r->conditions)
                if (c.bound < 0.0 || c.bound > 1.0)
                    throw ConfigError(std::string(e.what()) + " (line " + std::to_string(ln) +
                                      ")");
        }
        throw;
    }
    return rs;
}

void save_rules(const std::filesystem::path& path, const RuleSet& rules) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write rules file " + path.string());
    out << "priority = ";
    for (size_t i = 0; i < rules.priority.size(); ++i)
        out << (i ? "," : "") << rules.priority[i];
    out << "\n\n";
    for (const auto& r : rules.rules) {
        out << "phase" << r.phase << ".name = " << r.name << "\n";
        out << "phase" << r.phase << ".when =";
        for (const auto& c : r.conditions) {
            const char* field = c.field == ProbField::ntp ? "ntp"
                                : c.field == ProbField::ltp ? "ltp"
                                                            : "htp";
            const char* op = c.cmp == Cmp::ge ? ">=" : c.cmp == Cmp::gt ? ">"
                             : c.cmp == Cmp::le ? "<=" : "<";
            out << " " << field << op << c.bound;
        }
        out << "\n";
        out << "phase" << r.phase << ".tag = " << r.intervention << "\n\n";
    }
}

}  // namespace mtps
