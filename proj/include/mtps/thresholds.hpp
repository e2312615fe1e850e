#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mtps/model.hpp"

namespace mtps {

enum class ProbField { ntp, ltp, htp };
enum class Cmp { ge, gt, le, lt };

struct Condition {
    ProbField field;
    Cmp cmp;
    double bound = 0.0;

    bool holds(const StateProbabilities& p) const;
};

struct ThresholdRule {
    int phase = 0;  // 1..6
    std::string name;
    std::vector<Condition> conditions;  // conjunctive
    std::string intervention;
};

// The six-phase rule table plus explicit evaluation priority. Safety-critical
// phases are checked first; evaluation order is independent of storage order.
struct RuleSet {
    std::vector<ThresholdRule> rules;
    std::vector<int> priority;  // phase ids in evaluation order

    static RuleSet defaults();
    void validate() const;
    const ThresholdRule* find(int phase) const;
};

inline constexpr int kIndeterminate = 0;

struct RiderStateDecision {
    int phase = kIndeterminate;
    std::string name;          // "Indeterminate" when no rule matched
    std::string intervention;  // empty for indeterminate
    ClassLabel argmax;
    double confidence = 0.0;
    StateProbabilities probabilities;
};

// First full conjunctive match in priority order wins; no match falls back to
// Indeterminate with the argmax class attached.
RiderStateDecision classify_state(const StateProbabilities& p, const RuleSet& rules);

// Persistence smoothing: a phase change is emitted only after k consecutive
// identical raw phases; raw phase 5 bypasses smoothing.
class StateSmoother {
public:
    explicit StateSmoother(int k);
    int feed(int raw_phase);

private:
    int k_;
    std::optional<int> emitted_;
    int candidate_ = kIndeterminate;
    int run_ = 0;
};

std::vector<int> smooth_state(std::span<const int> raw_phases, int k);

struct CoverageReport {
    std::vector<double> phase_fraction;  // indexed by phase id, [0]=indeterminate
    double indeterminate_fraction = 0.0;
    // overlap[a][b] = grid points where rules of phases a and b both match
    std::vector<std::vector<long>> overlap;
    long grid_points = 0;
};

// Grid-samples the probability simplex at `resolution` steps per edge.
CoverageReport coverage_report(const RuleSet& rules, int resolution = 100);

// Plain-text key=value rules file mirroring the six-phase table.
RuleSet load_rules(const std::filesystem::path& path);
void save_rules(const std::filesystem::path& path, const RuleSet& rules);

}  // namespace mtps
