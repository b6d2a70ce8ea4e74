#pragma once

#include <vector>

#include "tpp/policy_dp.hpp"

namespace tpp {

/// One committed root-to-leaf ego path, no observation-dependent switching.
struct NonContingentPlan {
    std::vector<int> path;
    double expected_cost = 0.0;  // under the full scenario distribution
    double objective = 0.0;      // the criterion the planner minimized
};

enum class RobustObjective {
    expectation,  // default: expected cost over every predicted branch
    worst_case,   // max over scenario leaves, for sensitivity studies
};

/// Expected cumulative cost of a fixed ego path over its full scenario tree.
double path_expected_cost(const TrajectoryTree& tree, const ScenarioSource& source, const CostTensor& costs,
                          const std::vector<int>& path);

/// Non-contingent robust: best fixed path against all predicted branches.
NonContingentPlan plan_ncr(const TrajectoryTree& tree, const ScenarioSource& source, const CostTensor& costs,
                           RobustObjective objective = RobustObjective::expectation);
/// Non-contingent greedy: best fixed path against the single most likely
/// scenario path.
NonContingentPlan plan_ncg(const TrajectoryTree& tree, const ScenarioSource& source, const CostTensor& costs);

/// Most likely scenario root-to-leaf path (lowest leaf id on ties).
std::vector<int> most_likely_scenario_path(const ScenarioTree& scenario);

}  // namespace tpp
