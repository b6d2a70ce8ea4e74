#include "tpp/baseline_planners.hpp"

#include <algorithm>
#include <limits>

namespace tpp {
namespace {

std::vector<std::vector<int>> ego_paths(const TrajectoryTree& tree) {
    std::vector<std::vector<int>> out;
    for (int leaf : tree.leaves()) {
        out.push_back(tree.path_to(leaf));
    }
    return out;
}

// Cumulative cost of a fixed ego path against one scenario path.
double path_pair_cost(const CostTensor& costs, const std::vector<int>& ego, const std::vector<int>& scen) {
    double acc = 0.0;
    for (std::size_t i = 0; i < ego.size() && i < scen.size(); ++i) {
        acc += costs.at(ego[i], scen[i]);
    }
    return acc;
}

}  // namespace

double path_expected_cost(const TrajectoryTree& /*tree*/, const ScenarioSource& source, const CostTensor& costs,
                          const std::vector<int>& path) {
    const ScenarioTree& st = source.tree_for(path.back());
    double total = 0.0;
    for (const ScenarioNode& n : st.nodes) {
        total += st.path_probability(n.id) * costs.at(path.at(static_cast<std::size_t>(n.stage)), n.id);
    }
    return total;
}

std::vector<int> most_likely_scenario_path(const ScenarioTree& scenario) {
    int best_leaf = -1;
    double best_p = -1.0;
    for (int leaf : scenario.leaves()) {
        const double p = scenario.path_probability(leaf);
        if (p > best_p) {
            best_p = p;
            best_leaf = leaf;
        }
    }
    return scenario.path_to(best_leaf);
}

NonContingentPlan plan_ncr(const TrajectoryTree& tree, const ScenarioSource& source, const CostTensor& costs,
                           RobustObjective objective) {
    NonContingentPlan best;
    best.objective = std::numeric_limits<double>::infinity();
    for (const std::vector<int>& path : ego_paths(tree)) {
        const double expected = path_expected_cost(tree, source, costs, path);
        double crit = expected;
        if (objective == RobustObjective::worst_case) {
            const ScenarioTree& st = source.tree_for(path.back());
            crit = -std::numeric_limits<double>::infinity();
            for (int leaf : st.leaves()) {
                crit = std::max(crit, path_pair_cost(costs, path, st.path_to(leaf)));
            }
        }
        if (crit < best.objective) {
            best = {path, expected, crit};
        }
    }
    return best;
}

NonContingentPlan plan_ncg(const TrajectoryTree& tree, const ScenarioSource& source, const CostTensor& costs) {
    NonContingentPlan best;
    best.objective = std::numeric_limits<double>::infinity();
    for (const std::vector<int>& path : ego_paths(tree)) {
        const ScenarioTree& st = source.tree_for(path.back());
        const double crit = path_pair_cost(costs, path, most_likely_scenario_path(st));
        if (crit < best.objective) {
            best = {path, path_expected_cost(tree, source, costs, path), crit};
        }
    }
    return best;
}

}  // namespace tpp
