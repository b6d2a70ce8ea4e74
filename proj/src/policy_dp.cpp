#include "tpp/policy_dp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

namespace tpp {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string cell(int r, int e) { return "(r" + std::to_string(r) + ", e" + std::to_string(e) + ")"; }

void check_structure(const TrajectoryTree& tree, const ScenarioSource& source) {
    if (tree.nodes.empty()) {
        throw StructureError("empty trajectory tree");
    }
    const ScenarioTree& t0 = source.tree_for(0);
    if (t0.num_stages() != tree.num_stages()) {
        throw StructureError("trajectory tree has " + std::to_string(tree.num_stages()) +
                             " stages but the scenario tree has " + std::to_string(t0.num_stages()));
    }
    if (!(t0.schedule == tree.schedule)) {
        throw StructureError("trajectory and scenario trees use different stage schedules");
    }
}

// Scenario node `e` as seen from the tree of `child`; with an unvalidated
// ensemble this is where a prefix mismatch is caught lazily.
const ScenarioNode& shared_node(const ScenarioSource& source, const ScenarioTree& parent_tree, int child, int e) {
    const ScenarioTree& child_tree = source.tree_for(child);
    if (!child_tree.contains(e)) {
        throw CausalConsistencyViolation("scenario node " + std::to_string(e) + " missing from the tree of ego node " +
                                         std::to_string(child));
    }
    const ScenarioNode& n = child_tree.node(e);
    if (!source.validated() && &child_tree != &parent_tree && !(n == parent_tree.node(e))) {
        // children legitimately differ; compare everything else
        ScenarioNode a = n;
        ScenarioNode b = parent_tree.node(e);
        a.children.clear();
        b.children.clear();
        if (!(a == b)) {
            throw CausalConsistencyViolation("scenario node " + std::to_string(e) + " differs between the trees of ego node " +
                                             std::to_string(child) + " and its parent");
        }
    }
    return n;
}

}  // namespace

// ---------------------------------------------------------------- tables

CostTensor::CostTensor(std::size_t ego_nodes, std::size_t scenario_nodes)
    : ego_nodes_(ego_nodes), scenario_nodes_(scenario_nodes), values_(ego_nodes * scenario_nodes, kNaN) {}

std::size_t CostTensor::index(int ego, int scenario) const {
    if (ego < 0 || scenario < 0 || static_cast<std::size_t>(ego) >= ego_nodes_ ||
        static_cast<std::size_t>(scenario) >= scenario_nodes_) {
        throw StructureError("cost tensor index out of range " + cell(ego, scenario));
    }
    return static_cast<std::size_t>(ego) * scenario_nodes_ + static_cast<std::size_t>(scenario);
}

void CostTensor::set(int ego, int scenario, double value) {
    if (!std::isfinite(value)) {
        throw ValidationError("cost tensor entries must be finite " + cell(ego, scenario));
    }
    values_[index(ego, scenario)] = value;
}

double CostTensor::at(int ego, int scenario) const {
    const double v = values_[index(ego, scenario)];
    if (std::isnan(v)) {
        throw StructureError("cost tensor has no entry for " + cell(ego, scenario));
    }
    return v;
}

bool CostTensor::has(int ego, int scenario) const {
    if (ego < 0 || scenario < 0 || static_cast<std::size_t>(ego) >= ego_nodes_ ||
        static_cast<std::size_t>(scenario) >= scenario_nodes_) {
        return false;
    }
    return !std::isnan(values_[index(ego, scenario)]);
}

CostTensor CostTensor::scaled(double factor) const {
    CostTensor out = *this;
    for (double& v : out.values_) {
        v *= factor;
    }
    return out;
}

ScenarioSource ScenarioSource::single(const ScenarioTree& tree) {
    ScenarioSource s;
    s.single_ = &tree;
    return s;
}

ScenarioSource ScenarioSource::ensemble(const ECPredictionEnsemble& ensemble) {
    if (ensemble.trees.empty()) {
        throw StructureError("ensemble has no scenario trees");
    }
    ScenarioSource s;
    s.ensemble_ = &ensemble;
    return s;
}

const ScenarioTree& ScenarioSource::tree_for(int ego_node) const {
    if (single_ != nullptr) {
        return *single_;
    }
    return ensemble_->tree_for_ego_node(ego_node);
}

std::size_t ScenarioSource::max_scenario_nodes() const {
    if (single_ != nullptr) {
        return single_->nodes.size();
    }
    std::size_t n = 0;
    for (const ScenarioTree& t : ensemble_->trees) {
        n = std::max(n, t.nodes.size());
    }
    return n;
}

double ValueTable::value(int ego, int scenario) const {
    const double x = v.at(static_cast<std::size_t>(ego) * scenario_stride + static_cast<std::size_t>(scenario));
    if (std::isnan(x)) {
        throw UnknownNode("no value for " + cell(ego, scenario));
    }
    return x;
}

double ValueTable::q_value(int ego_child, int scenario) const {
    const double x = q.at(static_cast<std::size_t>(ego_child) * scenario_stride + static_cast<std::size_t>(scenario));
    if (std::isnan(x)) {
        throw UnknownNode("no Q value for " + cell(ego_child, scenario));
    }
    return x;
}

bool ValueTable::has_value(int ego, int scenario) const {
    const std::size_t i = static_cast<std::size_t>(ego) * scenario_stride + static_cast<std::size_t>(scenario);
    return ego >= 0 && scenario >= 0 && static_cast<std::size_t>(scenario) < scenario_stride && i < v.size() &&
           !std::isnan(v[i]);
}

bool ValueTable::has_q(int ego_child, int scenario) const {
    const std::size_t i = static_cast<std::size_t>(ego_child) * scenario_stride + static_cast<std::size_t>(scenario);
    return ego_child >= 0 && scenario >= 0 && static_cast<std::size_t>(scenario) < scenario_stride && i < q.size() &&
           !std::isnan(q[i]);
}

void PolicyTable::resize(std::size_t ego_nodes, std::size_t scenario_nodes) {
    scenario_stride = scenario_nodes;
    choice.assign(ego_nodes * scenario_nodes, -1);
}

bool PolicyTable::has(int ego, int scenario) const {
    if (ego < 0 || scenario < 0 || static_cast<std::size_t>(scenario) >= scenario_stride) {
        return false;
    }
    const std::size_t i = static_cast<std::size_t>(ego) * scenario_stride + static_cast<std::size_t>(scenario);
    return i < choice.size() && choice[i] >= 0;
}

int PolicyTable::at(int ego, int scenario) const {
    if (!has(ego, scenario)) {
        throw UnknownNode("policy undefined at " + cell(ego, scenario));
    }
    return choice[static_cast<std::size_t>(ego) * scenario_stride + static_cast<std::size_t>(scenario)];
}

void PolicyTable::set(int ego, int scenario, int child) {
    if (ego < 0 || scenario < 0 || static_cast<std::size_t>(scenario) >= scenario_stride) {
        throw UnknownNode("policy index out of range " + cell(ego, scenario));
    }
    choice.at(static_cast<std::size_t>(ego) * scenario_stride + static_cast<std::size_t>(scenario)) = child;
}

// ---------------------------------------------------------------- DP

PolicySolution solve_policy(const TrajectoryTree& tree, const ScenarioSource& source, const CostTensor& costs,
                            const SolveOptions& options) {
    check_structure(tree, source);
    const int n_stages = tree.num_stages();
    const std::size_t stride = source.max_scenario_nodes();
    const std::size_t n_ego = tree.nodes.size();

    PolicySolution sol;
    sol.values.scenario_stride = stride;
    sol.values.v.assign(n_ego * stride, kNaN);
    sol.values.q.assign(n_ego * stride, kNaN);
    sol.policy.resize(n_ego, stride);

    auto v_at = [&](int r, int e) -> double& { return sol.values.v[static_cast<std::size_t>(r) * stride + static_cast<std::size_t>(e)]; };
    auto q_at = [&](int r, int e) -> double& { return sol.values.q[static_cast<std::size_t>(r) * stride + static_cast<std::size_t>(e)]; };

    // stage-ordered ids make a reverse sweep a backward-in-stage sweep
    std::vector<std::vector<int>> by_stage(static_cast<std::size_t>(n_stages) + 1);
    for (const TreeNode& n : tree.nodes) {
        by_stage.at(static_cast<std::size_t>(n.stage)).push_back(n.id);
    }
    for (int stage = n_stages; stage >= 0; --stage) {
        for (int r : by_stage[static_cast<std::size_t>(stage)]) {
            const TreeNode& rn = tree.node(r);
            const ScenarioTree& st = source.tree_for(r);
            for (const ScenarioNode& en : st.nodes) {
                if (en.stage != stage) {
                    continue;
                }
                const int e = en.id;
                const double l = costs.at(r, e);
                if (stage == n_stages || rn.children.empty()) {
                    if (stage != n_stages) {
                        throw StructureError("ego node " + std::to_string(r) + " is a leaf before the last stage");
                    }
                    v_at(r, e) = l;
                    continue;
                }
                double best = std::numeric_limits<double>::infinity();
                int best_child = -1;
                for (int c : rn.children) {
                    const ScenarioNode& shared = shared_node(source, st, c, e);
                    const ScenarioTree& ct = source.tree_for(c);
                    double expect = 0.0;
                    for (int e_next : shared.children) {
                        expect += ct.node(e_next).probability * v_at(c, e_next);
                    }
                    const double q = l + expect;
                    q_at(c, e) = q;
                    const bool better = options.prefer_highest_id_on_ties ? q <= best : q < best;
                    if (better) {
                        best = q;
                        best_child = c;
                    }
                }
                v_at(r, e) = best;
                sol.policy.set(r, e, best_child);
            }
        }
    }
    sol.root_value = sol.values.value(0, 0);
    return sol;
}

PolicySolution solve_policy(const TrajectoryTree& tree, const ScenarioTree& scenario, const CostTensor& costs,
                            const SolveOptions& options) {
    return solve_policy(tree, ScenarioSource::single(scenario), costs, options);
}

PolicySolution solve_policy_ec(const TrajectoryTree& tree, const ECPredictionEnsemble& ensemble,
                               const CostTensor& costs, const SolveOptions& options) {
    return solve_policy(tree, ScenarioSource::ensemble(ensemble), costs, options);
}

// ---------------------------------------------------------------- oracle

double evaluate_policy(const TrajectoryTree& tree, const ScenarioSource& source, const CostTensor& costs,
                       const PolicyTable& policy) {
    check_structure(tree, source);
    const int n_stages = tree.num_stages();
    double total = 0.0;
    // Walks every scenario root-to-leaf path, following the policy, and adds
    // path probability times the path's summed stage costs.
    std::function<void(int, int, double, double)> walk = [&](int r, int e, double weight, double acc) {
        const ScenarioTree& st = source.tree_for(r);
        acc += costs.at(r, e);
        if (st.node(e).stage == n_stages) {
            total += weight * acc;
            return;
        }
        const int c = policy.at(r, e);
        const ScenarioTree& ct = source.tree_for(c);
        for (int e_next : ct.node(e).children) {
            walk(c, e_next, weight * ct.node(e_next).probability, acc);
        }
    };
    walk(0, 0, 1.0, 0.0);
    return total;
}

double count_policies(const TrajectoryTree& tree, const ScenarioSource& source) {
    const int n_stages = tree.num_stages();
    std::function<double(int, int)> count = [&](int r, int e) -> double {
        if (tree.node(r).stage == n_stages) {
            return 1.0;
        }
        double total = 0.0;
        for (int c : tree.node(r).children) {
            double prod = 1.0;
            for (int e_next : source.tree_for(c).node(e).children) {
                prod *= count(c, e_next);
            }
            total += prod;
        }
        return total;
    };
    return count(0, 0);
}

BruteForceResult brute_force_value(const TrajectoryTree& tree, const ScenarioSource& source,
                                   const CostTensor& costs, double cap) {
    check_structure(tree, source);
    const double total = count_policies(tree, source);
    if (total > cap) {
        throw TooLarge("brute force would enumerate " + std::to_string(total) + " policies (cap " +
                       std::to_string(cap) + ")");
    }
    const int n_stages = tree.num_stages();
    BruteForceResult best;
    best.value = std::numeric_limits<double>::infinity();
    PolicyTable current;
    current.resize(tree.nodes.size(), source.max_scenario_nodes());

    // Pending decision points in discovery order; each recursion level fixes
    // one of them and appends the points its choice makes reachable.
    std::vector<std::pair<int, int>> pending{{0, 0}};
    std::function<void(std::size_t)> enumerate = [&](std::size_t k) {
        if (k == pending.size()) {
            const double v = evaluate_policy(tree, source, costs, current);
            best.policies_enumerated += 1.0;
            if (v < best.value - 1e-12 * (1.0 + std::fabs(best.value)) || best.policy.choice.empty()) {
                best.value = v;
                best.policy = current;
            }
            return;
        }
        const auto [r, e] = pending[k];
        if (tree.node(r).stage == n_stages) {
            enumerate(k + 1);
            return;
        }
        for (int c : tree.node(r).children) {
            current.set(r, e, c);
            const std::size_t mark = pending.size();
            for (int e_next : source.tree_for(c).node(e).children) {
                pending.emplace_back(c, e_next);
            }
            enumerate(k + 1);
            pending.resize(mark);
        }
        current.set(r, e, -1);
    };
    enumerate(0);
    return best;
}

BruteForceResult brute_force_value(const TrajectoryTree& tree, const ScenarioTree& scenario,
                                   const CostTensor& costs, double cap) {
    return brute_force_value(tree, ScenarioSource::single(scenario), costs, cap);
}

BruteForceResult brute_force_value(const TrajectoryTree& tree, const ECPredictionEnsemble& ensemble,
                                   const CostTensor& costs, double cap) {
    return brute_force_value(tree, ScenarioSource::ensemble(ensemble), costs, cap);
}

std::vector<std::pair<int, int>> reachable_decisions(const TrajectoryTree& tree, const ScenarioSource& source,
                                                     const PolicyTable& policy) {
    const int n_stages = tree.num_stages();
    std::vector<std::pair<int, int>> out;
    std::vector<std::pair<int, int>> queue{{0, 0}};
    for (std::size_t k = 0; k < queue.size(); ++k) {
        const auto [r, e] = queue[k];
        if (tree.node(r).stage == n_stages) {
            continue;
        }
        out.emplace_back(r, e);
        const int c = policy.at(r, e);
        for (int e_next : source.tree_for(c).node(e).children) {
            queue.emplace_back(c, e_next);
        }
    }
    return out;
}

bool same_reachable_policy(const TrajectoryTree& tree, const ScenarioSource& source, const PolicyTable& a,
                           const PolicyTable& b) {
    for (const auto& [r, e] : reachable_decisions(tree, source, a)) {
        if (!b.has(r, e) || a.at(r, e) != b.at(r, e)) {
            return false;
        }
    }
    return true;
}

Trajectory execute_policy(const TrajectoryTree& tree, const ScenarioSource& source, const PolicyTable& policy,
                          std::span<const int> observed) {
    if (observed.empty()) {
        throw UnknownNode("execute_policy: empty observation sequence");
    }
    int r = 0;
    Trajectory out = tree.root().segment;
    int prev_e = -1;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const ScenarioTree& st = source.tree_for(r);
        const int e = observed[i];
        if (!st.contains(e) || st.node(e).stage != static_cast<int>(i) || st.node(e).parent != prev_e) {
            throw UnknownNode("execute_policy: scenario node " + std::to_string(e) +
                              " is not on a scenario path at stage " + std::to_string(i));
        }
        prev_e = e;
        if (tree.node(r).children.empty()) {
            break;
        }
        r = policy.at(r, e);
        append_trajectory(out, tree.node(r).segment);
    }
    return out;
}

}  // namespace tpp
