#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tpp/ego_sampler.hpp"
#include "tpp/scenario_prediction.hpp"

namespace tpp {

/// Stage costs L_i(r, e) on same-stage (ego node, scenario node) pairs.
/// Dense storage; unset cells are NaN and reading one is an error.
class CostTensor {
  public:
    CostTensor() = default;
    CostTensor(std::size_t ego_nodes, std::size_t scenario_nodes);

    void set(int ego, int scenario, double value);
    double at(int ego, int scenario) const;
    bool has(int ego, int scenario) const;
    std::size_t ego_nodes() const { return ego_nodes_; }
    std::size_t scenario_nodes() const { return scenario_nodes_; }
    CostTensor scaled(double factor) const;

  private:
    std::size_t index(int ego, int scenario) const;

    std::size_t ego_nodes_ = 0;
    std::size_t scenario_nodes_ = 0;
    std::vector<double> values_;
};

/// Resolves the scenario tree seen from an ego node: the one shared tree in
/// the plain form, e^i(r^i) via the representative mode in the EC form.
class ScenarioSource {
  public:
    static ScenarioSource single(const ScenarioTree& tree);
    static ScenarioSource ensemble(const ECPredictionEnsemble& ensemble);

    const ScenarioTree& tree_for(int ego_node) const;
    bool is_ensemble() const { return ensemble_ != nullptr; }
    bool validated() const { return ensemble_ == nullptr || ensemble_->validated; }
    std::size_t max_scenario_nodes() const;

  private:
    const ScenarioTree* single_ = nullptr;
    const ECPredictionEnsemble* ensemble_ = nullptr;
};

struct ValueTable {
    std::size_t scenario_stride = 0;
    std::vector<double> v;  // V(r^i, e^i)
    std::vector<double> q;  // Q(r^{i+1}, e^i), stored on the child ego node

    double value(int ego, int scenario) const;
    double q_value(int ego_child, int scenario) const;
    bool has_value(int ego, int scenario) const;
    bool has_q(int ego_child, int scenario) const;
};

struct PolicyTable {
    std::size_t scenario_stride = 0;
    std::vector<int> choice;  // -1 where undefined

    int at(int ego, int scenario) const;
    bool has(int ego, int scenario) const;
    void set(int ego, int scenario, int child);
    void resize(std::size_t ego_nodes, std::size_t scenario_nodes);
};

struct PolicySolution {
    ValueTable values;
    PolicyTable policy;
    double root_value = 0.0;
};

struct SolveOptions {
    /// Debug knob for exercising the verification path; production code keeps
    /// lowest-id tie-breaking.
    bool prefer_highest_id_on_ties = false;
};

/// Backward Bellman recursion over the two trees.
PolicySolution solve_policy(const TrajectoryTree& tree, const ScenarioTree& scenario, const CostTensor& costs,
                            const SolveOptions& options = {});
PolicySolution solve_policy_ec(const TrajectoryTree& tree, const ECPredictionEnsemble& ensemble,
                               const CostTensor& costs, const SolveOptions& options = {});
PolicySolution solve_policy(const TrajectoryTree& tree, const ScenarioSource& source, const CostTensor& costs,
                            const SolveOptions& options = {});

/// Exact expected cumulative cost of a policy, summed over every scenario
/// root-to-leaf path reachable under it.
double evaluate_policy(const TrajectoryTree& tree, const ScenarioSource& source, const CostTensor& costs,
                       const PolicyTable& policy);

/// Number of distinct deterministic policies over reachable decisions.
double count_policies(const TrajectoryTree& tree, const ScenarioSource& source);

struct BruteForceResult {
    double value = 0.0;
    PolicyTable policy;
    double policies_enumerated = 0.0;
};

inline constexpr double kDefaultPolicyCap = 1e7;

/// Enumerates every policy and evaluates each one from scratch. Throws
/// TooLarge when the count exceeds `cap`.
BruteForceResult brute_force_value(const TrajectoryTree& tree, const ScenarioSource& source,
                                   const CostTensor& costs, double cap = kDefaultPolicyCap);
BruteForceResult brute_force_value(const TrajectoryTree& tree, const ScenarioTree& scenario,
                                   const CostTensor& costs, double cap = kDefaultPolicyCap);
BruteForceResult brute_force_value(const TrajectoryTree& tree, const ECPredictionEnsemble& ensemble,
                                   const CostTensor& costs, double cap = kDefaultPolicyCap);

/// (ego, scenario) decision points visited by the policy, in visit order.
std::vector<std::pair<int, int>> reachable_decisions(const TrajectoryTree& tree, const ScenarioSource& source,
                                                     const PolicyTable& policy);

/// True if both policies pick the same child at every decision reachable
/// under `a` (and `b` is then reachable on the same set).
bool same_reachable_policy(const TrajectoryTree& tree, const ScenarioSource& source, const PolicyTable& a,
                           const PolicyTable& b);

/// Concatenates the ego segments selected by the policy along the observed
/// scenario path e^0, e^1, ... (one id per executed stage).
Trajectory execute_policy(const TrajectoryTree& tree, const ScenarioSource& source, const PolicyTable& policy,
                          std::span<const int> observed);

}  // namespace tpp
