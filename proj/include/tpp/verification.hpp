#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "tpp/baseline_planners.hpp"
#include "tpp/policy_dp.hpp"
#include "tpp/scenario_prediction.hpp"

namespace tpp {

/// Structure-only trees (no trajectories) with explicit stage costs.
struct DpInstance {
    std::uint64_t seed = 0;
    TrajectoryTree tree;
    ScenarioTree scenario;
    CostTensor costs;
};

/// Up to `max_stages` stages after the root, 1..max_branching children per
/// node in both trees, costs uniform on [0, 10], random normalized
/// probabilities. With `integer_costs` every cost is drawn from {0, 1, 2},
/// which makes exact ties common.
DpInstance random_dp_instance(std::uint64_t seed, int max_stages = 3, int max_branching = 3,
                              bool integer_costs = false);

/// Nudge, observe, then pass or brake: one stage-1 ego child, a 0.5/0.5
/// scenario split, and stage-2 costs pass 10 / brake 1 in branch A and
/// pass 0 / brake 1 in branch B.
DpInstance cut_in_instance();

/// Builds a structure-only tree from per-node child counts in BFS order.
TrajectoryTree tree_from_shape(const std::vector<int>& child_counts, const StageSchedule& schedule);

/// Sampled ego tree, kinematic ensemble, uniform random costs.
struct EcInstance {
    std::uint64_t seed = 0;
    std::shared_ptr<const LaneGraph> map;
    std::vector<AgentHistory> scene;
    TrajectoryTree tree;
    ECPredictionEnsemble ensemble;
    CostTensor costs;
};

EcInstance random_ec_instance(std::uint64_t seed, int max_stages = 3, int max_branching = 3);

struct ConsistencyCase {
    std::uint64_t seed = 0;
    std::shared_ptr<const LaneGraph> map;
    std::vector<AgentHistory> scene;
    TrajectoryTree tree;
    int branching_factor = 2;
};

ConsistencyCase random_consistency_case(std::uint64_t seed);
/// A tree whose two stage-2 leaves share their stage-1 parent, so a
/// predictor that peeks at the whole ego future must disagree on stage 1.
ConsistencyCase adversarial_consistency_case();

nlohmann::json dp_instance_to_json(const DpInstance& inst);

struct SuiteResult {
    std::string name;
    int passed = 0;
    int failed = 0;
    int skipped = 0;
    std::string first_failure;  // JSON, enough to replay the instance

    bool ok() const { return failed == 0; }
};

struct VerifyOptions {
    int instances = 200;
    int spline_pairs = 1000;
    double cap = kDefaultPolicyCap;
    std::uint64_t seed = 0;
    bool inject_wrong_tiebreak = false;
};

/// Single-tree and ego-conditioned DP against the brute-force oracle, plus
/// tie-heavy instances where the extracted policy is replayed against the
/// oracle's canonical one.
std::vector<SuiteResult> verify_dp_oracle(const VerifyOptions& options);
SuiteResult verify_causal_consistency(const VerifyOptions& options);
SuiteResult verify_splines(const VerifyOptions& options);

/// Max absolute residual of the eight boundary conditions.
double spline_boundary_residual(const SplineSegment& s, const AgentState& start, const AgentState& terminal);

}  // namespace tpp
