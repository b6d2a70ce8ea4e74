#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tpp/baseline_planners.hpp"
#include "tpp/cost_model.hpp"
#include "tpp/ego_sampler.hpp"
#include "tpp/policy_dp.hpp"
#include "tpp/scenario_prediction.hpp"

namespace tpp {

enum class PlannerKind { tpp, ncr, ncg };

std::string to_string(PlannerKind kind);
PlannerKind parse_planner_kind(const std::string& name);

/// Everything the planning pipeline needs besides the world snapshot.
struct PlanningSettings {
    StageSchedule schedule;
    SamplerConfig sampler;
    KinematicPredictorConfig predictor;
    int branching_factor = 4;
    CostWeights weights;
    RobustObjective ncr_objective = RobustObjective::expectation;

    void validate() const;
};

struct PlanningProblem {
    double t0 = 0.0;
    AgentState ego;
    Footprint ego_footprint;
    std::vector<AgentHistory> agents;
    std::shared_ptr<const LaneGraph> map;
    Goal goal;
};

/// L_i(r, e) for every ego node and every same-stage node of the scenario
/// tree seen from it.
CostTensor build_cost_tensor(const TrajectoryTree& tree, const ScenarioSource& source, const Footprint& ego_fp,
                             const LaneGraph* map, const CostWeights& weights);

struct Plan {
    PlannerKind kind = PlannerKind::tpp;
    TrajectoryTree tree;
    ECPredictionEnsemble ensemble;
    CostTensor costs;
    PolicySolution solution;         // tpp only
    NonContingentPlan fixed;         // ncr / ncg only
    double value = 0.0;              // planner's own objective at the root

    ScenarioSource source() const { return ScenarioSource::ensemble(ensemble); }
};

/// Sampler, ego-conditioned prediction and cost evaluation are shared by all
/// three planners; only the final selection differs.
Plan make_plan(const PlanningProblem& problem, const PlanningSettings& settings, PlannerKind kind,
               std::uint64_t seed);

}  // namespace tpp
