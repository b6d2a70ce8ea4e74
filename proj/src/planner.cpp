#include "tpp/planner.hpp"

#include <algorithm>

namespace tpp {

std::string to_string(PlannerKind kind) {
    switch (kind) {
        case PlannerKind::tpp:
            return "tpp";
        case PlannerKind::ncr:
            return "ncr";
        case PlannerKind::ncg:
            return "ncg";
    }
    return "unknown";
}

PlannerKind parse_planner_kind(const std::string& name) {
    if (name == "tpp") return PlannerKind::tpp;
    if (name == "ncr") return PlannerKind::ncr;
    if (name == "ncg") return PlannerKind::ncg;
    throw ValidationError("unknown planner '" + name + "' (expected tpp, ncr or ncg)");
}

void PlanningSettings::validate() const {
    schedule.validate();
    sampler.validate();
    predictor.validate();
    weights.validate();
    if (branching_factor < 1) {
        throw ValidationError("branching_factor must be >= 1");
    }
}

CostTensor build_cost_tensor(const TrajectoryTree& tree, const ScenarioSource& source, const Footprint& ego_fp,
                             const LaneGraph* map, const CostWeights& weights) {
    CostTensor costs(tree.nodes.size(), source.max_scenario_nodes());
    for (const TreeNode& r : tree.nodes) {
        const ScenarioTree& st = source.tree_for(r.id);
        for (const ScenarioNode& e : st.nodes) {
            if (e.stage == r.stage) {
                costs.set(r.id, e.id, stage_cost(r.segment, ego_fp, e, st.footprints, map, weights).value);
            }
        }
    }
    return costs;
}

Plan make_plan(const PlanningProblem& problem, const PlanningSettings& settings, PlannerKind kind,
               std::uint64_t seed) {
    settings.validate();
    const LaneGraph* map = problem.map ? problem.map.get() : nullptr;
    Plan plan;
    plan.kind = kind;
    SamplerConfig sampler = settings.sampler;
    sampler.footprint = problem.ego_footprint;
    plan.tree = grow_tree(problem.ego, map, settings.schedule, sampler, hash_combine(seed, 1), problem.t0);
    const KinematicPredictor predictor(settings.predictor, problem.map);
    plan.ensemble =
        predict_ensemble(predictor, problem.agents, plan.tree, settings.branching_factor, hash_combine(seed, 2));

    CostWeights weights = settings.weights;
    weights.goal = problem.goal;
    const ScenarioSource source = plan.source();
    plan.costs = build_cost_tensor(plan.tree, source, problem.ego_footprint, map, weights);

    switch (kind) {
        case PlannerKind::tpp:
            plan.solution = solve_policy(plan.tree, source, plan.costs);
            plan.value = plan.solution.root_value;
            break;
        case PlannerKind::ncr:
            plan.fixed = plan_ncr(plan.tree, source, plan.costs, settings.ncr_objective);
            plan.value = plan.fixed.objective;
            break;
        case PlannerKind::ncg:
            plan.fixed = plan_ncg(plan.tree, source, plan.costs);
            plan.value = plan.fixed.objective;
            break;
    }
    return plan;
}

}  // namespace tpp
