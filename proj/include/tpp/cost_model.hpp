#pragma once

#include <map>
#include <span>
#include <variant>
#include <vector>

#include "tpp/scenario_prediction.hpp"
#include "tpp/world_model.hpp"

namespace tpp {

/// Either a target point or a route given as a lane-id sequence.
struct Goal {
    std::variant<std::monostate, Vec2, std::vector<int>> target;

    bool empty() const { return std::holds_alternative<std::monostate>(target); }
};

struct CostWeights {
    double w_collision = 20.0;
    double w_lane = 0.5;
    double w_goal = 1.0;
    double w_comfort = 0.05;
    double collision_scale = 1.0;    // m
    double horizon_distance = 60.0;  // m, normalizes the goal term
    Goal goal;

    void validate() const;
};

struct StageCost {
    double value = 0.0;
};

struct EnvAgent {
    AgentId id = 0;
    AgentState state;
    Footprint footprint;
};

/// Remaining distance from `pos` to the goal (0 without a goal).
double distance_to_goal(Vec2 pos, const Goal& goal, const LaneGraph* map);

/// l(s, s_e). `motion` carries the ego acceleration and yaw rate at this
/// instant for the comfort term.
double running_cost(const AgentState& ego, const Footprint& ego_fp, std::span<const EnvAgent> env,
                    const LaneGraph* map, const CostWeights& weights, UnicycleInput motion = {});

/// Finite-differenced acceleration and yaw rate at every sample (central
/// inside, one-sided at the ends).
std::vector<UnicycleInput> finite_difference_inputs(const Trajectory& traj);

/// Trapezoidal integral of running_cost over the shared samples of the ego
/// segment and the scenario node.
StageCost stage_cost(const Trajectory& ego_segment, const Footprint& ego_fp, const ScenarioNode& env_node,
                     const std::map<AgentId, Footprint>& footprints, const LaneGraph* map,
                     const CostWeights& weights);

/// Trapezoid rule on uniformly spaced values.
double trapezoid(std::span<const double> values, double dt);

}  // namespace tpp
