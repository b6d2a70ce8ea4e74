#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tpp/planner.hpp"
#include "tpp/world_model.hpp"

namespace tpp {

struct OuParams {
    double theta = 0.5;
    double mu = 0.0;
    double sigma = 1.0;
};

/// One Euler-Maruyama step of dx = theta (mu - x) dt + sigma dW.
double ou_step(double x, const OuParams& params, double dt, double noise);

struct SpawnConfig {
    bool enabled = true;
    double rate_per_minute = 6.0;
    double radius_min = 20.0;
    double radius_max = 50.0;
    int max_agents = 8;
};

struct SimConfig {
    double total_duration = 20.0;
    double sim_dt = 0.1;
    double replan_period = 2.0;
    SpawnConfig spawn;
    OuParams ou;
    std::uint64_t seed = 0;
    double despawn_radius = 150.0;
    int history_length = 10;

    void validate() const;
};

struct LaneChangeBehavior {
    int target_lane = -1;  // -1 disables
    double probability = 0.0;
    double earliest = 0.0;  // s, window for the maneuver start
    double latest = 0.0;
    double speed_after = -1.0;  // desired speed once in the target lane; < 0 keeps it
};

struct AgentBehavior {
    double desired_speed = -1.0;  // < 0: follow the lane speed limit
    double lookahead_time = 1.0;
    double min_lookahead = 6.0;
    double speed_gain = 0.6;
    double headway = 15.0;
    double lane_half_width = 1.8;
    LaneChangeBehavior lane_change;
    DynamicsLimits limits;
};

struct ScenarioAgent {
    AgentId id = 0;
    AgentState state;
    Footprint footprint;
    AgentBehavior behavior;
};

struct Scenario {
    std::string name;
    std::shared_ptr<const LaneGraph> map;
    AgentState ego;
    Footprint ego_footprint;
    Goal goal;
    std::vector<ScenarioAgent> agents;

    /// Throws ScenarioError.
    void validate() const;
};

/// Per-agent mutable driving state: current lane, OU perturbation of the
/// target speed and the agent's private random stream.
struct AgentDriverState {
    AgentId id = 0;
    int lane_id = -1;
    double ou = 0.0;
    std::mt19937_64 rng;
    bool change_pending = false;
    double change_time = 0.0;
    int change_target = -1;
    bool changed = false;
};

AgentDriverState make_driver_state(const ScenarioAgent& agent, const LaneGraph& map, std::uint64_t seed);

/// Pure-pursuit lane following toward speed_limit + OU, with front-gap
/// braking against `others`. Advances the OU state by one step.
UnicycleInput agent_policy_step(const AgentState& agent, const LaneGraph& map, AgentDriverState& driver,
                                const AgentBehavior& behavior, const OuParams& ou, double t, double dt,
                                std::span<const AgentState> others);

struct AgentSnapshot {
    AgentId id = 0;
    AgentState state;
    Footprint footprint;
};

struct StepEvents {
    std::vector<AgentId> collision;
    bool offroad = false;
    std::vector<AgentId> spawn;
    std::vector<AgentId> despawn;
    std::string planner_error;
};

struct StepRecord {
    double t = 0.0;
    AgentState ego;
    std::vector<AgentSnapshot> agents;
    int plan_id = -1;   // -1 while the safety fallback is active
    int ego_node = -1;  // executing node of the active trajectory tree
    StepEvents events;
};

struct TraceMetadata {
    std::string scenario;
    std::string planner;
    std::uint64_t seed = 0;
    std::string config_hash;
    double dt = 0.1;
    Footprint ego_footprint;
};

struct SimTrace {
    TraceMetadata meta;
    std::vector<StepRecord> steps;
};

/// Among `candidates`, the scenario node whose agents' final predicted
/// states are closest (summed distance) to the observed ones.
int identify_branch(const ScenarioTree& tree, std::span<const int> candidates,
                    std::span<const AgentSnapshot> observed);

SimTrace run_closed_loop(const Scenario& scenario, const PlanningSettings& settings, PlannerKind planner,
                         const SimConfig& config, const std::string& config_hash = "");

}  // namespace tpp
