#pragma once

#include <array>
#include <cstdint>
#include <variant>
#include <vector>

#include "tpp/world_model.hpp"

namespace tpp {

/// Durations of stages 0..N. Stage 0 holds the root node r^0.
struct StageSchedule {
    std::vector<double> stage_durations{0.1, 2.0, 2.0};
    double dt = 0.1;

    void validate() const;
    int num_stages() const { return static_cast<int>(stage_durations.size()) - 1; }  // N
    /// Start time of stage i relative to the root time.
    double stage_start(int stage) const;
    double stage_end(int stage) const { return stage_start(stage) + stage_durations.at(static_cast<std::size_t>(stage)); }
    int stage_steps(int stage) const;
    double horizon() const;
    friend bool operator==(const StageSchedule&, const StageSchedule&) = default;
};

struct AccelSteerTerminal {
    double a = 0.0;
    double omega = 0.0;
};

struct LaneTargetTerminal {
    int lane_id = 0;
    double arc_length = 0.0;
    double lateral_offset = 0.0;
    double target_speed = 0.0;
};

/// What produced a terminal state.
using TerminalSpec = std::variant<AccelSteerTerminal, LaneTargetTerminal>;

struct TerminalCandidate {
    AgentState state;
    TerminalSpec spec;
};

/// Pair of cubics X(t), Y(t) on [0, duration]; coefficients are in
/// ascending powers of t.
struct SplineSegment {
    std::array<double, 4> coeffs_x{};
    std::array<double, 4> coeffs_y{};
    double duration = 0.0;

    Vec2 position(double t) const;
    Vec2 velocity(double t) const;
    Vec2 acceleration(double t) const;
    friend bool operator==(const SplineSegment&, const SplineSegment&) = default;
};

/// Closed-form Hermite fit matching position and velocity vector at both ends.
SplineSegment fit_spline(const AgentState& start, const AgentState& terminal, double duration, double dt = 0.1);

struct SamplerConfig {
    std::vector<double> accel_grid{-4.0, -2.0, 0.0, 2.0};
    std::vector<double> yaw_rate_grid{-0.3, -0.1, 0.0, 0.1, 0.3};
    std::vector<double> target_speeds{0.0, 5.0, 10.0, 15.0};
    std::vector<double> lateral_offsets{-1.0, 0.0, 1.0};
    double lateral_band = 1.0;
    double lane_search_radius = 6.0;  // lanes farther than this from the start get no targets
    int max_children = 4;
    double dedup_distance = 0.1;
    double dedup_heading = 0.05;
    DynamicsLimits limits;
    // With a map that has a drivable area, drop segments whose footprint
    // leaves it at any sample.
    bool keep_on_road = true;
    Footprint footprint;

    void validate() const;
};

/// Accel-steer rollouts plus (when a map is given) lane targets, with
/// near-duplicates removed. Grid entries outside the limits are skipped.
std::vector<TerminalCandidate> sample_terminal_candidates(const AgentState& current, const LaneGraph* map,
                                                          double duration, const SamplerConfig& config);
std::vector<AgentState> sample_terminals(const AgentState& current, const LaneGraph* map, double duration,
                                         const SamplerConfig& config);

/// Samples a spline at dt from t = 0 to duration. Sample 0 is `start`
/// verbatim so that children join their parent exactly.
Trajectory sample_spline(const SplineSegment& spline, const AgentState& start, double t0, double dt);

/// True iff every sample respects speed, reversal, curvature and
/// longitudinal acceleration limits (analytic spline derivatives).
bool spline_is_feasible(const SplineSegment& spline, const AgentState& start, double dt,
                        const DynamicsLimits& limits);

struct TreeNode {
    int id = 0;
    int stage = 0;
    int parent = -1;
    std::vector<int> children;
    Trajectory segment;
    SplineSegment spline;
    TerminalSpec origin;
};

struct TrajectoryTree {
    std::vector<TreeNode> nodes;  // ids are indices, assigned stage by stage
    StageSchedule schedule;
    bool truncated = false;  // some stage had no feasible child anywhere

    int num_stages() const { return schedule.num_stages(); }
    const TreeNode& node(int id) const { return nodes.at(static_cast<std::size_t>(id)); }
    const TreeNode& root() const { return nodes.front(); }
    std::vector<int> nodes_at_stage(int stage) const;
    std::vector<int> leaves() const;
    /// Root-to-node id sequence.
    std::vector<int> path_to(int id) const;

    /// Throws StructureError describing the first broken invariant.
    void check_invariants(int max_children = -1) const;
};

/// Grows the ego trajectory tree stage by stage. Children beyond
/// max_children are dropped by a uniform draw keyed on (seed, parent id).
TrajectoryTree grow_tree(const AgentState& root_state, const LaneGraph* map, const StageSchedule& schedule,
                         const SamplerConfig& config, std::uint64_t seed, double t0 = 0.0);

}  // namespace tpp
