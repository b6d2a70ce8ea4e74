#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "tpp/common.hpp"

namespace tpp {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Kinematic state of a vehicle: position, speed (>= 0), heading in (-pi, pi].
struct AgentState {
    double x = 0.0;
    double y = 0.0;
    double v = 0.0;
    double psi = 0.0;

    Vec2 position() const { return {x, y}; }
    friend bool operator==(const AgentState&, const AgentState&) = default;
};

struct UnicycleInput {
    double a = 0.0;
    double omega = 0.0;
};

struct DynamicsLimits {
    double a_max = 3.0;
    double a_min = -6.0;
    double omega_max = 0.5;
    double v_max = 30.0;
    double kappa_max = 0.3;

    void validate() const;
    UnicycleInput clamp(UnicycleInput input) const;
};

/// Uniformly sampled motion; samples[k] is the state at t0 + k * dt.
struct Trajectory {
    double t0 = 0.0;
    double dt = 0.1;
    std::vector<AgentState> samples;

    double t_end() const { return t0 + dt * static_cast<double>(samples.empty() ? 0 : samples.size() - 1); }
    const AgentState& front() const { return samples.front(); }
    const AgentState& back() const { return samples.back(); }
    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Appends `tail` to `head`, dropping the duplicated join sample.
void append_trajectory(Trajectory& head, const Trajectory& tail);

struct Footprint {
    double length = 4.5;
    double width = 1.8;

    void validate() const;
    friend bool operator==(const Footprint&, const Footprint&) = default;
};

using Polyline = std::vector<Vec2>;
using Polygon = std::vector<Vec2>;

struct Lane {
    int id = 0;
    Polyline centerline;
    double speed_limit = 13.9;
    std::vector<int> successors;
};

struct LaneGraph {
    std::vector<Lane> lanes;
    std::vector<Polygon> drivable_area;

    /// Throws ValidationError on degenerate centerlines, self-intersecting
    /// polygons or duplicate lane ids.
    void validate() const;
    const Lane* find(int lane_id) const;
};

struct LaneProjection {
    double arc_length = 0.0;
    double lateral_offset = 0.0;
    double heading = 0.0;
    double distance = 0.0;  // unsigned distance to the nearest point
};

struct LanePoint {
    Vec2 position;
    double heading = 0.0;
};

double polyline_length(const Polyline& line);
LaneProjection project_to_lane(Vec2 pos, const Polyline& centerline);

/// Point at arc length `s`; before the start or past the end the first/last
/// segment is extended linearly.
LanePoint point_on_polyline(const Polyline& line, double s);

/// Like point_on_polyline, but past the end of the lane continues onto the
/// first successor chain before extrapolating.
LanePoint point_along_route(const LaneGraph& map, int lane_id, double s);

struct NearestLane {
    const Lane* lane = nullptr;
    LaneProjection projection;
};

/// Nearest lane by centerline distance; ties go to the lane listed first.
std::optional<NearestLane> nearest_lane(const LaneGraph& map, Vec2 pos);

/// RK4 of x' = v cos psi, y' = v sin psi, v' = a, psi' = omega, using fixed
/// internal substeps no longer than 0.02 s. Speed is held in [0, v_max].
AgentState integrate_unicycle(const AgentState& state, UnicycleInput input, double dt,
                              const DynamicsLimits& limits = {});

std::array<Vec2, 4> footprint_corners(const AgentState& state, const Footprint& fp);

/// Separating-axis test on the four face normals of two oriented boxes.
bool check_collision(const AgentState& ego, const Footprint& ego_fp, const AgentState& other,
                     const Footprint& other_fp);

/// Euclidean gap between two oriented boxes; 0 when they overlap.
double box_clearance(const AgentState& a, const Footprint& a_fp, const AgentState& b, const Footprint& b_fp);

/// Ray casting; points on the boundary count as inside.
bool point_in_polygon(Vec2 p, const Polygon& poly);

bool is_offroad(const AgentState& state, const Footprint& fp, const LaneGraph& map);

}  // namespace tpp
