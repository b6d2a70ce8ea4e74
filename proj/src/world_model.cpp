#include "tpp/world_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

namespace tpp {
namespace {

constexpr double kMaxSubstep = 0.02;

struct Deriv {
    double x, y, v, psi;
};

Deriv unicycle_rhs(double v, double psi, UnicycleInput u, const DynamicsLimits& limits) {
    const double v_eff = std::clamp(v, 0.0, limits.v_max);
    double v_dot = u.a;
    if ((v <= 0.0 && u.a < 0.0) || (v >= limits.v_max && u.a > 0.0)) {
        v_dot = 0.0;
    }
    return {v_eff * std::cos(psi), v_eff * std::sin(psi), v_dot, u.omega};
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = dot(ab, ab);
    double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return norm(p - (a + t * ab));
}

bool on_segment(Vec2 p, Vec2 a, Vec2 b) {
    constexpr double eps = 1e-12;
    const Vec2 ab = b - a;
    const double scale = std::max(1.0, norm(ab));
    if (std::fabs(cross(ab, p - a)) > eps * scale * scale) {
        return false;
    }
    return dot(p - a, p - b) <= eps * scale * scale;
}

int orientation(Vec2 a, Vec2 b, Vec2 c) {
    const double v = cross(b - a, c - a);
    if (v > 0.0) return 1;
    if (v < 0.0) return -1;
    return 0;
}

bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
    const int o1 = orientation(p1, p2, q1);
    const int o2 = orientation(p1, p2, q2);
    const int o3 = orientation(q1, q2, p1);
    const int o4 = orientation(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(q1, p1, p2)) return true;
    if (o2 == 0 && on_segment(q2, p1, p2)) return true;
    if (o3 == 0 && on_segment(p1, q1, q2)) return true;
    if (o4 == 0 && on_segment(p2, q1, q2)) return true;
    return false;
}

bool polygon_is_simple(const Polygon& poly) {
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a1 = poly[i];
        const Vec2 a2 = poly[(i + 1) % n];
        for (std::size_t j = i + 1; j < n; ++j) {
            // adjacent edges share a vertex by construction
            if (j == i + 1 || (i == 0 && j == n - 1)) {
                continue;
            }
            if (segments_intersect(a1, a2, poly[j], poly[(j + 1) % n])) {
                return false;
            }
        }
    }
    return true;
}

// Projection of box corners onto an axis.
std::pair<double, double> project_box(const std::array<Vec2, 4>& corners, Vec2 axis) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const Vec2& c : corners) {
        const double p = dot(c, axis);
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    return {lo, hi};
}

}  // namespace

void DynamicsLimits::validate() const {
    if (!(a_min < 0.0 && a_max > 0.0)) {
        throw ValidationError("DynamicsLimits: require a_min < 0 < a_max");
    }
    if (!(omega_max > 0.0 && v_max > 0.0 && kappa_max > 0.0)) {
        throw ValidationError("DynamicsLimits: omega_max, v_max and kappa_max must be positive");
    }
}

UnicycleInput DynamicsLimits::clamp(UnicycleInput input) const {
    return {std::clamp(input.a, a_min, a_max), std::clamp(input.omega, -omega_max, omega_max)};
}

void append_trajectory(Trajectory& head, const Trajectory& tail) {
    if (head.samples.empty()) {
        head = tail;
        return;
    }
    if (tail.samples.empty()) {
        return;
    }
    head.samples.insert(head.samples.end(), tail.samples.begin() + 1, tail.samples.end());
}

void Footprint::validate() const {
    if (!(length > 0.0 && width > 0.0)) {
        throw ValidationError("Footprint: length and width must be positive");
    }
}

void LaneGraph::validate() const {
    std::set<int> ids;
    for (const Lane& lane : lanes) {
        if (!ids.insert(lane.id).second) {
            throw ValidationError("LaneGraph: duplicate lane id " + std::to_string(lane.id));
        }
        if (lane.centerline.size() < 2 || !(polyline_length(lane.centerline) > 0.0)) {
            throw ValidationError("LaneGraph: lane " + std::to_string(lane.id) +
                                  " needs >= 2 points and positive length");
        }
        if (!(lane.speed_limit > 0.0)) {
            throw ValidationError("LaneGraph: lane " + std::to_string(lane.id) + " has non-positive speed limit");
        }
    }
    for (const Lane& lane : lanes) {
        for (int succ : lane.successors) {
            if (!ids.contains(succ)) {
                throw ValidationError("LaneGraph: lane " + std::to_string(lane.id) + " has unknown successor " +
                                      std::to_string(succ));
            }
        }
    }
    for (std::size_t i = 0; i < drivable_area.size(); ++i) {
        if (drivable_area[i].size() < 3) {
            throw ValidationError("LaneGraph: drivable polygon " + std::to_string(i) + " has < 3 vertices");
        }
        if (!polygon_is_simple(drivable_area[i])) {
            throw ValidationError("LaneGraph: drivable polygon " + std::to_string(i) + " is self-intersecting");
        }
    }
}

const Lane* LaneGraph::find(int lane_id) const {
    for (const Lane& lane : lanes) {
        if (lane.id == lane_id) {
            return &lane;
        }
    }
    return nullptr;
}

double polyline_length(const Polyline& line) {
    double total = 0.0;
    for (std::size_t i = 1; i < line.size(); ++i) {
        total += norm(line[i] - line[i - 1]);
    }
    return total;
}

LaneProjection project_to_lane(Vec2 pos, const Polyline& centerline) {
    LaneProjection best;
    best.distance = std::numeric_limits<double>::infinity();
    double s_start = 0.0;
    for (std::size_t i = 1; i < centerline.size(); ++i) {
        const Vec2 a = centerline[i - 1];
        const Vec2 ab = centerline[i] - a;
        const double len = norm(ab);
        if (len <= 0.0) {
            continue;
        }
        const double t = std::clamp(dot(pos - a, ab) / (len * len), 0.0, 1.0);
        const Vec2 foot = a + t * ab;
        const Vec2 rel = pos - foot;
        const double d = norm(rel);
        if (d < best.distance) {
            best.distance = d;
            best.arc_length = s_start + t * len;
            best.heading = std::atan2(ab.y, ab.x);
            const double side = cross(ab, rel);
            best.lateral_offset = side >= 0.0 ? d : -d;
        }
        s_start += len;
    }
    return best;
}

LanePoint point_on_polyline(const Polyline& line, double s) {
    // find the segment that contains s; the first/last segment extends
    std::size_t seg = 1;
    double s_start = 0.0;
    while (seg + 1 < line.size()) {
        const double len = norm(line[seg] - line[seg - 1]);
        if (s <= s_start + len) {
            break;
        }
        s_start += len;
        ++seg;
    }
    const Vec2 a = line[seg - 1];
    const Vec2 ab = line[seg] - a;
    const double len = norm(ab);
    const Vec2 dir = len > 0.0 ? (1.0 / len) * ab : Vec2{1.0, 0.0};
    return {a + (s - s_start) * dir, std::atan2(dir.y, dir.x)};
}

LanePoint point_along_route(const LaneGraph& map, int lane_id, double s) {
    const Lane* lane = map.find(lane_id);
    if (lane == nullptr) {
        throw ValidationError("unknown lane id " + std::to_string(lane_id));
    }
    for (int hop = 0; hop < 32; ++hop) {
        const double len = polyline_length(lane->centerline);
        if (s <= len || lane->successors.empty()) {
            break;
        }
        const Lane* next = map.find(lane->successors.front());
        if (next == nullptr) {
            break;
        }
        s -= len;
        lane = next;
    }
    return point_on_polyline(lane->centerline, s);
}

std::optional<NearestLane> nearest_lane(const LaneGraph& map, Vec2 pos) {
    std::optional<NearestLane> best;
    for (const Lane& lane : map.lanes) {
        const LaneProjection p = project_to_lane(pos, lane.centerline);
        if (!best || p.distance < best->projection.distance) {
            best = NearestLane{&lane, p};
        }
    }
    return best;
}

AgentState integrate_unicycle(const AgentState& state, UnicycleInput input, double dt,
                              const DynamicsLimits& limits) {
    const int steps = std::max(1, static_cast<int>(std::ceil(dt / kMaxSubstep - 1e-9)));
    const double h = dt / steps;
    double x = state.x;
    double y = state.y;
    double v = state.v;
    double psi = state.psi;
    for (int k = 0; k < steps; ++k) {
        const Deriv k1 = unicycle_rhs(v, psi, input, limits);
        const Deriv k2 = unicycle_rhs(v + 0.5 * h * k1.v, psi + 0.5 * h * k1.psi, input, limits);
        const Deriv k3 = unicycle_rhs(v + 0.5 * h * k2.v, psi + 0.5 * h * k2.psi, input, limits);
        const Deriv k4 = unicycle_rhs(v + h * k3.v, psi + h * k3.psi, input, limits);
        x += h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x);
        y += h / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y);
        v += h / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v);
        psi += h / 6.0 * (k1.psi + 2.0 * k2.psi + 2.0 * k3.psi + k4.psi);
        v = std::clamp(v, 0.0, limits.v_max);
    }
    return {x, y, v, wrap_angle(psi)};
}

std::array<Vec2, 4> footprint_corners(const AgentState& state, const Footprint& fp) {
    const double c = std::cos(state.psi);
    const double s = std::sin(state.psi);
    const double hl = 0.5 * fp.length;
    const double hw = 0.5 * fp.width;
    const Vec2 fwd{c * hl, s * hl};
    const Vec2 left{-s * hw, c * hw};
    const Vec2 p = state.position();
    return {p + fwd + left, p - fwd + left, p - fwd - left, p + fwd - left};
}

bool check_collision(const AgentState& ego, const Footprint& ego_fp, const AgentState& other,
                     const Footprint& other_fp) {
    const auto a = footprint_corners(ego, ego_fp);
    const auto b = footprint_corners(other, other_fp);
    const std::array<Vec2, 4> axes{Vec2{std::cos(ego.psi), std::sin(ego.psi)},
                                   Vec2{-std::sin(ego.psi), std::cos(ego.psi)},
                                   Vec2{std::cos(other.psi), std::sin(other.psi)},
                                   Vec2{-std::sin(other.psi), std::cos(other.psi)}};
    for (const Vec2& axis : axes) {
        const auto [alo, ahi] = project_box(a, axis);
        const auto [blo, bhi] = project_box(b, axis);
        if (ahi < blo || bhi < alo) {
            return false;
        }
    }
    return true;
}

double box_clearance(const AgentState& a, const Footprint& a_fp, const AgentState& b, const Footprint& b_fp) {
    if (check_collision(a, a_fp, b, b_fp)) {
        return 0.0;
    }
    const auto ca = footprint_corners(a, a_fp);
    const auto cb = footprint_corners(b, b_fp);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            best = std::min(best, point_segment_distance(ca[i], cb[j], cb[(j + 1) % 4]));
            best = std::min(best, point_segment_distance(cb[i], ca[j], ca[(j + 1) % 4]));
        }
    }
    return best;
}

bool point_in_polygon(Vec2 p, const Polygon& poly) {
    const std::size_t n = poly.size();
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2 a = poly[i];
        const Vec2 b = poly[j];
        if (on_segment(p, a, b)) {
            return true;
        }
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if (p.x < x_cross) {
                inside = !inside;
            }
        }
    }
    return inside;
}

bool is_offroad(const AgentState& state, const Footprint& fp, const LaneGraph& map) {
    for (const Vec2& corner : footprint_corners(state, fp)) {
        const bool covered = std::any_of(map.drivable_area.begin(), map.drivable_area.end(),
                                         [&](const Polygon& poly) { return point_in_polygon(corner, poly); });
        if (!covered) {
            return true;
        }
    }
    return false;
}

}  // namespace tpp
