#include "tpp/ego_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace tpp {
namespace {

constexpr double kFeasEps = 1e-9;
constexpr double kCurvatureMinSpeed = 0.5;

bool within_limits(double a, double omega, const DynamicsLimits& limits) {
    return a <= limits.a_max && a >= limits.a_min && std::fabs(omega) <= limits.omega_max;
}

std::array<double, 4> hermite_coeffs(double p0, double p1, double m0, double m1, double T) {
    const double T2 = T * T;
    const double T3 = T2 * T;
    return {p0, m0, 3.0 * (p1 - p0) / T2 - (2.0 * m0 + m1) / T, 2.0 * (p0 - p1) / T3 + (m0 + m1) / T2};
}

double eval_poly(const std::array<double, 4>& c, double t) { return c[0] + t * (c[1] + t * (c[2] + t * c[3])); }
double eval_dpoly(const std::array<double, 4>& c, double t) { return c[1] + t * (2.0 * c[2] + t * 3.0 * c[3]); }
double eval_ddpoly(const std::array<double, 4>& c, double t) { return 2.0 * c[2] + 6.0 * c[3] * t; }

bool is_duplicate(const AgentState& s, const std::vector<TerminalCandidate>& kept, const SamplerConfig& cfg) {
    for (const TerminalCandidate& k : kept) {
        // at rest the heading does not enter the spline boundary data
        const bool both_stopped = s.v < 1e-6 && k.state.v < 1e-6;
        if (norm(s.position() - k.state.position()) <= cfg.dedup_distance &&
            (both_stopped || std::fabs(wrap_angle(s.psi - k.state.psi)) <= cfg.dedup_heading)) {
            return true;
        }
    }
    return false;
}

}  // namespace

void StageSchedule::validate() const {
    if (!(dt > 0.0)) {
        throw ValidationError("StageSchedule: dt must be positive");
    }
    if (stage_durations.empty()) {
        throw ValidationError("StageSchedule: need at least the root stage");
    }
    for (double d : stage_durations) {
        const double steps = d / dt;
        if (!(d > 0.0) || std::fabs(steps - std::round(steps)) > 1e-6 || std::round(steps) < 1.0) {
            throw ValidationError("StageSchedule: stage duration " + std::to_string(d) +
                                  " is not a positive multiple of dt");
        }
    }
}

double StageSchedule::stage_start(int stage) const {
    double t = 0.0;
    for (int i = 0; i < stage; ++i) {
        t += stage_durations.at(static_cast<std::size_t>(i));
    }
    return t;
}

int StageSchedule::stage_steps(int stage) const {
    return static_cast<int>(std::lround(stage_durations.at(static_cast<std::size_t>(stage)) / dt));
}

double StageSchedule::horizon() const { return std::accumulate(stage_durations.begin(), stage_durations.end(), 0.0); }

Vec2 SplineSegment::position(double t) const { return {eval_poly(coeffs_x, t), eval_poly(coeffs_y, t)}; }
Vec2 SplineSegment::velocity(double t) const { return {eval_dpoly(coeffs_x, t), eval_dpoly(coeffs_y, t)}; }
Vec2 SplineSegment::acceleration(double t) const { return {eval_ddpoly(coeffs_x, t), eval_ddpoly(coeffs_y, t)}; }

SplineSegment fit_spline(const AgentState& start, const AgentState& terminal, double duration, double dt) {
    if (!(duration >= dt - 1e-12) || !(duration > 0.0)) {
        throw DegenerateDuration("fit_spline: duration " + std::to_string(duration) + " shorter than dt " +
                                 std::to_string(dt));
    }
    SplineSegment s;
    s.duration = duration;
    s.coeffs_x = hermite_coeffs(start.x, terminal.x, start.v * std::cos(start.psi),
                                terminal.v * std::cos(terminal.psi), duration);
    s.coeffs_y = hermite_coeffs(start.y, terminal.y, start.v * std::sin(start.psi),
                                terminal.v * std::sin(terminal.psi), duration);
    return s;
}

void SamplerConfig::validate() const {
    limits.validate();
    if (accel_grid.empty() || yaw_rate_grid.empty()) {
        throw ValidationError("SamplerConfig: accel and yaw-rate grids must be non-empty");
    }
    if (max_children < 1) {
        throw ValidationError("SamplerConfig: max_children must be >= 1");
    }
    if (lateral_band < 0.0 || lane_search_radius < 0.0) {
        throw ValidationError("SamplerConfig: lateral_band and lane_search_radius must be >= 0");
    }
}

std::vector<TerminalCandidate> sample_terminal_candidates(const AgentState& current, const LaneGraph* map,
                                                          double duration, const SamplerConfig& config) {
    std::vector<TerminalCandidate> raw;
    for (double a : config.accel_grid) {
        for (double omega : config.yaw_rate_grid) {
            if (!within_limits(a, omega, config.limits)) {
                continue;
            }
            raw.push_back({integrate_unicycle(current, {a, omega}, duration, config.limits),
                           AccelSteerTerminal{a, omega}});
        }
    }
    if (map != nullptr) {
        for (const Lane& lane : map->lanes) {
            const LaneProjection proj = project_to_lane(current.position(), lane.centerline);
            if (proj.distance > config.lane_search_radius) {
                continue;
            }
            const double lane_len = polyline_length(lane.centerline);
            for (double v_target : config.target_speeds) {
                if (v_target < 0.0 || v_target > config.limits.v_max) {
                    continue;
                }
                const double s = proj.arc_length + 0.5 * (current.v + v_target) * duration;
                if (s > lane_len && lane.successors.empty()) {
                    continue;
                }
                const LanePoint base = point_along_route(*map, lane.id, s);
                const Vec2 left{-std::sin(base.heading), std::cos(base.heading)};
                for (double offset : config.lateral_offsets) {
                    if (std::fabs(offset) > config.lateral_band) {
                        continue;
                    }
                    const Vec2 p = base.position + offset * left;
                    raw.push_back({AgentState{p.x, p.y, v_target, wrap_angle(base.heading)},
                                   LaneTargetTerminal{lane.id, s, offset, v_target}});
                }
            }
        }
    }
    std::vector<TerminalCandidate> kept;
    kept.reserve(raw.size());
    for (const TerminalCandidate& c : raw) {
        if (!is_duplicate(c.state, kept, config)) {
            kept.push_back(c);
        }
    }
    return kept;
}

std::vector<AgentState> sample_terminals(const AgentState& current, const LaneGraph* map, double duration,
                                         const SamplerConfig& config) {
    std::vector<AgentState> out;
    for (const TerminalCandidate& c : sample_terminal_candidates(current, map, duration, config)) {
        out.push_back(c.state);
    }
    return out;
}

Trajectory sample_spline(const SplineSegment& spline, const AgentState& start, double t0, double dt) {
    const int steps = static_cast<int>(std::lround(spline.duration / dt));
    Trajectory traj;
    traj.t0 = t0;
    traj.dt = dt;
    traj.samples.reserve(static_cast<std::size_t>(steps) + 1);
    traj.samples.push_back(start);
    double heading = start.psi;
    for (int k = 1; k <= steps; ++k) {
        const double t = dt * k;
        const Vec2 p = spline.position(t);
        const Vec2 vel = spline.velocity(t);
        const double speed = norm(vel);
        if (speed > 1e-9) {
            heading = std::atan2(vel.y, vel.x);
        }
        traj.samples.push_back({p.x, p.y, speed, wrap_angle(heading)});
    }
    return traj;
}

bool spline_is_feasible(const SplineSegment& spline, const AgentState& start, double dt,
                        const DynamicsLimits& limits) {
    const int steps = static_cast<int>(std::lround(spline.duration / dt));
    Vec2 dir{std::cos(start.psi), std::sin(start.psi)};
    for (int k = 0; k <= steps; ++k) {
        const double t = dt * k;
        const Vec2 vel = spline.velocity(t);
        const Vec2 acc = spline.acceleration(t);
        const double speed = norm(vel);
        if (speed > limits.v_max + kFeasEps) {
            return false;
        }
        double a_long = dot(acc, dir);
        if (speed > 1e-6) {
            if (dot(vel, dir) < -kFeasEps) {
                return false;  // velocity flipped: the spline backs up
            }
            dir = (1.0 / speed) * vel;
            a_long = dot(acc, dir);
        }
        if (a_long > limits.a_max + kFeasEps || a_long < limits.a_min - kFeasEps) {
            return false;
        }
        if (speed > kCurvatureMinSpeed) {
            const double kappa = cross(vel, acc) / (speed * speed * speed);
            if (std::fabs(kappa) > limits.kappa_max + kFeasEps) {
                return false;
            }
        }
    }
    return true;
}

std::vector<int> TrajectoryTree::nodes_at_stage(int stage) const {
    std::vector<int> ids;
    for (const TreeNode& n : nodes) {
        if (n.stage == stage) {
            ids.push_back(n.id);
        }
    }
    return ids;
}

std::vector<int> TrajectoryTree::leaves() const {
    std::vector<int> ids;
    for (const TreeNode& n : nodes) {
        if (n.children.empty()) {
            ids.push_back(n.id);
        }
    }
    return ids;
}

std::vector<int> TrajectoryTree::path_to(int id) const {
    std::vector<int> path;
    for (int cur = id; cur >= 0; cur = node(cur).parent) {
        path.push_back(cur);
    }
    std::reverse(path.begin(), path.end());
    return path;
}

void TrajectoryTree::check_invariants(int max_children) const {
    if (nodes.empty()) {
        throw StructureError("trajectory tree is empty");
    }
    const int n_stages = num_stages();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const TreeNode& n = nodes[i];
        if (n.id != static_cast<int>(i)) {
            throw StructureError("node ids must equal their index");
        }
        if ((n.parent < 0) != (i == 0)) {
            throw StructureError("exactly node 0 must be the root");
        }
        if (n.segment.samples.empty()) {
            throw StructureError("node " + std::to_string(n.id) + " has an empty segment");
        }
        if (n.stage < 0 || n.stage > n_stages) {
            throw StructureError("node " + std::to_string(n.id) + " stage out of range");
        }
        const int steps = schedule.stage_steps(n.stage);
        if (static_cast<int>(n.segment.samples.size()) != steps + 1) {
            throw StructureError("node " + std::to_string(n.id) + " segment duration differs from its stage");
        }
        if (n.parent >= 0) {
            const TreeNode& p = node(n.parent);
            if (p.stage + 1 != n.stage) {
                throw StructureError("node " + std::to_string(n.id) + " is not one stage below its parent");
            }
            const AgentState& a = p.segment.back();
            const AgentState& b = n.segment.front();
            if (std::hypot(a.x - b.x, a.y - b.y) > 1e-9 || std::fabs(a.v - b.v) > 1e-9) {
                throw StructureError("node " + std::to_string(n.id) + " does not start at its parent's endpoint");
            }
            if (std::find(p.children.begin(), p.children.end(), n.id) == p.children.end()) {
                throw StructureError("node " + std::to_string(n.id) + " missing from its parent's children");
            }
        }
        if (max_children >= 0 && static_cast<int>(n.children.size()) > max_children) {
            throw StructureError("node " + std::to_string(n.id) + " exceeds the children cap");
        }
        if (n.children.empty() && n.stage != n_stages) {
            throw StructureError("leaf " + std::to_string(n.id) + " ends before the last stage");
        }
    }
}

TrajectoryTree grow_tree(const AgentState& root_state, const LaneGraph* map, const StageSchedule& schedule,
                         const SamplerConfig& config, std::uint64_t seed, double t0) {
    schedule.validate();
    config.validate();
    const double dt = schedule.dt;

    TrajectoryTree tree;
    tree.schedule = schedule;
    {
        const double d0 = schedule.stage_durations.front();
        TreeNode root;
        root.id = 0;
        root.stage = 0;
        root.spline = fit_spline(root_state, integrate_unicycle(root_state, {}, d0, config.limits), d0, dt);
        root.segment = sample_spline(root.spline, root_state, t0, dt);
        root.origin = AccelSteerTerminal{};
        tree.nodes.push_back(std::move(root));
    }

    std::vector<int> frontier{0};
    int reached = 0;
    for (int stage = 1; stage <= schedule.num_stages(); ++stage) {
        const double duration = schedule.stage_durations[static_cast<std::size_t>(stage)];
        const double t_start = t0 + schedule.stage_start(stage);
        std::vector<int> next;
        const bool check_road = config.keep_on_road && map != nullptr && !map->drivable_area.empty();
        for (int parent_id : frontier) {
            const AgentState start = tree.nodes[static_cast<std::size_t>(parent_id)].segment.back();
            std::vector<TreeNode> kids;
            for (const TerminalCandidate& cand : sample_terminal_candidates(start, map, duration, config)) {
                SplineSegment spline = fit_spline(start, cand.state, duration, dt);
                if (!spline_is_feasible(spline, start, dt, config.limits)) {
                    continue;
                }
                TreeNode kid;
                kid.stage = stage;
                kid.parent = parent_id;
                kid.segment = sample_spline(spline, start, t_start, dt);
                if (check_road && std::any_of(kid.segment.samples.begin(), kid.segment.samples.end(),
                                              [&](const AgentState& x) {
                                                  return is_offroad(x, config.footprint, *map);
                                              })) {
                    continue;
                }
                kid.spline = spline;
                kid.origin = cand.spec;
                kids.push_back(std::move(kid));
            }
            if (static_cast<int>(kids.size()) > config.max_children) {
                std::vector<std::size_t> idx(kids.size());
                std::iota(idx.begin(), idx.end(), 0);
                std::vector<std::size_t> keep;
                std::mt19937_64 rng(hash_combine(seed, static_cast<std::uint64_t>(parent_id)));
                std::sample(idx.begin(), idx.end(), std::back_inserter(keep),
                            static_cast<std::size_t>(config.max_children), rng);
                std::vector<TreeNode> kept;
                for (std::size_t k : keep) {
                    kept.push_back(std::move(kids[k]));
                }
                kids = std::move(kept);
            }
            for (TreeNode& kid : kids) {
                kid.id = static_cast<int>(tree.nodes.size());
                tree.nodes[static_cast<std::size_t>(parent_id)].children.push_back(kid.id);
                next.push_back(kid.id);
                tree.nodes.push_back(std::move(kid));
            }
        }
        if (next.empty()) {
            tree.truncated = true;
            break;
        }
        reached = stage;
        frontier = std::move(next);
    }

    // Prune branches that cannot reach the deepest stage and re-index.
    std::vector<bool> alive(tree.nodes.size(), false);
    for (const TreeNode& n : tree.nodes) {
        if (n.stage == reached) {
            for (int cur = n.id; cur >= 0 && !alive[static_cast<std::size_t>(cur)];
                 cur = tree.nodes[static_cast<std::size_t>(cur)].parent) {
                alive[static_cast<std::size_t>(cur)] = true;
            }
        }
    }
    std::vector<int> remap(tree.nodes.size(), -1);
    std::vector<TreeNode> pruned;
    for (TreeNode& n : tree.nodes) {
        if (!alive[static_cast<std::size_t>(n.id)]) {
            continue;
        }
        remap[static_cast<std::size_t>(n.id)] = static_cast<int>(pruned.size());
        pruned.push_back(std::move(n));
    }
    for (TreeNode& n : pruned) {
        n.id = remap[static_cast<std::size_t>(n.id)];
        if (n.parent >= 0) {
            n.parent = remap[static_cast<std::size_t>(n.parent)];
        }
        std::vector<int> kids;
        for (int c : n.children) {
            if (remap[static_cast<std::size_t>(c)] >= 0) {
                kids.push_back(remap[static_cast<std::size_t>(c)]);
            }
        }
        n.children = std::move(kids);
    }
    tree.nodes = std::move(pruned);
    tree.schedule.stage_durations.resize(static_cast<std::size_t>(reached) + 1);
    return tree;
}

}  // namespace tpp
