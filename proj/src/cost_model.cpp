#include "tpp/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tpp {

void CostWeights::validate() const {
    if (w_collision < 0.0 || w_lane < 0.0 || w_goal < 0.0 || w_comfort < 0.0) {
        throw ValidationError("CostWeights: weights must be nonnegative");
    }
    if (!(collision_scale > 0.0) || !(horizon_distance > 0.0)) {
        throw ValidationError("CostWeights: collision_scale and horizon_distance must be positive");
    }
}

double distance_to_goal(Vec2 pos, const Goal& goal, const LaneGraph* map) {
    if (const auto* point = std::get_if<Vec2>(&goal.target)) {
        return norm(pos - *point);
    }
    const auto* route = std::get_if<std::vector<int>>(&goal.target);
    if (route == nullptr || route->empty() || map == nullptr) {
        return 0.0;
    }
    // nearest lane on the route, then what is left of it plus the rest
    std::size_t best = 0;
    LaneProjection best_proj;
    best_proj.distance = std::numeric_limits<double>::infinity();
    std::vector<double> lengths;
    for (std::size_t i = 0; i < route->size(); ++i) {
        const Lane* lane = map->find((*route)[i]);
        if (lane == nullptr) {
            throw ValidationError("goal route references unknown lane " + std::to_string((*route)[i]));
        }
        lengths.push_back(polyline_length(lane->centerline));
        const LaneProjection p = project_to_lane(pos, lane->centerline);
        if (p.distance < best_proj.distance) {
            best_proj = p;
            best = i;
        }
    }
    double remaining = lengths[best] - best_proj.arc_length;
    for (std::size_t i = best + 1; i < lengths.size(); ++i) {
        remaining += lengths[i];
    }
    return std::max(0.0, remaining);
}

double running_cost(const AgentState& ego, const Footprint& ego_fp, std::span<const EnvAgent> env,
                    const LaneGraph* map, const CostWeights& weights, UnicycleInput motion) {
    double cost = 0.0;
    if (weights.w_collision > 0.0) {
        double collision = 0.0;
        for (const EnvAgent& agent : env) {
            const double d = box_clearance(ego, ego_fp, agent.state, agent.footprint);
            collision += std::exp(-d / weights.collision_scale);
        }
        cost += weights.w_collision * collision;
    }
    if (weights.w_lane > 0.0 && map != nullptr && !map->lanes.empty()) {
        const auto lane = nearest_lane(*map, ego.position());
        const double heading_error = wrap_angle(ego.psi - lane->projection.heading);
        const double lat = lane->projection.lateral_offset;
        cost += weights.w_lane * (lat * lat + heading_error * heading_error);
    }
    if (weights.w_goal > 0.0 && !weights.goal.empty()) {
        cost += weights.w_goal * distance_to_goal(ego.position(), weights.goal, map) / weights.horizon_distance;
    }
    if (weights.w_comfort > 0.0) {
        cost += weights.w_comfort * (motion.a * motion.a + motion.omega * motion.omega);
    }
    return cost;
}

std::vector<UnicycleInput> finite_difference_inputs(const Trajectory& traj) {
    const std::size_t n = traj.samples.size();
    std::vector<UnicycleInput> out(n);
    if (n < 2) {
        return out;
    }
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t lo = k == 0 ? 0 : k - 1;
        const std::size_t hi = k + 1 == n ? n - 1 : k + 1;
        const double span = traj.dt * static_cast<double>(hi - lo);
        out[k].a = (traj.samples[hi].v - traj.samples[lo].v) / span;
        out[k].omega = wrap_angle(traj.samples[hi].psi - traj.samples[lo].psi) / span;
    }
    return out;
}

double trapezoid(std::span<const double> values, double dt) {
    if (values.size() < 2) {
        return 0.0;
    }
    double sum = 0.5 * (values.front() + values.back());
    for (std::size_t k = 1; k + 1 < values.size(); ++k) {
        sum += values[k];
    }
    return sum * dt;
}

StageCost stage_cost(const Trajectory& ego_segment, const Footprint& ego_fp, const ScenarioNode& env_node,
                     const std::map<AgentId, Footprint>& footprints, const LaneGraph* map,
                     const CostWeights& weights) {
    const std::size_t n = ego_segment.samples.size();
    for (const auto& [id, traj] : env_node.agents) {
        if (traj.samples.size() != n || std::fabs(traj.t0 - ego_segment.t0) > 1e-9 ||
            std::fabs(traj.dt - ego_segment.dt) > 1e-12) {
            throw ScheduleMismatch("stage_cost: agent " + std::to_string(id) +
                                   " does not share the ego segment's time support");
        }
    }
    const std::vector<UnicycleInput> motion = finite_difference_inputs(ego_segment);
    std::vector<EnvAgent> env;
    env.reserve(env_node.agents.size());
    for (const auto& [id, traj] : env_node.agents) {
        auto fp = footprints.find(id);
        env.push_back({id, traj.samples.front(), fp != footprints.end() ? fp->second : Footprint{}});
    }
    std::vector<double> values(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t j = 0;
        for (const auto& [id, traj] : env_node.agents) {
            env[j++].state = traj.samples[k];
        }
        values[k] = running_cost(ego_segment.samples[k], ego_fp, env, map, weights, motion[k]);
    }
    return {trapezoid(values, ego_segment.dt)};
}

}  // namespace tpp
