#include "tpp/sim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <set>

namespace tpp {

double ou_step(double x, const OuParams& params, double dt, double noise) {
    return x + params.theta * (params.mu - x) * dt + params.sigma * std::sqrt(dt) * noise;
}

void SimConfig::validate() const {
    if (!(total_duration > 0.0)) throw ValidationError("sim total_duration must be > 0");
    if (!(sim_dt > 0.0)) throw ValidationError("sim_dt must be > 0");
    const double ratio = replan_period / sim_dt;
    if (!(replan_period > 0.0) || std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio)) {
        throw ValidationError("replan_period must be a positive multiple of sim_dt");
    }
    if (!(spawn.radius_min < spawn.radius_max) || spawn.radius_min < 0.0) {
        throw ValidationError("spawn radius band must satisfy 0 <= min < max");
    }
    if (spawn.rate_per_minute < 0.0 || spawn.max_agents < 0) {
        throw ValidationError("spawn rate and max_agents must be non-negative");
    }
    if (ou.theta < 0.0 || ou.sigma < 0.0) throw ValidationError("ou theta and sigma must be non-negative");
    if (history_length < 1) throw ValidationError("history_length must be >= 1");
}

void Scenario::validate() const {
    if (!map) throw ScenarioError("scenario '" + name + "' has no map");
    try {
        map->validate();
        ego_footprint.validate();
        for (const ScenarioAgent& a : agents) {
            a.footprint.validate();
            a.behavior.limits.validate();
        }
    } catch (const ValidationError& e) {
        throw ScenarioError("scenario '" + name + "': " + e.what());
    }
    std::set<AgentId> ids;
    for (const ScenarioAgent& a : agents) {
        if (!ids.insert(a.id).second) {
            throw ScenarioError("scenario '" + name + "': duplicate agent id " + std::to_string(a.id));
        }
        if (a.behavior.lane_change.target_lane >= 0 && map->find(a.behavior.lane_change.target_lane) == nullptr) {
            throw ScenarioError("scenario '" + name + "': agent " + std::to_string(a.id) +
                                " changes into unknown lane " + std::to_string(a.behavior.lane_change.target_lane));
        }
        const LaneChangeBehavior& lc = a.behavior.lane_change;
        if (lc.probability < 0.0 || lc.probability > 1.0 || lc.latest < lc.earliest) {
            throw ScenarioError("scenario '" + name + "': agent " + std::to_string(a.id) +
                                " has an invalid lane change window");
        }
    }
    if (std::holds_alternative<std::vector<int>>(goal.target)) {
        for (int lane : std::get<std::vector<int>>(goal.target)) {
            if (map->find(lane) == nullptr) {
                throw ScenarioError("scenario '" + name + "': goal route references unknown lane " +
                                    std::to_string(lane));
            }
        }
    }
}

AgentDriverState make_driver_state(const ScenarioAgent& agent, const LaneGraph& map, std::uint64_t seed) {
    AgentDriverState d;
    d.id = agent.id;
    d.rng.seed(hash_combine(seed, hash_combine(0xa6e175ull, static_cast<std::uint64_t>(agent.id))));
    if (const auto near = nearest_lane(map, agent.state.position())) {
        d.lane_id = near->lane->id;
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u_fire = unit(d.rng);
    const double u_time = unit(d.rng);
    const LaneChangeBehavior& lc = agent.behavior.lane_change;
    if (lc.target_lane >= 0 && u_fire < lc.probability) {
        d.change_pending = true;
        d.change_target = lc.target_lane;
        d.change_time = lc.earliest + u_time * (lc.latest - lc.earliest);
    }
    return d;
}

UnicycleInput agent_policy_step(const AgentState& agent, const LaneGraph& map, AgentDriverState& driver,
                                const AgentBehavior& behavior, const OuParams& ou, double t, double dt,
                                std::span<const AgentState> others) {
    std::normal_distribution<double> normal(0.0, 1.0);
    driver.ou = ou_step(driver.ou, ou, dt, normal(driver.rng));

    if (driver.change_pending && t + 1e-9 >= driver.change_time) {
        driver.lane_id = driver.change_target;
        driver.change_pending = false;
        driver.changed = true;
    }
    const Lane* lane = map.find(driver.lane_id);
    if (lane == nullptr) {
        const auto near = nearest_lane(map, agent.position());
        if (!near) return behavior.limits.clamp({behavior.limits.a_min, 0.0});
        lane = near->lane;
        driver.lane_id = lane->id;
    }
    LaneProjection proj = project_to_lane(agent.position(), lane->centerline);
    double length = polyline_length(lane->centerline);
    while (proj.arc_length > length && !lane->successors.empty()) {
        const Lane* next = map.find(lane->successors.front());
        if (next == nullptr) break;
        lane = next;
        driver.lane_id = lane->id;
        proj = project_to_lane(agent.position(), lane->centerline);
        length = polyline_length(lane->centerline);
    }

    const double lookahead = std::max(behavior.min_lookahead, behavior.lookahead_time * agent.v);
    const LanePoint target = point_along_route(map, lane->id, proj.arc_length + lookahead);
    const double dx = target.position.x - agent.x;
    const double dy = target.position.y - agent.y;
    const double alpha = wrap_angle(std::atan2(dy, dx) - agent.psi);
    const double ld = std::max(std::hypot(dx, dy), 1e-6);
    const double kappa = 2.0 * std::sin(alpha) / ld;

    double desired = behavior.desired_speed >= 0.0 ? behavior.desired_speed : lane->speed_limit;
    if (driver.changed && behavior.lane_change.speed_after >= 0.0) desired = behavior.lane_change.speed_after;
    const double v_target = std::max(0.0, desired + driver.ou);
    double a = behavior.speed_gain * (v_target - agent.v);

    const double c = std::cos(agent.psi);
    const double s = std::sin(agent.psi);
    double nearest_gap = std::numeric_limits<double>::infinity();
    double leader_speed = 0.0;
    for (const AgentState& o : others) {
        const double rx = o.x - agent.x;
        const double ry = o.y - agent.y;
        const double fwd = c * rx + s * ry;
        const double lat = -s * rx + c * ry;
        if (fwd > 0.0 && std::abs(lat) < behavior.lane_half_width && fwd < nearest_gap) {
            nearest_gap = fwd;
            leader_speed = o.v * std::cos(o.psi - agent.psi);
        }
    }
    if (nearest_gap <= behavior.headway) {
        const bool closing = leader_speed < agent.v;
        if (closing || nearest_gap < 0.5 * behavior.headway) {
            a = std::min(a, behavior.limits.a_min * (1.0 - nearest_gap / behavior.headway));
        }
    }
    return behavior.limits.clamp({a, kappa * agent.v});
}

int identify_branch(const ScenarioTree& tree, std::span<const int> candidates,
                    std::span<const AgentSnapshot> observed) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int id : candidates) {
        const ScenarioNode& n = tree.node(id);
        double d = 0.0;
        for (const AgentSnapshot& o : observed) {
            const auto it = n.agents.find(o.id);
            if (it == n.agents.end() || it->second.samples.empty()) continue;
            const AgentState& p = it->second.back();
            d += std::hypot(p.x - o.state.x, p.y - o.state.y);
        }
        if (best < 0 || d < best_d) {
            best = id;
            best_d = d;
        }
    }
    return best;
}

namespace {

struct LiveAgent {
    AgentId id = 0;
    AgentState state;
    Footprint footprint;
    AgentBehavior behavior;
    AgentDriverState driver;
    std::deque<AgentState> history;
};

struct ActivePlan {
    int plan_id = 0;
    Plan plan;
    int node = 0;
    std::size_t index = 0;  // sample index within the node's segment
    int scenario_node = -1;  // identified node for the stage before `node`'s
};

std::vector<AgentSnapshot> snapshots(const std::vector<LiveAgent>& agents) {
    std::vector<AgentSnapshot> out;
    out.reserve(agents.size());
    for (const LiveAgent& a : agents) {
        out.push_back({a.id, a.state, a.footprint});
    }
    return out;
}

// Next committed ego state, switching segments at stage boundaries. Returns
// nullopt once the plan has nothing left to execute.
std::optional<AgentState> advance_plan(ActivePlan& ap, std::span<const AgentSnapshot> observed) {
    const TrajectoryTree& tree = ap.plan.tree;
    const TreeNode* r = &tree.nodes.at(static_cast<std::size_t>(ap.node));
    if (ap.index + 1 >= r->segment.samples.size()) {
        if (r->children.empty()) return std::nullopt;
        const ScenarioSource source = ap.plan.source();
        const ScenarioTree& st = source.tree_for(r->id);
        std::vector<int> candidates;
        if (r->stage == 0) {
            candidates.push_back(0);
        } else {
            candidates = st.node(ap.scenario_node).children;
        }
        if (candidates.empty()) return std::nullopt;
        const int e = identify_branch(st, candidates, observed);
        int child = -1;
        if (ap.plan.kind == PlannerKind::tpp) {
            if (!ap.plan.solution.policy.has(r->id, e)) return std::nullopt;
            child = ap.plan.solution.policy.at(r->id, e);
        } else {
            const std::vector<int>& path = ap.plan.fixed.path;
            const std::size_t next = static_cast<std::size_t>(r->stage) + 1;
            if (next >= path.size()) return std::nullopt;
            child = path[next];
        }
        ap.node = child;
        ap.index = 0;
        ap.scenario_node = e;
        r = &tree.nodes.at(static_cast<std::size_t>(child));
        if (r->segment.samples.size() < 2) return std::nullopt;
    }
    ++ap.index;
    return r->segment.samples[ap.index];
}

std::vector<AgentHistory> histories(const std::vector<LiveAgent>& agents) {
    std::vector<AgentHistory> out;
    out.reserve(agents.size());
    for (const LiveAgent& a : agents) {
        out.push_back({a.id, a.footprint, std::vector<AgentState>(a.history.begin(), a.history.end())});
    }
    return out;
}

bool overlaps_any(const AgentState& s, const Footprint& fp, const AgentState& ego, const Footprint& ego_fp,
                  const std::vector<LiveAgent>& agents) {
    if (check_collision(s, fp, ego, ego_fp)) return true;
    for (const LiveAgent& a : agents) {
        if (check_collision(s, fp, a.state, a.footprint)) return true;
    }
    return false;
}

std::optional<ScenarioAgent> try_spawn(std::mt19937_64& rng, const LaneGraph& map, const SpawnConfig& cfg,
                                       const AgentState& ego, const Footprint& ego_fp,
                                       const std::vector<LiveAgent>& agents, AgentId id) {
    std::vector<const Lane*> nearby;
    for (const Lane& lane : map.lanes) {
        const LaneProjection p = project_to_lane(ego.position(), lane.centerline);
        if (p.distance <= cfg.radius_max) nearby.push_back(&lane);
    }
    if (nearby.empty()) return std::nullopt;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    constexpr int kAttempts = 8;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
        const double u_lane = unit(rng);
        const double u_s = unit(rng);
        const double u_v = unit(rng);
        const Lane& lane = *nearby[std::min(nearby.size() - 1, static_cast<std::size_t>(u_lane * nearby.size()))];
        const LanePoint p = point_on_polyline(lane.centerline, u_s * polyline_length(lane.centerline));
        const double d = norm(p.position - ego.position());
        if (d < cfg.radius_min || d > cfg.radius_max) continue;
        ScenarioAgent a;
        a.id = id;
        a.state = {p.position.x, p.position.y, lane.speed_limit * (0.6 + 0.4 * u_v), p.heading};
        // keep a buffer so a spawn never lands bumper to bumper
        const Footprint buffer{a.footprint.length + 4.0, a.footprint.width + 1.0};
        if (is_offroad(a.state, a.footprint, map)) continue;
        if (overlaps_any(a.state, buffer, ego, ego_fp, agents)) continue;
        return a;
    }
    return std::nullopt;
}

LiveAgent make_live(const ScenarioAgent& a, const LaneGraph& map, std::uint64_t seed) {
    LiveAgent live{a.id, a.state, a.footprint, a.behavior, make_driver_state(a, map, seed), {}};
    live.history.push_back(a.state);
    return live;
}

}  // namespace

SimTrace run_closed_loop(const Scenario& scenario, const PlanningSettings& settings, PlannerKind planner,
                         const SimConfig& config, const std::string& config_hash) {
    scenario.validate();
    config.validate();
    settings.validate();
    if (std::abs(settings.schedule.dt - config.sim_dt) > 1e-12) {
        throw ValidationError("planner schedule dt must equal sim_dt");
    }
    const LaneGraph& map = *scenario.map;

    SimTrace trace;
    trace.meta = {scenario.name, to_string(planner), config.seed, config_hash, config.sim_dt, scenario.ego_footprint};

    const long steps = std::lround(config.total_duration / config.sim_dt);
    const long replan_every = std::max(1L, std::lround(config.replan_period / config.sim_dt));
    const DynamicsLimits ego_limits = settings.sampler.limits;

    AgentState ego = scenario.ego;
    std::vector<LiveAgent> agents;
    AgentId next_id = 0;
    for (const ScenarioAgent& a : scenario.agents) {
        agents.push_back(make_live(a, map, config.seed));
        next_id = std::max(next_id, a.id + 1);
    }
    std::sort(agents.begin(), agents.end(), [](const LiveAgent& x, const LiveAgent& y) { return x.id < y.id; });
    std::mt19937_64 spawn_rng(hash_combine(config.seed, 0x5ba3ull));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::optional<ActivePlan> active;
    int plan_counter = 0;
    StepEvents carried;  // spawn/despawn events that become visible at the next record

    for (long k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * config.sim_dt;
        StepRecord rec;
        rec.t = t;
        rec.events.spawn = std::move(carried.spawn);
        rec.events.despawn = std::move(carried.despawn);
        carried = {};

        if (k < steps && k % replan_every == 0) {
            PlanningProblem problem{t, ego, scenario.ego_footprint, histories(agents), scenario.map, scenario.goal};
            try {
                Plan plan = make_plan(problem, settings, planner,
                                      hash_combine(config.seed, 0x91a0ull + static_cast<std::uint64_t>(k)));
                if (plan.tree.num_stages() == 0 && settings.schedule.num_stages() > 0) {
                    throw Error("no feasible ego trajectory beyond the root stage");
                }
                active = ActivePlan{plan_counter++, std::move(plan), 0, 0, -1};
            } catch (const std::exception& e) {
                active.reset();
                rec.events.planner_error = e.what();
            }
        }

        rec.ego = ego;
        rec.agents = snapshots(agents);
        rec.plan_id = active ? active->plan_id : -1;
        rec.ego_node = active ? active->node : -1;
        for (const LiveAgent& a : agents) {
            if (check_collision(ego, scenario.ego_footprint, a.state, a.footprint)) {
                rec.events.collision.push_back(a.id);
            }
        }
        rec.events.offroad = is_offroad(ego, scenario.ego_footprint, map);
        trace.steps.push_back(std::move(rec));
        if (k == steps) break;

        // agents react to the world as it is at t
        std::vector<AgentState> world;
        world.reserve(agents.size() + 1);
        world.push_back(ego);
        for (const LiveAgent& a : agents) world.push_back(a.state);
        std::vector<UnicycleInput> inputs;
        inputs.reserve(agents.size());
        for (std::size_t i = 0; i < agents.size(); ++i) {
            std::vector<AgentState> others;
            others.reserve(world.size() - 1);
            for (std::size_t j = 0; j < world.size(); ++j) {
                if (j != i + 1) others.push_back(world[j]);
            }
            LiveAgent& a = agents[i];
            inputs.push_back(
                agent_policy_step(a.state, map, a.driver, a.behavior, config.ou, t, config.sim_dt, others));
        }

        const std::vector<AgentSnapshot> observed = snapshots(agents);
        std::optional<AgentState> next_ego;
        if (active) {
            next_ego = advance_plan(*active, observed);
            if (!next_ego) active.reset();
        }
        if (!next_ego) {
            next_ego = integrate_unicycle(ego, {ego_limits.a_min, 0.0}, config.sim_dt, ego_limits);
        }
        ego = *next_ego;

        for (std::size_t i = 0; i < agents.size(); ++i) {
            LiveAgent& a = agents[i];
            a.state = integrate_unicycle(a.state, inputs[i], config.sim_dt, a.behavior.limits);
            a.history.push_back(a.state);
            while (static_cast<int>(a.history.size()) > config.history_length) a.history.pop_front();
        }

        std::vector<LiveAgent> kept;
        kept.reserve(agents.size());
        for (LiveAgent& a : agents) {
            const bool far = norm(a.state.position() - ego.position()) > config.despawn_radius;
            if (far) {
                carried.despawn.push_back(a.id);
            } else {
                kept.push_back(std::move(a));
            }
        }
        agents = std::move(kept);

        if (config.spawn.enabled && static_cast<int>(agents.size()) < config.spawn.max_agents) {
            const double p = config.spawn.rate_per_minute * config.sim_dt / 60.0;
            if (unit(spawn_rng) < p) {
                if (auto spawned = try_spawn(spawn_rng, map, config.spawn, ego, scenario.ego_footprint, agents,
                                             next_id)) {
                    ++next_id;
                    carried.spawn.push_back(spawned->id);
                    agents.push_back(make_live(*spawned, map, config.seed));
                }
            }
        }
    }
    return trace;
}

}  // namespace tpp
