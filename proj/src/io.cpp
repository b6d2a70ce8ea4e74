#include "tpp/io.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace tpp {
namespace {

struct Ctx {
    std::string source;
    std::string path;

    Ctx at(const std::string& key) const { return {source, path + "/" + key}; }
    Ctx at(std::size_t index) const { return {source, path + "/" + std::to_string(index)}; }
    [[noreturn]] void fail(const std::string& msg) const {
        throw ValidationError(source + ": at " + (path.empty() ? "/" : path) + ": " + msg);
    }
};

void expect_object(const Json& j, const Ctx& ctx) {
    if (!j.is_object()) ctx.fail("expected an object");
}

void expect_array(const Json& j, const Ctx& ctx) {
    if (!j.is_array()) ctx.fail("expected an array");
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const Ctx& ctx) {
    expect_object(j, ctx);
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed) known = known || item.key() == a;
        if (!known) ctx.at(item.key()).fail("unknown key");
    }
}

template <class T>
T as(const Json& j, const Ctx& ctx) {
    if constexpr (std::is_same_v<T, double>) {
        if (!j.is_number()) ctx.fail("expected a number");
    } else if constexpr (std::is_same_v<T, bool>) {
        if (!j.is_boolean()) ctx.fail("expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
        if (!j.is_number_integer()) ctx.fail("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
            if (!j.is_number_unsigned()) ctx.fail("expected a non-negative integer");
        }
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!j.is_string()) ctx.fail("expected a string");
    }
    return j.get<T>();
}

template <class T>
void read(const Json& j, const char* key, T& out, const Ctx& ctx) {
    const auto it = j.find(key);
    if (it != j.end()) out = as<T>(*it, ctx.at(key));
}

template <class T>
void read_list(const Json& j, const char* key, std::vector<T>& out, const Ctx& ctx) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    const Ctx c = ctx.at(key);
    expect_array(*it, c);
    out.clear();
    for (std::size_t i = 0; i < it->size(); ++i) out.push_back(as<T>((*it)[i], c.at(i)));
}

Vec2 read_point(const Json& j, const Ctx& ctx) {
    if (!j.is_array() || j.size() != 2) ctx.fail("expected [x, y]");
    return {as<double>(j[0], ctx.at(0)), as<double>(j[1], ctx.at(1))};
}

std::vector<Vec2> read_points(const Json& j, const Ctx& ctx) {
    expect_array(j, ctx);
    std::vector<Vec2> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read_point(j[i], ctx.at(i)));
    return out;
}

Json points_json(const std::vector<Vec2>& pts) {
    Json out = Json::array();
    for (const Vec2& p : pts) out.push_back({p.x, p.y});
    return out;
}

AgentState read_state(const Json& j, const Ctx& ctx) {
    check_keys(j, {"x", "y", "v", "psi"}, ctx);
    AgentState s;
    read(j, "x", s.x, ctx);
    read(j, "y", s.y, ctx);
    read(j, "v", s.v, ctx);
    read(j, "psi", s.psi, ctx);
    if (s.v < 0.0) ctx.at("v").fail("speed must be >= 0");
    return s;
}

Json state_json(const AgentState& s) { return {{"x", s.x}, {"y", s.y}, {"v", s.v}, {"psi", s.psi}}; }

Footprint read_footprint(const Json& j, const Ctx& ctx) {
    check_keys(j, {"length", "width"}, ctx);
    Footprint f;
    read(j, "length", f.length, ctx);
    read(j, "width", f.width, ctx);
    if (!(f.length > 0.0) || !(f.width > 0.0)) ctx.fail("footprint dimensions must be > 0");
    return f;
}

Json footprint_json(const Footprint& f) { return {{"length", f.length}, {"width", f.width}}; }

DynamicsLimits read_limits(const Json& j, const Ctx& ctx) {
    check_keys(j, {"a_max", "a_min", "omega_max", "v_max", "kappa_max"}, ctx);
    DynamicsLimits l;
    read(j, "a_max", l.a_max, ctx);
    read(j, "a_min", l.a_min, ctx);
    read(j, "omega_max", l.omega_max, ctx);
    read(j, "v_max", l.v_max, ctx);
    read(j, "kappa_max", l.kappa_max, ctx);
    try {
        l.validate();
    } catch (const ValidationError& e) {
        ctx.fail(e.what());
    }
    return l;
}

Json limits_json(const DynamicsLimits& l) {
    return {{"a_max", l.a_max}, {"a_min", l.a_min}, {"omega_max", l.omega_max}, {"v_max", l.v_max},
            {"kappa_max", l.kappa_max}};
}

Goal read_goal(const Json& j, const Ctx& ctx) {
    Goal g;
    if (j.is_null()) return g;
    check_keys(j, {"point", "route"}, ctx);
    if (j.contains("point") && j.contains("route")) ctx.fail("goal takes either a point or a route");
    if (j.contains("point")) g.target = read_point(j["point"], ctx.at("point"));
    if (j.contains("route")) {
        std::vector<int> route;
        read_list(j, "route", route, ctx);
        g.target = route;
    }
    return g;
}

Json goal_json(const Goal& g) {
    if (const auto* p = std::get_if<Vec2>(&g.target)) return {{"point", {p->x, p->y}}};
    if (const auto* r = std::get_if<std::vector<int>>(&g.target)) return {{"route", *r}};
    return nullptr;
}

LaneGraph read_map(const Json& j, const Ctx& ctx) {
    check_keys(j, {"lanes", "drivable_area"}, ctx);
    LaneGraph g;
    if (j.contains("lanes")) {
        const Ctx lc = ctx.at("lanes");
        expect_array(j["lanes"], lc);
        for (std::size_t i = 0; i < j["lanes"].size(); ++i) {
            const Json& lj = j["lanes"][i];
            const Ctx c = lc.at(i);
            check_keys(lj, {"id", "centerline", "speed_limit", "successors"}, c);
            Lane lane;
            read(lj, "id", lane.id, c);
            if (lj.contains("centerline")) lane.centerline = read_points(lj["centerline"], c.at("centerline"));
            read(lj, "speed_limit", lane.speed_limit, c);
            read_list(lj, "successors", lane.successors, c);
            g.lanes.push_back(std::move(lane));
        }
    }
    if (j.contains("drivable_area")) {
        const Ctx dc = ctx.at("drivable_area");
        expect_array(j["drivable_area"], dc);
        for (std::size_t i = 0; i < j["drivable_area"].size(); ++i) {
            g.drivable_area.push_back(read_points(j["drivable_area"][i], dc.at(i)));
        }
    }
    try {
        g.validate();
    } catch (const ValidationError& e) {
        ctx.fail(e.what());
    }
    return g;
}

Json map_json(const LaneGraph& g) {
    Json lanes = Json::array();
    for (const Lane& l : g.lanes) {
        lanes.push_back({{"id", l.id},
                         {"centerline", points_json(l.centerline)},
                         {"speed_limit", l.speed_limit},
                         {"successors", l.successors}});
    }
    Json area = Json::array();
    for (const Polygon& p : g.drivable_area) area.push_back(points_json(p));
    return {{"lanes", lanes}, {"drivable_area", area}};
}

AgentBehavior read_behavior(const Json& j, const Ctx& ctx) {
    check_keys(j, {"desired_speed", "lookahead_time", "min_lookahead", "speed_gain", "headway", "lane_half_width",
                   "lane_change", "limits"},
               ctx);
    AgentBehavior b;
    read(j, "desired_speed", b.desired_speed, ctx);
    read(j, "lookahead_time", b.lookahead_time, ctx);
    read(j, "min_lookahead", b.min_lookahead, ctx);
    read(j, "speed_gain", b.speed_gain, ctx);
    read(j, "headway", b.headway, ctx);
    read(j, "lane_half_width", b.lane_half_width, ctx);
    if (!(b.headway > 0.0) || !(b.min_lookahead > 0.0) || b.lookahead_time < 0.0 || b.speed_gain < 0.0 ||
        !(b.lane_half_width > 0.0)) {
        ctx.fail("behavior parameters out of range");
    }
    if (j.contains("lane_change")) {
        const Json& lj = j["lane_change"];
        const Ctx c = ctx.at("lane_change");
        check_keys(lj, {"target_lane", "probability", "earliest", "latest", "speed_after"}, c);
        read(lj, "target_lane", b.lane_change.target_lane, c);
        read(lj, "probability", b.lane_change.probability, c);
        read(lj, "earliest", b.lane_change.earliest, c);
        read(lj, "latest", b.lane_change.latest, c);
        read(lj, "speed_after", b.lane_change.speed_after, c);
    }
    if (j.contains("limits")) b.limits = read_limits(j["limits"], ctx.at("limits"));
    return b;
}

Json behavior_json(const AgentBehavior& b) {
    return {{"desired_speed", b.desired_speed},
            {"lookahead_time", b.lookahead_time},
            {"min_lookahead", b.min_lookahead},
            {"speed_gain", b.speed_gain},
            {"headway", b.headway},
            {"lane_half_width", b.lane_half_width},
            {"lane_change",
             {{"target_lane", b.lane_change.target_lane},
              {"probability", b.lane_change.probability},
              {"earliest", b.lane_change.earliest},
              {"latest", b.lane_change.latest},
              {"speed_after", b.lane_change.speed_after}}},
            {"limits", limits_json(b.limits)}};
}

Json parse_text(const std::string& text, const std::string& source) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        std::size_t line = 1;
        std::size_t col = 1;
        const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        for (std::size_t i = 0; i < end; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ValidationError(source + ":" + std::to_string(line) + ":" + std::to_string(col) +
                              ": malformed JSON: " + e.what());
    }
}

std::string number(double x) { return Json(x).dump(); }

}  // namespace

void PlannerConfig::validate() const {
    planning.validate();
    sim.validate();
    if (!(kde.bandwidth > 0.0) || !(kde.cell > 0.0)) throw ValidationError("kde bandwidth and cell must be > 0");
    if (std::abs(planning.schedule.dt - sim.sim_dt) > 1e-12) {
        throw ValidationError("sampler schedule dt must equal sim_dt");
    }
}

Scenario parse_scenario(const std::string& text, const std::string& source) {
    const Json j = parse_text(text, source);
    const Ctx ctx{source, ""};
    check_keys(j, {"name", "map", "ego", "agents"}, ctx);
    Scenario s;
    read(j, "name", s.name, ctx);
    if (!j.contains("map")) ctx.fail("missing key 'map'");
    s.map = std::make_shared<const LaneGraph>(read_map(j["map"], ctx.at("map")));
    if (!j.contains("ego")) ctx.fail("missing key 'ego'");
    {
        const Json& ej = j["ego"];
        const Ctx c = ctx.at("ego");
        check_keys(ej, {"state", "footprint", "goal"}, c);
        if (!ej.contains("state")) c.fail("missing key 'state'");
        s.ego = read_state(ej["state"], c.at("state"));
        if (ej.contains("footprint")) s.ego_footprint = read_footprint(ej["footprint"], c.at("footprint"));
        if (ej.contains("goal")) s.goal = read_goal(ej["goal"], c.at("goal"));
    }
    if (j.contains("agents")) {
        const Ctx ac = ctx.at("agents");
        expect_array(j["agents"], ac);
        std::set<AgentId> ids;
        for (std::size_t i = 0; i < j["agents"].size(); ++i) {
            const Json& aj = j["agents"][i];
            const Ctx c = ac.at(i);
            check_keys(aj, {"id", "state", "footprint", "behavior"}, c);
            ScenarioAgent a;
            if (!aj.contains("id")) c.fail("missing key 'id'");
            read(aj, "id", a.id, c);
            if (a.id < 0) c.at("id").fail("agent ids must be >= 0");
            if (!ids.insert(a.id).second) c.at("id").fail("duplicate agent id " + std::to_string(a.id));
            if (!aj.contains("state")) c.fail("missing key 'state'");
            a.state = read_state(aj["state"], c.at("state"));
            if (aj.contains("footprint")) a.footprint = read_footprint(aj["footprint"], c.at("footprint"));
            if (aj.contains("behavior")) a.behavior = read_behavior(aj["behavior"], c.at("behavior"));
            s.agents.push_back(std::move(a));
        }
    }
    try {
        s.validate();
    } catch (const ScenarioError& e) {
        throw ValidationError(source + ": " + e.what());
    }
    return s;
}

Json scenario_to_json(const Scenario& s) {
    Json agents = Json::array();
    for (const ScenarioAgent& a : s.agents) {
        agents.push_back({{"id", a.id},
                          {"state", state_json(a.state)},
                          {"footprint", footprint_json(a.footprint)},
                          {"behavior", behavior_json(a.behavior)}});
    }
    return {{"name", s.name},
            {"map", s.map ? map_json(*s.map) : Json(nullptr)},
            {"ego", {{"state", state_json(s.ego)}, {"footprint", footprint_json(s.ego_footprint)},
                     {"goal", goal_json(s.goal)}}},
            {"agents", agents}};
}

PlannerConfig parse_planner_config(const std::string& text, const std::string& source) {
    const Json j = parse_text(text, source);
    const Ctx ctx{source, ""};
    check_keys(j, {"planner", "seed", "sampler", "predictor", "cost", "ncr_objective", "sim", "metrics"}, ctx);
    PlannerConfig cfg;
    if (j.contains("planner")) {
        try {
            cfg.planner = parse_planner_kind(as<std::string>(j["planner"], ctx.at("planner")));
        } catch (const ValidationError& e) {
            ctx.at("planner").fail(e.what());
        }
    }
    read(j, "seed", cfg.seed, ctx);

    PlanningSettings& p = cfg.planning;
    if (j.contains("sampler")) {
        const Json& sj = j["sampler"];
        const Ctx c = ctx.at("sampler");
        check_keys(sj, {"accel_grid", "yaw_rate_grid", "target_speeds", "lateral_offsets", "lateral_band",
                        "lane_search_radius", "max_children", "dedup_distance", "dedup_heading", "limits",
                        "schedule", "keep_on_road"},
                   c);
        SamplerConfig& s = p.sampler;
        read_list(sj, "accel_grid", s.accel_grid, c);
        read_list(sj, "yaw_rate_grid", s.yaw_rate_grid, c);
        read_list(sj, "target_speeds", s.target_speeds, c);
        read_list(sj, "lateral_offsets", s.lateral_offsets, c);
        read(sj, "lateral_band", s.lateral_band, c);
        read(sj, "lane_search_radius", s.lane_search_radius, c);
        read(sj, "max_children", s.max_children, c);
        read(sj, "dedup_distance", s.dedup_distance, c);
        read(sj, "dedup_heading", s.dedup_heading, c);
        read(sj, "keep_on_road", s.keep_on_road, c);
        if (sj.contains("limits")) s.limits = read_limits(sj["limits"], c.at("limits"));
        if (sj.contains("schedule")) {
            const Json& tj = sj["schedule"];
            const Ctx tc = c.at("schedule");
            check_keys(tj, {"stage_durations", "dt"}, tc);
            read_list(tj, "stage_durations", p.schedule.stage_durations, tc);
            read(tj, "dt", p.schedule.dt, tc);
        }
    }
    if (j.contains("predictor")) {
        const Json& pj = j["predictor"];
        const Ctx c = ctx.at("predictor");
        check_keys(pj, {"kind", "branching_factor", "p_maintain", "p_brake", "brake_decel", "tau_yield",
                        "yield_boost", "corridor_half_width", "lane_snap_distance", "lane_heading_tolerance",
                        "joint_rule"},
                   c);
        std::string kind = "kinematic";
        read(pj, "kind", kind, c);
        if (kind != "kinematic") c.at("kind").fail("unknown predictor kind '" + kind + "'");
        KinematicPredictorConfig& k = p.predictor;
        read(pj, "branching_factor", p.branching_factor, c);
        read(pj, "p_maintain", k.p_maintain, c);
        read(pj, "p_brake", k.p_brake, c);
        read(pj, "brake_decel", k.brake_decel, c);
        read(pj, "tau_yield", k.tau_yield, c);
        read(pj, "yield_boost", k.yield_boost, c);
        read(pj, "corridor_half_width", k.corridor_half_width, c);
        read(pj, "lane_snap_distance", k.lane_snap_distance, c);
        read(pj, "lane_heading_tolerance", k.lane_heading_tolerance, c);
        if (pj.contains("joint_rule")) {
            const std::string rule = as<std::string>(pj["joint_rule"], c.at("joint_rule"));
            if (rule == "product") {
                k.joint_rule = JointModeRule::product;
            } else if (rule == "shared") {
                k.joint_rule = JointModeRule::shared;
            } else {
                c.at("joint_rule").fail("expected 'product' or 'shared'");
            }
        }
    }
    if (j.contains("cost")) {
        const Json& wj = j["cost"];
        const Ctx c = ctx.at("cost");
        check_keys(wj, {"w_collision", "w_lane", "w_goal", "w_comfort", "collision_scale", "horizon_distance"}, c);
        CostWeights& w = p.weights;
        read(wj, "w_collision", w.w_collision, c);
        read(wj, "w_lane", w.w_lane, c);
        read(wj, "w_goal", w.w_goal, c);
        read(wj, "w_comfort", w.w_comfort, c);
        read(wj, "collision_scale", w.collision_scale, c);
        read(wj, "horizon_distance", w.horizon_distance, c);
    }
    if (j.contains("ncr_objective")) {
        const std::string o = as<std::string>(j["ncr_objective"], ctx.at("ncr_objective"));
        if (o == "expectation") {
            p.ncr_objective = RobustObjective::expectation;
        } else if (o == "worst_case") {
            p.ncr_objective = RobustObjective::worst_case;
        } else {
            ctx.at("ncr_objective").fail("expected 'expectation' or 'worst_case'");
        }
    }
    if (j.contains("sim")) {
        const Json& sj = j["sim"];
        const Ctx c = ctx.at("sim");
        check_keys(sj, {"total_duration", "sim_dt", "replan_period", "spawn", "ou", "despawn_radius",
                        "history_length"},
                   c);
        SimConfig& s = cfg.sim;
        read(sj, "total_duration", s.total_duration, c);
        read(sj, "sim_dt", s.sim_dt, c);
        read(sj, "replan_period", s.replan_period, c);
        read(sj, "despawn_radius", s.despawn_radius, c);
        read(sj, "history_length", s.history_length, c);
        if (sj.contains("spawn")) {
            const Json& pj = sj["spawn"];
            const Ctx pc = c.at("spawn");
            check_keys(pj, {"enabled", "rate", "radius_band", "max_agents"}, pc);
            read(pj, "enabled", s.spawn.enabled, pc);
            read(pj, "rate", s.spawn.rate_per_minute, pc);
            read(pj, "max_agents", s.spawn.max_agents, pc);
            if (pj.contains("radius_band")) {
                const Vec2 band = read_point(pj["radius_band"], pc.at("radius_band"));
                s.spawn.radius_min = band.x;
                s.spawn.radius_max = band.y;
            }
        }
        if (sj.contains("ou")) {
            const Json& oj = sj["ou"];
            const Ctx oc = c.at("ou");
            check_keys(oj, {"theta", "mu", "sigma"}, oc);
            read(oj, "theta", s.ou.theta, oc);
            read(oj, "mu", s.ou.mu, oc);
            read(oj, "sigma", s.ou.sigma, oc);
        }
    }
    if (j.contains("metrics")) {
        const Json& mj = j["metrics"];
        const Ctx c = ctx.at("metrics");
        check_keys(mj, {"kde_bandwidth", "kde_cell", "kde_threshold"}, c);
        read(mj, "kde_bandwidth", cfg.kde.bandwidth, c);
        read(mj, "kde_cell", cfg.kde.cell, c);
        if (mj.contains("kde_threshold") && !mj["kde_threshold"].is_null()) {
            read(mj, "kde_threshold", cfg.kde.threshold, c);
        }
    }
    cfg.sim.seed = cfg.seed;
    try {
        cfg.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(source + ": " + e.what());
    }
    return cfg;
}

Json planner_config_to_json(const PlannerConfig& cfg) {
    const PlanningSettings& p = cfg.planning;
    const SamplerConfig& s = p.sampler;
    const KinematicPredictorConfig& k = p.predictor;
    const CostWeights& w = p.weights;
    const SimConfig& sim = cfg.sim;
    return {
        {"planner", to_string(cfg.planner)},
        {"seed", cfg.seed},
        {"sampler",
         {{"accel_grid", s.accel_grid},
          {"yaw_rate_grid", s.yaw_rate_grid},
          {"target_speeds", s.target_speeds},
          {"lateral_offsets", s.lateral_offsets},
          {"lateral_band", s.lateral_band},
          {"lane_search_radius", s.lane_search_radius},
          {"max_children", s.max_children},
          {"dedup_distance", s.dedup_distance},
          {"dedup_heading", s.dedup_heading},
          {"keep_on_road", s.keep_on_road},
          {"limits", limits_json(s.limits)},
          {"schedule", {{"stage_durations", p.schedule.stage_durations}, {"dt", p.schedule.dt}}}}},
        {"predictor",
         {{"kind", "kinematic"},
          {"branching_factor", p.branching_factor},
          {"p_maintain", k.p_maintain},
          {"p_brake", k.p_brake},
          {"brake_decel", k.brake_decel},
          {"tau_yield", k.tau_yield},
          {"yield_boost", k.yield_boost},
          {"corridor_half_width", k.corridor_half_width},
          {"lane_snap_distance", k.lane_snap_distance},
          {"lane_heading_tolerance", k.lane_heading_tolerance},
          {"joint_rule", k.joint_rule == JointModeRule::product ? "product" : "shared"}}},
        {"cost",
         {{"w_collision", w.w_collision},
          {"w_lane", w.w_lane},
          {"w_goal", w.w_goal},
          {"w_comfort", w.w_comfort},
          {"collision_scale", w.collision_scale},
          {"horizon_distance", w.horizon_distance}}},
        {"ncr_objective", p.ncr_objective == RobustObjective::expectation ? "expectation" : "worst_case"},
        {"sim",
         {{"total_duration", sim.total_duration},
          {"sim_dt", sim.sim_dt},
          {"replan_period", sim.replan_period},
          {"despawn_radius", sim.despawn_radius},
          {"history_length", sim.history_length},
          {"spawn",
           {{"enabled", sim.spawn.enabled},
            {"rate", sim.spawn.rate_per_minute},
            {"radius_band", {sim.spawn.radius_min, sim.spawn.radius_max}},
            {"max_agents", sim.spawn.max_agents}}},
          {"ou", {{"theta", sim.ou.theta}, {"mu", sim.ou.mu}, {"sigma", sim.ou.sigma}}}}},
        {"metrics",
         {{"kde_bandwidth", cfg.kde.bandwidth},
          {"kde_cell", cfg.kde.cell},
          {"kde_threshold", cfg.kde.threshold < 0.0 ? Json(nullptr) : Json(cfg.kde.threshold)}}},
    };
}

std::string canonical_dump(const Json& j) { return j.dump(2) + "\n"; }
std::string serialize_scenario(const Scenario& scenario) { return canonical_dump(scenario_to_json(scenario)); }
std::string serialize_planner_config(const PlannerConfig& config) {
    return canonical_dump(planner_config_to_json(config));
}

std::string config_hash(const Scenario& scenario, const PlannerConfig& config) {
    const Json both = {{"scenario", scenario_to_json(scenario)}, {"config", planner_config_to_json(config)}};
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(both.dump())));
    return buf;
}

Scenario load_scenario(const std::filesystem::path& path) {
    return parse_scenario(read_file(path), path.string());
}

PlannerConfig load_planner_config(const std::filesystem::path& path) {
    return parse_planner_config(read_file(path), path.string());
}

std::string trace_to_jsonl(const SimTrace& trace) {
    std::string out;
    const Json meta = {{"type", "meta"},
                       {"scenario", trace.meta.scenario},
                       {"planner", trace.meta.planner},
                       {"seed", trace.meta.seed},
                       {"config_hash", trace.meta.config_hash},
                       {"dt", trace.meta.dt},
                       {"ego_footprint", footprint_json(trace.meta.ego_footprint)},
                       {"steps", trace.steps.size()}};
    out += meta.dump() + "\n";
    for (std::size_t k = 0; k < trace.steps.size(); ++k) {
        const StepRecord& s = trace.steps[k];
        Json agents = Json::array();
        for (const AgentSnapshot& a : s.agents) {
            agents.push_back({{"id", a.id}, {"state", state_json(a.state)}, {"footprint", footprint_json(a.footprint)}});
        }
        Json events = {{"collision", s.events.collision},
                       {"offroad", s.events.offroad},
                       {"spawn", s.events.spawn},
                       {"despawn", s.events.despawn}};
        if (!s.events.planner_error.empty()) events["planner_error"] = s.events.planner_error;
        const Json line = {{"type", "step"}, {"k", k},           {"t", s.t},
                           {"ego", state_json(s.ego)},          {"agents", agents},
                           {"plan_id", s.plan_id},               {"ego_node", s.ego_node},
                           {"events", events}};
        out += line.dump() + "\n";
    }
    return out;
}

SimTrace trace_from_jsonl(const std::string& text) {
    SimTrace trace;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    const auto state = [](const Json& j) {
        return AgentState{j.at("x").get<double>(), j.at("y").get<double>(), j.at("v").get<double>(),
                          j.at("psi").get<double>()};
    };
    const auto fp = [](const Json& j) { return Footprint{j.at("length").get<double>(), j.at("width").get<double>()}; };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const Json j = Json::parse(line);
            if (j.at("type") == "meta") {
                trace.meta.scenario = j.at("scenario").get<std::string>();
                trace.meta.planner = j.at("planner").get<std::string>();
                trace.meta.seed = j.at("seed").get<std::uint64_t>();
                trace.meta.config_hash = j.at("config_hash").get<std::string>();
                trace.meta.dt = j.at("dt").get<double>();
                trace.meta.ego_footprint = fp(j.at("ego_footprint"));
                continue;
            }
            StepRecord s;
            s.t = j.at("t").get<double>();
            s.ego = state(j.at("ego"));
            for (const Json& a : j.at("agents")) {
                s.agents.push_back({a.at("id").get<AgentId>(), state(a.at("state")), fp(a.at("footprint"))});
            }
            s.plan_id = j.at("plan_id").get<int>();
            s.ego_node = j.at("ego_node").get<int>();
            const Json& ev = j.at("events");
            s.events.collision = ev.at("collision").get<std::vector<AgentId>>();
            s.events.offroad = ev.at("offroad").get<bool>();
            s.events.spawn = ev.at("spawn").get<std::vector<AgentId>>();
            s.events.despawn = ev.at("despawn").get<std::vector<AgentId>>();
            if (ev.contains("planner_error")) s.events.planner_error = ev.at("planner_error").get<std::string>();
            trace.steps.push_back(std::move(s));
        } catch (const Json::exception& e) {
            throw ValidationError("trace line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return trace;
}

namespace {

Json episode_json(const EpisodeMetrics& e) {
    Json j = {{"scenario", e.scenario}, {"planner", e.planner}, {"seed", e.seed},   {"failed", e.failed},
              {"steps", e.steps},       {"crash_rate", e.crash_rate}, {"offroad_rate", e.offroad_rate},
              {"coverage", e.coverage}};
    if (e.failed) j["error"] = e.error;
    return j;
}

}  // namespace

Json report_to_json(const MetricReport& report) {
    Json episodes = Json::array();
    for (const EpisodeMetrics& e : report.episodes) episodes.push_back(episode_json(e));
    return {{"crash_rate", report.crash_rate},
            {"offroad_rate", report.offroad_rate},
            {"coverage", report.coverage},
            {"episodes", episodes}};
}

Json evaluation_to_json(const std::vector<EpisodeMetrics>& episodes, const std::vector<AggregateRow>& aggregates) {
    Json eps = Json::array();
    for (const EpisodeMetrics& e : episodes) eps.push_back(episode_json(e));
    Json agg = Json::array();
    for (const AggregateRow& r : aggregates) {
        agg.push_back({{"planner", r.planner},
                       {"crash_rate", r.crash_rate},
                       {"offroad_rate", r.offroad_rate},
                       {"coverage", r.coverage},
                       {"episodes", r.episodes},
                       {"failed", r.failed}});
    }
    return {{"episodes", eps}, {"aggregates", agg}};
}

std::string evaluation_csv(const std::vector<EpisodeMetrics>& episodes, const std::vector<AggregateRow>& aggregates) {
    std::string out = "scenario,planner,seed,crash_rate,offroad_rate,coverage\n";
    for (const EpisodeMetrics& e : episodes) {
        out += e.scenario + "," + e.planner + "," + std::to_string(e.seed) + ",";
        if (e.failed) {
            out += ",,\n";
        } else {
            out += number(e.crash_rate) + "," + number(e.offroad_rate) + "," + std::to_string(e.coverage) + "\n";
        }
    }
    for (const AggregateRow& r : aggregates) {
        out += "ALL," + r.planner + ",mean,";
        if (r.episodes == 0) {
            out += ",,\n";
        } else {
            out += number(r.crash_rate) + "," + number(r.offroad_rate) + "," + number(r.coverage) + "\n";
        }
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(path.string() + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
        out << content;
        if (!out) throw std::runtime_error(tmp.string() + ": write failed");
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace tpp
