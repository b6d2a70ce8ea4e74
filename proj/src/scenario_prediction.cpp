#include "tpp/scenario_prediction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tpp {
namespace {

constexpr double kProbTol = 1e-9;

struct Combo {
    double probability;
    std::vector<std::uint8_t> choice;  // 0 = maintain, 1 = brake, in agent-id order
};

bool combo_before(const Combo& a, const Combo& b) {
    if (a.probability != b.probability) {
        return a.probability > b.probability;
    }
    return a.choice < b.choice;
}

std::string node_context(int stage, int node) {
    std::ostringstream out;
    out << "stage " << stage << ", parent node " << node;
    return out.str();
}

// Compares the first `count` nodes; children are only compared for nodes
// strictly above `last_stage` since deeper children may legitimately differ.
std::optional<int> first_mismatch_stage(const ScenarioTree& a, const ScenarioTree& b, int last_stage) {
    const std::size_t n = std::min(a.nodes.size(), b.nodes.size());
    for (std::size_t i = 0; i < std::max(a.nodes.size(), b.nodes.size()); ++i) {
        const ScenarioNode* na = i < a.nodes.size() ? &a.nodes[i] : nullptr;
        const ScenarioNode* nb = i < b.nodes.size() ? &b.nodes[i] : nullptr;
        const bool in_a = na != nullptr && na->stage <= last_stage;
        const bool in_b = nb != nullptr && nb->stage <= last_stage;
        if (!in_a && !in_b) {
            break;
        }
        if (in_a != in_b || i >= n) {
            return std::min(in_a ? na->stage : last_stage, in_b ? nb->stage : last_stage);
        }
        if (na->stage != nb->stage || na->parent != nb->parent || na->probability != nb->probability ||
            na->agents != nb->agents) {
            return std::min(na->stage, nb->stage);
        }
        if (na->stage < last_stage && na->children != nb->children) {
            return na->stage + 1;
        }
    }
    return std::nullopt;
}

}  // namespace

// ---------------------------------------------------------------- tree types

std::vector<int> ScenarioTree::nodes_at_stage(int stage) const {
    std::vector<int> ids;
    for (const ScenarioNode& n : nodes) {
        if (n.stage == stage) {
            ids.push_back(n.id);
        }
    }
    return ids;
}

std::vector<int> ScenarioTree::leaves() const {
    std::vector<int> ids;
    for (const ScenarioNode& n : nodes) {
        if (n.children.empty()) {
            ids.push_back(n.id);
        }
    }
    return ids;
}

std::vector<int> ScenarioTree::path_to(int id) const {
    std::vector<int> path;
    for (int cur = id; cur >= 0; cur = node(cur).parent) {
        path.push_back(cur);
    }
    std::reverse(path.begin(), path.end());
    return path;
}

double ScenarioTree::path_probability(int id) const {
    double p = 1.0;
    for (int cur = id; cur >= 0; cur = node(cur).parent) {
        p *= node(cur).probability;
    }
    return p;
}

void ScenarioTree::check_invariants(int branching_factor) const {
    if (nodes.empty()) {
        throw StructureError("scenario tree is empty");
    }
    if (nodes.front().parent != -1 || std::fabs(nodes.front().probability - 1.0) > kProbTol) {
        throw StructureError("scenario root must have probability 1 and no parent");
    }
    for (const ScenarioNode& n : nodes) {
        if (n.children.empty()) {
            continue;
        }
        if (branching_factor > 0 && static_cast<int>(n.children.size()) > branching_factor) {
            throw StructureError("scenario node " + std::to_string(n.id) + " exceeds the branching factor");
        }
        double total = 0.0;
        for (int c : n.children) {
            const ScenarioNode& child = node(c);
            total += child.probability;
            if (child.parent != n.id || child.stage != n.stage + 1) {
                throw StructureError("scenario node " + std::to_string(c) + " has a broken parent link");
            }
            for (const auto& [agent, traj] : n.agents) {
                if (!child.agents.contains(agent)) {
                    throw StructureError("agent " + std::to_string(agent) + " vanishes below scenario node " +
                                         std::to_string(n.id));
                }
            }
        }
        if (std::fabs(total - 1.0) > kProbTol) {
            throw StructureError("children of scenario node " + std::to_string(n.id) + " do not sum to 1");
        }
    }
}

Trajectory slice_trajectory(const Trajectory& traj, double t_start, double t_end) {
    const double k0f = (t_start - traj.t0) / traj.dt;
    const double k1f = (t_end - traj.t0) / traj.dt;
    const long k0 = std::lround(k0f);
    const long k1 = std::lround(k1f);
    if (k0 < 0 || k1 >= static_cast<long>(traj.samples.size()) || k1 < k0 || std::fabs(k0f - k0) > 1e-6 ||
        std::fabs(k1f - k1) > 1e-6) {
        throw ScheduleMismatch("slice_trajectory: window outside the trajectory support");
    }
    Trajectory out;
    out.t0 = t_start;
    out.dt = traj.dt;
    out.samples.assign(traj.samples.begin() + k0, traj.samples.begin() + k1 + 1);
    return out;
}

std::vector<ECMode> flatten_ec_modes(const TrajectoryTree& tree) {
    std::vector<ECMode> modes;
    std::vector<int> path;
    std::function<void(int)> walk = [&](int id) {
        path.push_back(id);
        const TreeNode& n = tree.node(id);
        if (n.children.empty()) {
            ECMode mode;
            mode.mode_id = static_cast<int>(modes.size());
            mode.ego_path = path;
            for (int p : path) {
                append_trajectory(mode.ego_trajectory, tree.node(p).segment);
            }
            modes.push_back(std::move(mode));
        } else {
            for (int c : n.children) {
                walk(c);
            }
        }
        path.pop_back();
    };
    walk(0);
    return modes;
}

// ---------------------------------------------------------------- kinematic

void KinematicPredictorConfig::validate() const {
    if (!(p_maintain > 0.0 && p_brake > 0.0)) {
        throw ValidationError("KinematicPredictorConfig: mode priors must be positive");
    }
    if (!(brake_decel > 0.0 && tau_yield >= 0.0 && yield_boost > 0.0 && corridor_half_width >= 0.0)) {
        throw ValidationError("KinematicPredictorConfig: brake_decel and yield_boost must be positive");
    }
}

KinematicPredictor::KinematicPredictor(KinematicPredictorConfig config, std::shared_ptr<const LaneGraph> map)
    : config_(config), map_(std::move(map)) {
    config_.validate();
}

Trajectory KinematicPredictor::rollout(const AgentState& start, bool brake, double t0, double duration,
                                       double dt) const {
    const int steps = static_cast<int>(std::lround(duration / dt));
    const double b = config_.brake_decel;
    auto travelled = [&](double t) {
        if (!brake) {
            return start.v * t;
        }
        const double t_stop = start.v / b;
        return t < t_stop ? start.v * t - 0.5 * b * t * t : 0.5 * start.v * t_stop;
    };
    auto speed = [&](double t) { return brake ? std::max(0.0, start.v - b * t) : start.v; };

    std::optional<NearestLane> lane;
    if (map_ && !map_->lanes.empty()) {
        lane = nearest_lane(*map_, start.position());
        if (lane && (lane->projection.distance > config_.lane_snap_distance ||
                     std::fabs(wrap_angle(start.psi - lane->projection.heading)) > config_.lane_heading_tolerance)) {
            lane.reset();
        }
    }

    Trajectory traj;
    traj.t0 = t0;
    traj.dt = dt;
    traj.samples.reserve(static_cast<std::size_t>(steps) + 1);
    traj.samples.push_back(start);
    for (int k = 1; k <= steps; ++k) {
        const double t = dt * k;
        const double d = travelled(t);
        AgentState s;
        if (lane) {
            const LanePoint p =
                point_along_route(*map_, lane->lane->id, lane->projection.arc_length + d);
            const Vec2 left{-std::sin(p.heading), std::cos(p.heading)};
            const Vec2 pos = p.position + lane->projection.lateral_offset * left;
            s = {pos.x, pos.y, speed(t), wrap_angle(p.heading)};
        } else {
            s = {start.x + d * std::cos(start.psi), start.y + d * std::sin(start.psi), speed(t), start.psi};
        }
        traj.samples.push_back(s);
    }
    return traj;
}

bool KinematicPredictor::ego_cuts_in(const Trajectory& agent_maintain, const Trajectory& ego) const {
    const std::size_t n = std::min(agent_maintain.samples.size(), ego.samples.size());
    for (std::size_t k = 0; k < n; ++k) {
        const AgentState& a = agent_maintain.samples[k];
        const AgentState& e = ego.samples[k];
        const Vec2 rel = e.position() - a.position();
        const double c = std::cos(a.psi);
        const double s = std::sin(a.psi);
        const double dx = rel.x * c + rel.y * s;
        const double dy = -rel.x * s + rel.y * c;
        if (dx <= 0.0 || std::fabs(dy) > config_.corridor_half_width) {
            continue;
        }
        const double closing = a.v - e.v * std::cos(e.psi - a.psi);
        if (closing > 0.0 && dx <= config_.tau_yield * closing) {
            return true;
        }
    }
    return false;
}

std::vector<StageOutcome> KinematicPredictor::predict_stage(const StageQuery& query) const {
    std::vector<const AgentHistory*> agents;
    for (const AgentHistory& h : query.history) {
        if (h.states.empty()) {
            throw PredictorFailure("kinematic predictor: agent " + std::to_string(h.id) + " has no history");
        }
        agents.push_back(&h);
    }
    std::sort(agents.begin(), agents.end(), [](const AgentHistory* a, const AgentHistory* b) { return a->id < b->id; });

    std::vector<std::array<Trajectory, 2>> hyps;
    std::vector<std::array<double, 2>> priors;
    for (const AgentHistory* h : agents) {
        const AgentState& start = h->states.back();
        std::array<Trajectory, 2> pair{rollout(start, false, query.t0, query.duration, query.dt),
                                       rollout(start, true, query.t0, query.duration, query.dt)};
        double pm = config_.p_maintain;
        double pb = config_.p_brake;
        if (query.ego_segment != nullptr && ego_cuts_in(pair[0], *query.ego_segment)) {
            pb *= config_.yield_boost;
        }
        const double total = pm + pb;
        priors.push_back({pm / total, pb / total});
        hyps.push_back(std::move(pair));
    }

    const std::size_t k = static_cast<std::size_t>(std::max(1, query.branching_factor));
    std::vector<Combo> beam{{1.0, {}}};
    if (config_.joint_rule == JointModeRule::product) {
        for (std::size_t a = 0; a < agents.size(); ++a) {
            std::vector<Combo> next;
            next.reserve(beam.size() * 2);
            for (const Combo& c : beam) {
                for (std::uint8_t h = 0; h < 2; ++h) {
                    Combo e = c;
                    e.probability *= priors[a][h];
                    e.choice.push_back(h);
                    next.push_back(std::move(e));
                }
            }
            std::sort(next.begin(), next.end(), combo_before);
            if (next.size() > k) {
                next.resize(k);
            }
            beam = std::move(next);
        }
    } else if (!agents.empty()) {
        Combo keep{1.0, std::vector<std::uint8_t>(agents.size(), 0)};
        Combo stop{1.0, std::vector<std::uint8_t>(agents.size(), 1)};
        for (std::size_t a = 0; a < agents.size(); ++a) {
            keep.probability *= priors[a][0];
            stop.probability *= priors[a][1];
        }
        beam = {keep, stop};
        std::sort(beam.begin(), beam.end(), combo_before);
        if (beam.size() > k) {
            beam.resize(k);
        }
    }

    double total = 0.0;
    for (const Combo& c : beam) {
        total += c.probability;
    }
    std::vector<StageOutcome> out;
    for (const Combo& c : beam) {
        StageOutcome o;
        o.probability = c.probability / total;
        for (std::size_t a = 0; a < agents.size(); ++a) {
            o.trajectories.emplace(agents[a]->id, hyps[a][c.choice[a]]);
        }
        out.push_back(std::move(o));
    }
    return out;
}

std::vector<StageOutcome> FutureLeakingPredictor::predict_stage(const StageQuery& query) const {
    std::vector<StageOutcome> out = inner_->predict_stage(query);
    if (query.mode == nullptr || query.mode->ego_trajectory.samples.empty()) {
        return out;
    }
    // Shift everything by an amount that depends on where the ego ends up
    // at the end of the horizon.
    const AgentState& fin = query.mode->ego_trajectory.back();
    const double shift = 1e-3 * (fin.x + 2.0 * fin.y);
    for (StageOutcome& o : out) {
        for (auto& [id, traj] : o.trajectories) {
            for (AgentState& s : traj.samples) {
                s.x += shift;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------- trees

std::uint64_t scenario_rng_key(std::uint64_t seed, int stage, std::span<const int> path) {
    std::uint64_t h = hash_combine(seed, static_cast<std::uint64_t>(stage));
    for (int p : path) {
        h = hash_combine(h, static_cast<std::uint64_t>(p) + 1u);
    }
    return h;
}

ScenarioTree predict_scenario_tree(const Predictor& predictor, std::span<const AgentHistory> scene,
                                   const ECMode& mode, const StageSchedule& schedule, int branching_factor,
                                   std::uint64_t seed) {
    schedule.validate();
    if (branching_factor < 1) {
        throw ValidationError("predict_scenario_tree: branching_factor must be >= 1");
    }
    const double t_root = mode.ego_trajectory.t0;
    std::vector<AgentHistory> base(scene.begin(), scene.end());
    std::sort(base.begin(), base.end(), [](const AgentHistory& a, const AgentHistory& b) { return a.id < b.id; });

    ScenarioTree tree;
    tree.schedule = schedule;
    for (const AgentHistory& h : base) {
        tree.footprints[h.id] = h.footprint;
    }
    std::vector<std::vector<int>> paths;  // child-index path per node

    auto run_stage = [&](int stage, int parent, int bf) {
        const double t0 = t_root + schedule.stage_start(stage);
        const double duration = schedule.stage_durations[static_cast<std::size_t>(stage)];
        const Trajectory ego = slice_trajectory(mode.ego_trajectory, t0, t0 + duration);

        std::vector<AgentHistory> history = base;
        if (parent >= 0) {
            for (int anc : tree.path_to(parent)) {
                for (AgentHistory& h : history) {
                    const Trajectory& traj = tree.node(anc).agents.at(h.id);
                    h.states.insert(h.states.end(), traj.samples.begin() + 1, traj.samples.end());
                }
            }
        }
        StageQuery q;
        q.history = history;
        q.ego_segment = &ego;
        q.stage = stage;
        const std::vector<int> empty_path;
        q.rng_key = scenario_rng_key(seed, stage, parent >= 0 ? paths[static_cast<std::size_t>(parent)] : empty_path);
        q.branching_factor = bf;
        q.t0 = t0;
        q.duration = duration;
        q.dt = schedule.dt;
        q.mode = &mode;

        std::vector<StageOutcome> outcomes;
        try {
            outcomes = predictor.predict_stage(q);
        } catch (const PredictorFailure& e) {
            throw PredictorFailure(node_context(stage, parent) + ": " + e.what());
        } catch (const std::exception& e) {
            throw PredictorFailure(node_context(stage, parent) + ": " + e.what());
        }
        if (outcomes.empty() || static_cast<int>(outcomes.size()) > bf) {
            throw PredictorFailure(node_context(stage, parent) + ": predictor returned " +
                                   std::to_string(outcomes.size()) + " outcomes for branching factor " +
                                   std::to_string(bf));
        }
        double total = 0.0;
        const std::size_t expected = static_cast<std::size_t>(schedule.stage_steps(stage)) + 1;
        for (const StageOutcome& o : outcomes) {
            if (!std::isfinite(o.probability) || o.probability < 0.0) {
                throw PredictorFailure(node_context(stage, parent) + ": invalid outcome probability");
            }
            total += o.probability;
            if (o.trajectories.size() != base.size()) {
                throw PredictorFailure(node_context(stage, parent) + ": outcome does not cover every agent");
            }
            for (const AgentHistory& h : base) {
                auto it = o.trajectories.find(h.id);
                if (it == o.trajectories.end() || it->second.samples.size() != expected) {
                    throw PredictorFailure(node_context(stage, parent) + ": agent " + std::to_string(h.id) +
                                           " trajectory missing or of wrong length");
                }
            }
        }
        if (!(total > 0.0)) {
            throw PredictorFailure(node_context(stage, parent) + ": outcome probabilities sum to zero");
        }
        for (std::size_t j = 0; j < outcomes.size(); ++j) {
            ScenarioNode n;
            n.id = static_cast<int>(tree.nodes.size());
            n.stage = stage;
            n.parent = parent;
            n.probability = parent >= 0 ? outcomes[j].probability / total : 1.0;
            n.agents = std::move(outcomes[j].trajectories);
            std::vector<int> path = parent >= 0 ? paths[static_cast<std::size_t>(parent)] : std::vector<int>{};
            if (parent >= 0) {
                path.push_back(static_cast<int>(j));
                tree.nodes[static_cast<std::size_t>(parent)].children.push_back(n.id);
            }
            paths.push_back(std::move(path));
            tree.nodes.push_back(std::move(n));
        }
    };

    run_stage(0, -1, 1);
    std::vector<int> frontier{0};
    for (int stage = 1; stage <= schedule.num_stages(); ++stage) {
        for (int parent : frontier) {
            run_stage(stage, parent, branching_factor);
        }
        frontier = tree.nodes_at_stage(stage);
    }
    return tree;
}

// ---------------------------------------------------------------- ensemble

const ScenarioTree& ECPredictionEnsemble::tree_for_ego_node(int ego_node) const {
    if (ego_node < 0 || ego_node >= static_cast<int>(representative_mode.size()) ||
        representative_mode[static_cast<std::size_t>(ego_node)] < 0) {
        throw UnknownNode("ensemble has no mode through ego node " + std::to_string(ego_node));
    }
    return trees.at(static_cast<std::size_t>(representative_mode[static_cast<std::size_t>(ego_node)]));
}

ConsistencyReport check_causal_consistency(const std::vector<ECMode>& modes, const std::vector<ScenarioTree>& trees) {
    ConsistencyReport report;
    for (std::size_t a = 0; a < modes.size(); ++a) {
        for (std::size_t b = a + 1; b < modes.size(); ++b) {
            const auto& pa = modes[a].ego_path;
            const auto& pb = modes[b].ego_path;
            std::size_t common = 0;
            while (common < pa.size() && common < pb.size() && pa[common] == pb[common]) {
                ++common;
            }
            if (common == 0) {
                continue;
            }
            const int shared_stage = static_cast<int>(common) - 1;
            const auto bad = first_mismatch_stage(trees[a], trees[b], shared_stage);
            if (bad && (report.consistent || *bad < report.stage)) {
                report.consistent = false;
                report.mode_a = static_cast<int>(a);
                report.mode_b = static_cast<int>(b);
                report.stage = *bad;
            }
        }
    }
    if (!report.consistent) {
        std::ostringstream out;
        out << "modes " << report.mode_a << " and " << report.mode_b << " share their ego prefix but their "
            << "scenario trees differ at stage " << report.stage;
        report.detail = out.str();
    }
    return report;
}

ECPredictionEnsemble predict_ensemble_unchecked(const Predictor& predictor, std::span<const AgentHistory> scene,
                                                const TrajectoryTree& tree, int branching_factor,
                                                std::uint64_t seed) {
    ECPredictionEnsemble ens;
    ens.modes = flatten_ec_modes(tree);
    ens.trees.reserve(ens.modes.size());
    for (const ECMode& mode : ens.modes) {
        ens.trees.push_back(predict_scenario_tree(predictor, scene, mode, tree.schedule, branching_factor, seed));
    }
    ens.representative_mode.assign(tree.nodes.size(), -1);
    for (const ECMode& mode : ens.modes) {
        for (int id : mode.ego_path) {
            if (ens.representative_mode[static_cast<std::size_t>(id)] < 0) {
                ens.representative_mode[static_cast<std::size_t>(id)] = mode.mode_id;
            }
        }
    }
    return ens;
}

ECPredictionEnsemble predict_ensemble(const Predictor& predictor, std::span<const AgentHistory> scene,
                                      const TrajectoryTree& tree, int branching_factor, std::uint64_t seed) {
    ECPredictionEnsemble ens = predict_ensemble_unchecked(predictor, scene, tree, branching_factor, seed);
    const ConsistencyReport report = check_causal_consistency(ens.modes, ens.trees);
    if (!report.consistent) {
        throw CausalConsistencyViolation(report.detail);
    }
    ens.validated = true;
    return ens;
}

}  // namespace tpp
