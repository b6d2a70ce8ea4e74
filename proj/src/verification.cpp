#include "tpp/verification.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace tpp {
namespace {

using Json = nlohmann::json;

StageSchedule unit_schedule(int n_stages) {
    StageSchedule s;
    s.stage_durations.assign(static_cast<std::size_t>(n_stages) + 1, 1.0);
    s.dt = 0.1;
    return s;
}

ScenarioTree scenario_from_shape(const std::vector<int>& child_counts, const std::vector<double>& probabilities,
                                 const StageSchedule& schedule) {
    ScenarioTree st;
    st.schedule = schedule;
    st.nodes.push_back({});
    std::size_t next_count = 0;
    for (std::size_t k = 0; k < st.nodes.size(); ++k) {
        if (st.nodes[k].stage == schedule.num_stages()) continue;
        const int n = child_counts.at(next_count++);
        for (int c = 0; c < n; ++c) {
            ScenarioNode child;
            child.id = static_cast<int>(st.nodes.size());
            child.stage = st.nodes[k].stage + 1;
            child.parent = static_cast<int>(k);
            child.probability = probabilities.at(static_cast<std::size_t>(child.id));
            st.nodes[k].children.push_back(child.id);
            st.nodes.push_back(std::move(child));
        }
    }
    return st;
}

std::vector<int> random_shape(std::mt19937_64& rng, int n_stages, int max_branching) {
    std::uniform_int_distribution<int> branches(1, std::max(1, max_branching));
    std::vector<int> counts;
    std::size_t open = 1;
    for (int stage = 0; stage < n_stages; ++stage) {
        std::size_t next_open = 0;
        for (std::size_t k = 0; k < open; ++k) {
            const int n = branches(rng);
            counts.push_back(n);
            next_open += static_cast<std::size_t>(n);
        }
        open = next_open;
    }
    return counts;
}

AgentState random_state(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> pos(-50.0, 50.0);
    std::uniform_real_distribution<double> speed(0.0, 30.0);
    std::uniform_real_distribution<double> angle(-kPi, kPi);
    return {pos(rng), pos(rng), speed(rng), angle(rng)};
}

std::shared_ptr<const LaneGraph> two_lane_road() {
    auto map = std::make_shared<LaneGraph>();
    map->lanes.push_back({0, {{-100.0, 0.0}, {300.0, 0.0}}, 12.0, {}});
    map->lanes.push_back({1, {{-100.0, 3.5}, {300.0, 3.5}}, 12.0, {}});
    map->drivable_area.push_back({{-100.0, -1.75}, {300.0, -1.75}, {300.0, 5.25}, {-100.0, 5.25}});
    return map;
}

std::vector<AgentHistory> random_scene(std::mt19937_64& rng, int max_agents) {
    std::uniform_int_distribution<int> count(1, std::max(1, max_agents));
    std::uniform_real_distribution<double> ahead(-10.0, 40.0);
    std::uniform_real_distribution<double> speed(3.0, 14.0);
    std::bernoulli_distribution lane(0.5);
    std::uniform_real_distribution<double> jitter(-0.3, 0.3);
    const int n = count(rng);
    std::vector<AgentHistory> scene;
    for (int i = 0; i < n; ++i) {
        AgentHistory h;
        h.id = i + 1;
        const double y = lane(rng) ? 3.5 : 0.0;
        const AgentState now{ahead(rng), y + jitter(rng), speed(rng), 0.05 * jitter(rng)};
        h.states = {{now.x - now.v * 0.1, now.y, now.v, now.psi}, now};
        scene.push_back(std::move(h));
    }
    return scene;
}

SamplerConfig small_sampler(std::mt19937_64& rng, int max_branching) {
    SamplerConfig cfg;
    cfg.max_children = std::uniform_int_distribution<int>(1, std::max(1, max_branching))(rng);
    return cfg;
}

StageSchedule short_schedule(int n_stages) {
    StageSchedule s;
    s.stage_durations.assign(static_cast<std::size_t>(n_stages) + 1, 1.0);
    s.stage_durations[0] = 0.1;
    s.dt = 0.1;
    return s;
}

bool values_match(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); }

Json policy_json(const TrajectoryTree& tree, const ScenarioSource& source, const PolicyTable& p) {
    Json out = Json::array();
    for (const auto& [r, e] : reachable_decisions(tree, source, p)) out.push_back({r, e, p.at(r, e)});
    return out;
}

}  // namespace

TrajectoryTree tree_from_shape(const std::vector<int>& child_counts, const StageSchedule& schedule) {
    TrajectoryTree tree;
    tree.schedule = schedule;
    tree.nodes.push_back({});
    std::size_t next_count = 0;
    for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
        if (tree.nodes[k].stage == schedule.num_stages()) continue;
        const int n = child_counts.at(next_count++);
        for (int c = 0; c < n; ++c) {
            TreeNode child;
            child.id = static_cast<int>(tree.nodes.size());
            child.stage = tree.nodes[k].stage + 1;
            child.parent = static_cast<int>(k);
            tree.nodes[k].children.push_back(child.id);
            tree.nodes.push_back(std::move(child));
        }
    }
    return tree;
}

DpInstance random_dp_instance(std::uint64_t seed, int max_stages, int max_branching, bool integer_costs) {
    std::mt19937_64 rng(hash_combine(seed, 0xd9ull));
    DpInstance inst;
    inst.seed = seed;
    const int n_stages = std::uniform_int_distribution<int>(0, std::max(0, max_stages))(rng);
    const StageSchedule schedule = unit_schedule(n_stages);
    inst.tree = tree_from_shape(random_shape(rng, n_stages, max_branching), schedule);

    const std::vector<int> scen_shape = random_shape(rng, n_stages, max_branching);
    std::size_t n_scen = 1;
    for (int c : scen_shape) n_scen += static_cast<std::size_t>(c);
    std::vector<double> probs(n_scen, 1.0);
    {
        std::uniform_real_distribution<double> w(0.05, 1.0);
        std::size_t id = 1;
        for (int c : scen_shape) {
            double sum = 0.0;
            for (int k = 0; k < c; ++k) sum += (probs[id + static_cast<std::size_t>(k)] = w(rng));
            for (int k = 0; k < c; ++k) probs[id + static_cast<std::size_t>(k)] /= sum;
            id += static_cast<std::size_t>(c);
        }
    }
    inst.scenario = scenario_from_shape(scen_shape, probs, schedule);

    inst.costs = CostTensor(inst.tree.nodes.size(), inst.scenario.nodes.size());
    std::uniform_real_distribution<double> cost(0.0, 10.0);
    std::uniform_int_distribution<int> small(0, 2);
    for (const TreeNode& r : inst.tree.nodes) {
        for (const ScenarioNode& e : inst.scenario.nodes) {
            if (e.stage == r.stage) inst.costs.set(r.id, e.id, integer_costs ? small(rng) : cost(rng));
        }
    }
    return inst;
}

DpInstance cut_in_instance() {
    DpInstance inst;
    const StageSchedule schedule = unit_schedule(2);
    // r0 -> nudge (1) -> {pass (2), brake (3)}
    inst.tree = tree_from_shape({1, 2}, schedule);
    // e0 -> {A (1), B (2)}; each continues with one child: A' (3), B' (4)
    inst.scenario = scenario_from_shape({2, 1, 1}, {1.0, 0.5, 0.5, 1.0, 1.0}, schedule);
    inst.costs = CostTensor(inst.tree.nodes.size(), inst.scenario.nodes.size());
    inst.costs.set(0, 0, 0.0);
    inst.costs.set(1, 1, 0.0);
    inst.costs.set(1, 2, 0.0);
    inst.costs.set(2, 3, 10.0);
    inst.costs.set(3, 3, 1.0);
    inst.costs.set(2, 4, 0.0);
    inst.costs.set(3, 4, 1.0);
    return inst;
}

EcInstance random_ec_instance(std::uint64_t seed, int max_stages, int max_branching) {
    std::mt19937_64 rng(hash_combine(seed, 0xecull));
    EcInstance inst;
    inst.seed = seed;
    inst.map = two_lane_road();
    inst.scene = random_scene(rng, 2);
    const int n_stages = std::uniform_int_distribution<int>(1, std::max(1, max_stages))(rng);
    const SamplerConfig sampler = small_sampler(rng, max_branching);
    const int bf = std::uniform_int_distribution<int>(1, std::max(1, max_branching))(rng);
    const AgentState ego{0.0, std::bernoulli_distribution(0.5)(rng) ? 0.0 : 3.5,
                         std::uniform_real_distribution<double>(4.0, 14.0)(rng), 0.0};
    inst.tree = grow_tree(ego, inst.map.get(), short_schedule(n_stages), sampler, hash_combine(seed, 1));
    const KinematicPredictor predictor({}, inst.map);
    inst.ensemble = predict_ensemble(predictor, inst.scene, inst.tree, bf, hash_combine(seed, 2));

    const ScenarioSource source = ScenarioSource::ensemble(inst.ensemble);
    inst.costs = CostTensor(inst.tree.nodes.size(), source.max_scenario_nodes());
    std::uniform_real_distribution<double> cost(0.0, 10.0);
    for (const TreeNode& r : inst.tree.nodes) {
        for (const ScenarioNode& e : source.tree_for(r.id).nodes) {
            if (e.stage == r.stage) inst.costs.set(r.id, e.id, cost(rng));
        }
    }
    return inst;
}

ConsistencyCase random_consistency_case(std::uint64_t seed) {
    std::mt19937_64 rng(hash_combine(seed, 0xccull));
    ConsistencyCase c;
    c.seed = seed;
    c.map = two_lane_road();
    c.scene = random_scene(rng, 3);
    const int n_stages = std::uniform_int_distribution<int>(1, 3)(rng);
    const SamplerConfig sampler = small_sampler(rng, 3);
    c.branching_factor = std::uniform_int_distribution<int>(1, 4)(rng);
    const AgentState ego{0.0, 0.0, std::uniform_real_distribution<double>(4.0, 14.0)(rng), 0.0};
    c.tree = grow_tree(ego, c.map.get(), short_schedule(n_stages), sampler, hash_combine(seed, 1));
    return c;
}

ConsistencyCase adversarial_consistency_case() {
    ConsistencyCase c;
    c.seed = 7;
    c.map = two_lane_road();
    AgentHistory h;
    h.id = 1;
    h.states = {{14.0, 3.5, 9.0, 0.0}};
    c.scene = {h};
    SamplerConfig sampler;
    sampler.max_children = 2;
    c.branching_factor = 2;
    // first seed whose stage-1 node keeps two distinct children
    for (std::uint64_t s = 0;; ++s) {
        TrajectoryTree tree = grow_tree({0.0, 0.0, 10.0, 0.0}, c.map.get(), short_schedule(2), sampler, s);
        const std::vector<int> mid = tree.nodes_at_stage(1);
        if (!mid.empty() && tree.node(mid.front()).children.size() == 2) {
            const auto& kids = tree.node(mid.front()).children;
            const AgentState& a = tree.node(kids[0]).segment.back();
            const AgentState& b = tree.node(kids[1]).segment.back();
            if (std::hypot(a.x - b.x, a.y - b.y) > 1.0) {
                c.tree = std::move(tree);
                c.seed = s;
                return c;
            }
        }
    }
}

Json dp_instance_to_json(const DpInstance& inst) {
    Json ego = Json::array();
    for (const TreeNode& n : inst.tree.nodes) ego.push_back({{"id", n.id}, {"parent", n.parent}, {"stage", n.stage}});
    Json scen = Json::array();
    for (const ScenarioNode& n : inst.scenario.nodes) {
        scen.push_back({{"id", n.id}, {"parent", n.parent}, {"stage", n.stage}, {"probability", n.probability}});
    }
    Json costs = Json::array();
    for (const TreeNode& r : inst.tree.nodes) {
        for (const ScenarioNode& e : inst.scenario.nodes) {
            if (inst.costs.has(r.id, e.id)) costs.push_back({r.id, e.id, inst.costs.at(r.id, e.id)});
        }
    }
    return {{"seed", inst.seed}, {"ego_tree", ego}, {"scenario_tree", scen}, {"costs", costs}};
}

std::vector<SuiteResult> verify_dp_oracle(const VerifyOptions& options) {
    SolveOptions solve;
    solve.prefer_highest_id_on_ties = options.inject_wrong_tiebreak;
    std::vector<SuiteResult> out;

    SuiteResult single;
    single.name = "dp-oracle/single";
    SuiteResult ties;
    ties.name = "dp-oracle/tie-replay";
    for (int i = 0; i < options.instances; ++i) {
        for (const bool integer_costs : {false, true}) {
            SuiteResult& res = integer_costs ? ties : single;
            const std::uint64_t seed = hash_combine(options.seed, static_cast<std::uint64_t>(i));
            const DpInstance inst = random_dp_instance(seed, 3, 3, integer_costs);
            const ScenarioSource source = ScenarioSource::single(inst.scenario);
            try {
                const PolicySolution sol = solve_policy(inst.tree, source, inst.costs, solve);
                const BruteForceResult bf = brute_force_value(inst.tree, source, inst.costs, options.cap);
                const double replay = evaluate_policy(inst.tree, source, inst.costs, sol.policy);
                std::string why;
                if (!values_match(sol.root_value, bf.value)) {
                    why = "dp value differs from brute force";
                } else if (!values_match(replay, sol.root_value)) {
                    why = "replayed policy cost differs from the dp value";
                } else if (integer_costs && !same_reachable_policy(inst.tree, source, sol.policy, bf.policy)) {
                    why = "policy diverges from the canonical lowest-id optimum";
                }
                if (why.empty()) {
                    ++res.passed;
                } else {
                    ++res.failed;
                    if (res.first_failure.empty()) {
                        Json j = dp_instance_to_json(inst);
                        j["reason"] = why;
                        j["dp_value"] = sol.root_value;
                        j["oracle_value"] = bf.value;
                        j["dp_policy"] = policy_json(inst.tree, source, sol.policy);
                        j["oracle_policy"] = policy_json(inst.tree, source, bf.policy);
                        res.first_failure = j.dump();
                    }
                }
            } catch (const TooLarge&) {
                ++res.skipped;
            }
        }
    }
    out.push_back(std::move(single));
    out.push_back(std::move(ties));

    SuiteResult ec;
    ec.name = "dp-oracle/ego-conditioned";
    for (int i = 0; i < options.instances; ++i) {
        const std::uint64_t seed = hash_combine(options.seed ^ 0xec, static_cast<std::uint64_t>(i));
        try {
            const EcInstance inst = random_ec_instance(seed);
            const ScenarioSource source = ScenarioSource::ensemble(inst.ensemble);
            const PolicySolution sol = solve_policy_ec(inst.tree, inst.ensemble, inst.costs, solve);
            const BruteForceResult bf = brute_force_value(inst.tree, source, inst.costs, options.cap);
            const double replay = evaluate_policy(inst.tree, source, inst.costs, sol.policy);
            if (values_match(sol.root_value, bf.value) && values_match(replay, sol.root_value)) {
                ++ec.passed;
            } else {
                ++ec.failed;
                if (ec.first_failure.empty()) {
                    ec.first_failure = Json{{"seed", seed}, {"dp_value", sol.root_value}, {"oracle_value", bf.value},
                                            {"replay", replay}}
                                           .dump();
                }
            }
        } catch (const TooLarge&) {
            ++ec.skipped;
        }
    }
    out.push_back(std::move(ec));
    return out;
}

SuiteResult verify_causal_consistency(const VerifyOptions& options) {
    SuiteResult res;
    res.name = "causal-consistency";
    for (int i = 0; i < options.instances; ++i) {
        const std::uint64_t seed = hash_combine(options.seed ^ 0xcc, static_cast<std::uint64_t>(i));
        const ConsistencyCase c = random_consistency_case(seed);
        const KinematicPredictor mapped({}, c.map);
        const ECPredictionEnsemble ens =
            predict_ensemble_unchecked(mapped, c.scene, c.tree, c.branching_factor, hash_combine(seed, 2));
        const ConsistencyReport rep = check_causal_consistency(ens.modes, ens.trees);
        if (rep.consistent) {
            ++res.passed;
        } else {
            ++res.failed;
            if (res.first_failure.empty()) {
                res.first_failure = nlohmann::json{{"seed", seed}, {"detail", rep.detail}}.dump();
            }
        }
    }
    // the leaking predictor has to be caught
    const ConsistencyCase adv = adversarial_consistency_case();
    const auto inner = std::make_shared<KinematicPredictor>(KinematicPredictorConfig{}, adv.map);
    const FutureLeakingPredictor leaking(inner);
    const ECPredictionEnsemble bad = predict_ensemble_unchecked(leaking, adv.scene, adv.tree, adv.branching_factor, 11);
    const ConsistencyReport rep = check_causal_consistency(bad.modes, bad.trees);
    if (!rep.consistent) {
        ++res.passed;
    } else {
        ++res.failed;
        if (res.first_failure.empty()) {
            res.first_failure = nlohmann::json{{"adversarial_seed", adv.seed}, {"detail", "leak not detected"}}.dump();
        }
    }
    return res;
}

double spline_boundary_residual(const SplineSegment& s, const AgentState& start, const AgentState& terminal) {
    const Vec2 p0 = s.position(0.0);
    const Vec2 p1 = s.position(s.duration);
    const Vec2 v0 = s.velocity(0.0);
    const Vec2 v1 = s.velocity(s.duration);
    const double r[8] = {
        p0.x - start.x,
        p0.y - start.y,
        v0.x - start.v * std::cos(start.psi),
        v0.y - start.v * std::sin(start.psi),
        p1.x - terminal.x,
        p1.y - terminal.y,
        v1.x - terminal.v * std::cos(terminal.psi),
        v1.y - terminal.v * std::sin(terminal.psi),
    };
    double worst = 0.0;
    for (double x : r) worst = std::max(worst, std::abs(x));
    return worst;
}

SuiteResult verify_splines(const VerifyOptions& options) {
    SuiteResult res;
    res.name = "spline";
    std::mt19937_64 rng(hash_combine(options.seed, 0x5b1ull));
    std::uniform_real_distribution<double> duration(0.5, 5.0);
    for (int i = 0; i < options.spline_pairs; ++i) {
        const AgentState a = random_state(rng);
        const AgentState b = random_state(rng);
        const double t = duration(rng);
        const double resid = spline_boundary_residual(fit_spline(a, b, t), a, b);
        if (resid < 1e-9) {
            ++res.passed;
        } else {
            ++res.failed;
            if (res.first_failure.empty()) {
                res.first_failure = nlohmann::json{{"start", {a.x, a.y, a.v, a.psi}},
                                                   {"terminal", {b.x, b.y, b.v, b.psi}},
                                                   {"duration", t},
                                                   {"residual", resid}}
                                        .dump();
            }
        }
    }
    const SplineSegment smooth = fit_spline({0.0, 0.0, 10.0, 0.0}, {20.0, 5.0, 10.0, 0.0}, 2.0);
    if (std::abs(smooth.position(1.0).y - 2.5) <= 1e-12) {
        ++res.passed;
    } else {
        ++res.failed;
        if (res.first_failure.empty()) {
            res.first_failure = nlohmann::json{{"smoothstep_midpoint", smooth.position(1.0).y}}.dump();
        }
    }
    return res;
}

}  // namespace tpp
