#include <doctest.h>

#include <functional>

#include "tpp/scenario_prediction.hpp"
#include "tpp/verification.hpp"

using namespace tpp;

namespace {

StageSchedule schedule_of(std::vector<double> durations) {
    StageSchedule s;
    s.stage_durations = std::move(durations);
    return s;
}

AgentHistory history(AgentId id, AgentState s) {
    AgentHistory h;
    h.id = id;
    h.states = {s};
    return h;
}

// Ego parked far from every agent, covering the whole horizon.
ECMode parked_mode(const StageSchedule& sched) {
    ECMode m;
    m.ego_trajectory.dt = sched.dt;
    const int steps = static_cast<int>(std::lround(sched.horizon() / sched.dt));
    m.ego_trajectory.samples.assign(static_cast<std::size_t>(steps) + 1, AgentState{0, -100, 0, 0});
    return m;
}

TrajectoryTree chain_tree(double duration) {
    SamplerConfig cfg;
    cfg.max_children = 1;
    return grow_tree({0, -100, 5, 0}, nullptr, schedule_of({0.1, duration}), cfg, 0);
}

// Explicit recursive path walk, independent of the DFS in the library.
void walk(const TrajectoryTree& tree, int id, std::vector<int>& path, std::vector<std::vector<int>>& out) {
    path.push_back(id);
    if (tree.node(id).children.empty()) {
        out.push_back(path);
    } else {
        for (int c : tree.node(id).children) walk(tree, c, path, out);
    }
    path.pop_back();
}

class ConstantVelocity final : public Predictor {
  public:
    std::vector<StageOutcome> predict_stage(const StageQuery& q) const override {
        StageOutcome o;
        o.probability = 1.0;
        for (const auto& h : q.history) {
            Trajectory t;
            t.t0 = q.t0;
            t.dt = q.dt;
            const AgentState s = h.states.back();
            const int steps = static_cast<int>(std::lround(q.duration / q.dt));
            for (int k = 0; k <= steps; ++k) {
                const double d = s.v * q.dt * k;
                t.samples.push_back({s.x + d * std::cos(s.psi), s.y + d * std::sin(s.psi), s.v, s.psi});
            }
            o.trajectories.emplace(h.id, t);
        }
        return {o};
    }
    std::string name() const override { return "cv"; }
};

}  // namespace

TEST_CASE("flatten_ec_modes counts") {
    const auto single = tree_from_shape({}, schedule_of({1.0}));
    CHECK(flatten_ec_modes(single).size() == 1);

    const auto fig1 = tree_from_shape({2, 2, 2}, schedule_of({1, 1, 1}));
    CHECK(flatten_ec_modes(fig1).size() == 4);

    const auto binary = tree_from_shape({2, 2, 2, 2, 2, 2, 2}, schedule_of({1, 1, 1, 1}));
    const auto modes = flatten_ec_modes(binary);
    std::vector<std::vector<int>> paths;
    std::vector<int> scratch;
    walk(binary, 0, scratch, paths);
    REQUIRE(modes.size() == 8);
    for (std::size_t i = 0; i < modes.size(); ++i) {
        CHECK(modes[i].mode_id == static_cast<int>(i));
        CHECK(modes[i].ego_path == paths[i]);
    }
}

TEST_CASE("kinematic rollout kinematics") {
    const KinematicPredictor p;
    const auto keep = p.rollout({0, 0, 10, 0}, false, 0.0, 2.0, 0.1);
    CHECK(keep.back().x == doctest::Approx(20.0));
    CHECK(keep.back().v == 10.0);
    const auto stop = p.rollout({0, 0, 10, 0}, true, 0.0, 2.0, 0.1);
    CHECK(stop.back().x == doctest::Approx(12.0));
    CHECK(stop.back().v == doctest::Approx(2.0));
    const auto full = p.rollout({0, 0, 4, 0}, true, 0.0, 2.0, 0.1);
    CHECK(full.back().x == doctest::Approx(2.0));
    CHECK(full.back().v == 0.0);
}

TEST_CASE("kinematic stage probabilities") {
    const KinematicPredictor p;
    const std::vector<AgentHistory> scene{history(1, {0, 0, 10, 0})};
    StageQuery q;
    q.history = scene;
    q.branching_factor = 4;
    q.duration = 2.0;
    const auto out = p.predict_stage(q);
    REQUIRE(out.size() == 2);
    CHECK(out[0].probability == doctest::Approx(0.7));
    CHECK(out[1].probability == doctest::Approx(0.3));
    CHECK(out[0].probability + out[1].probability == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("joint modes are truncated and renormalized") {
    const KinematicPredictor p;
    const std::vector<AgentHistory> scene{history(1, {0, 0, 10, 0}), history(2, {0, 10, 8, 0}),
                                          history(3, {30, 0, 5, 0})};
    StageQuery q;
    q.history = scene;
    q.branching_factor = 4;
    q.duration = 1.0;
    const auto out = p.predict_stage(q);
    REQUIRE(out.size() == 4);
    double sum = 0.0;
    for (const auto& o : out) {
        sum += o.probability;
        CHECK(o.trajectories.size() == 3);
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
    // Top combination keeps everyone at speed: 0.343 out of the kept mass.
    const double kept = 0.343 + 3 * 0.147;
    CHECK(out[0].probability == doctest::Approx(0.343 / kept));

    KinematicPredictorConfig shared;
    shared.joint_rule = JointModeRule::shared;
    const auto joint = KinematicPredictor(shared).predict_stage(q);
    CHECK(joint.size() == 2);
}

TEST_CASE("ego cutting in boosts the brake prior") {
    const KinematicPredictor p;
    const std::vector<AgentHistory> scene{history(1, {0, 0, 10, 0})};
    Trajectory ego;
    ego.dt = 0.1;
    for (int k = 0; k <= 20; ++k) ego.samples.push_back({8.0 + 0.2 * k, 0.0, 2.0, 0.0});
    StageQuery q;
    q.history = scene;
    q.branching_factor = 2;
    q.duration = 2.0;
    q.ego_segment = &ego;
    const auto out = p.predict_stage(q);
    REQUIRE(out.size() == 2);
    CHECK(out[1].probability == doctest::Approx(0.6 / 1.3));
}

TEST_CASE("constant-velocity chain with branching factor 1") {
    const std::vector<AgentHistory> scene{history(1, {0, 0, 10, 0})};
    const auto sched = schedule_of({0.1, 2.0, 2.0});
    auto mode = parked_mode(sched);
    const auto st = predict_scenario_tree(ConstantVelocity{}, scene, mode, sched, 1, 5);
    REQUIRE(st.nodes.size() == 3);
    CHECK(st.node(1).agents.at(1).back().x == doctest::Approx(10.0 * 2.1));
    CHECK(st.node(2).agents.at(1).back().x == doctest::Approx(10.0 * 4.1));
    CHECK_NOTHROW(st.check_invariants(1));
}

TEST_CASE("two-stage branching-4 tree size") {
    const std::vector<AgentHistory> scene{history(1, {20, 0, 10, 0}), history(2, {40, 3.5, 8, 0})};
    const auto sched = schedule_of({0.1, 2.0, 2.0});
    const auto st = predict_scenario_tree(KinematicPredictor{}, scene, parked_mode(sched), sched, 4, 1);
    CHECK(st.nodes.size() <= 21);
    CHECK(st.nodes.size() == 21);
    CHECK_NOTHROW(st.check_invariants(4));
    double total = 0.0;
    for (int leaf : st.leaves()) total += st.path_probability(leaf);
    CHECK(std::abs(total - 1.0) < 1e-8);
}

TEST_CASE("modes sharing the stage-0 segment share stage-1 subtrees") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto c = random_consistency_case(seed);
        const KinematicPredictor p({}, c.map);
        const auto ens = predict_ensemble(p, c.scene, c.tree, c.branching_factor, seed);
        CHECK(ens.validated);
        for (std::size_t a = 0; a < ens.modes.size(); ++a) {
            for (std::size_t b = a + 1; b < ens.modes.size(); ++b) {
                if (ens.modes[a].ego_path[1] != ens.modes[b].ego_path[1]) continue;
                for (int id : ens.trees[a].nodes_at_stage(1)) CHECK(ens.trees[a].node(id) == ens.trees[b].node(id));
            }
        }
    }
}

TEST_CASE("single-leaf tree gives an ensemble of one") {
    const auto tree = chain_tree(1.0);
    const std::vector<AgentHistory> scene{history(1, {0, 0, 5, 0})};
    const auto ens = predict_ensemble(KinematicPredictor{}, scene, tree, 2, 3);
    CHECK(ens.modes.size() == 1);
    CHECK(ens.validated);
}

TEST_CASE("future-leaking predictor is rejected") {
    const auto c = adversarial_consistency_case();
    const auto inner = std::make_shared<KinematicPredictor>(KinematicPredictorConfig{}, c.map);
    const FutureLeakingPredictor leaking(inner);
    CHECK_THROWS_AS(predict_ensemble(leaking, c.scene, c.tree, c.branching_factor, 11),
                    CausalConsistencyViolation);
    const auto bad = predict_ensemble_unchecked(leaking, c.scene, c.tree, c.branching_factor, 11);
    const auto rep = check_causal_consistency(bad.modes, bad.trees);
    CHECK_FALSE(rep.consistent);
    CHECK((rep.stage == 0 || rep.stage == 1));
}

TEST_CASE("ensemble is reproducible") {
    const auto c = random_consistency_case(3);
    const KinematicPredictor p({}, c.map);
    const auto a = predict_ensemble(p, c.scene, c.tree, c.branching_factor, 9);
    const auto b = predict_ensemble(p, c.scene, c.tree, c.branching_factor, 9);
    REQUIRE(a.trees.size() == b.trees.size());
    for (std::size_t i = 0; i < a.trees.size(); ++i) CHECK(a.trees[i].nodes == b.trees[i].nodes);
}

TEST_CASE("rng keys depend on the ego prefix only") {
    const std::vector<int> p{0, 1};
    CHECK(scenario_rng_key(1, 1, p) == scenario_rng_key(1, 1, p));
    CHECK(scenario_rng_key(1, 1, p) != scenario_rng_key(2, 1, p));
    const std::vector<int> q{0, 2};
    CHECK(scenario_rng_key(1, 1, p) != scenario_rng_key(1, 1, q));
}

TEST_CASE("empty history is a predictor failure") {
    AgentHistory h;
    h.id = 4;
    const std::vector<AgentHistory> scene{h};
    const auto tree = chain_tree(1.0);
    CHECK_THROWS_AS(predict_ensemble(KinematicPredictor{}, scene, tree, 2, 3), PredictorFailure);
}

TEST_CASE("probability invariants are checked") {
    const std::vector<AgentHistory> scene{history(1, {0, 0, 10, 0})};
    const auto sched = schedule_of({0.1, 1.0});
    auto st = predict_scenario_tree(KinematicPredictor{}, scene, parked_mode(sched), sched, 2, 1);
    st.nodes[1].probability += 0.1;
    CHECK_THROWS_AS(st.check_invariants(), StructureError);
}
