#include <doctest.h>

#include <random>

#include "tpp/baseline_planners.hpp"
#include "tpp/policy_dp.hpp"
#include "tpp/verification.hpp"

using namespace tpp;

namespace {

StageSchedule unit(int n) {
    StageSchedule s;
    s.stage_durations.assign(static_cast<std::size_t>(n) + 1, 1.0);
    return s;
}

ScenarioTree scenario_shape(const std::vector<int>& counts, const std::vector<double>& probs, int n) {
    ScenarioTree st;
    st.schedule = unit(n);
    st.nodes.push_back({});
    std::size_t next = 0;
    for (std::size_t k = 0; k < st.nodes.size(); ++k) {
        if (st.nodes[k].stage == n) continue;
        for (int c = 0; c < counts.at(next); ++c) {
            ScenarioNode child;
            child.id = static_cast<int>(st.nodes.size());
            child.stage = st.nodes[k].stage + 1;
            child.parent = static_cast<int>(k);
            child.probability = probs.at(static_cast<std::size_t>(child.id));
            st.nodes[k].children.push_back(child.id);
            st.nodes.push_back(child);
        }
        ++next;
    }
    return st;
}

// Expected cost of a policy by recursion over scenario children, written
// independently of the library's evaluator.
double expected(const TrajectoryTree& tree, const ScenarioTree& st, const CostTensor& L, const PolicyTable& pi,
                int r, int e) {
    double c = L.at(r, e);
    if (tree.node(r).children.empty()) return c;
    const int next = pi.at(r, e);
    for (int child : st.node(e).children) c += st.node(child).probability * expected(tree, st, L, pi, next, child);
    return c;
}

// Expected cost of a fixed ego path against every scenario branch.
double fixed_path_cost(const ScenarioTree& st, const CostTensor& L, const std::vector<int>& path, int e,
                       std::size_t depth) {
    double c = L.at(path[depth], e);
    if (depth + 1 == path.size()) return c;
    for (int child : st.node(e).children) c += st.node(child).probability * fixed_path_cost(st, L, path, child, depth + 1);
    return c;
}

DpInstance n1_example() {
    DpInstance inst;
    inst.tree = tree_from_shape({2}, unit(1));
    inst.scenario = scenario_shape({2}, {1.0, 0.6, 0.4}, 1);
    inst.costs = CostTensor(3, 3);
    inst.costs.set(0, 0, 0.0);
    inst.costs.set(1, 1, 1.0);
    inst.costs.set(1, 2, 5.0);
    inst.costs.set(2, 1, 4.0);
    inst.costs.set(2, 2, 2.0);
    return inst;
}

}  // namespace

TEST_CASE("N=0 value is the root cost") {
    const auto tree = tree_from_shape({}, unit(0));
    const auto st = scenario_shape({}, {1.0}, 0);
    CostTensor L(1, 1);
    L.set(0, 0, 3.25);
    const auto sol = solve_policy(tree, st, L);
    CHECK(sol.root_value == 3.25);
    CHECK_FALSE(sol.policy.has(0, 0));
}

TEST_CASE("N=1 two-by-two example") {
    const auto inst = n1_example();
    const auto sol = solve_policy(inst.tree, inst.scenario, inst.costs);
    CHECK(std::abs(sol.root_value - 2.6) < 1e-12);
    CHECK(sol.policy.at(0, 0) == 1);
    CHECK(sol.values.q_value(1, 0) == doctest::Approx(2.6));
    CHECK(sol.values.q_value(2, 0) == doctest::Approx(3.2));
    const auto bf = brute_force_value(inst.tree, inst.scenario, inst.costs);
    CHECK(std::abs(bf.value - 2.6) < 1e-12);
    CHECK(bf.policy.at(0, 0) == 1);
}

TEST_CASE("cut-in: nudge, observe, decide") {
    const auto inst = cut_in_instance();
    const auto sol = solve_policy(inst.tree, inst.scenario, inst.costs);
    CHECK(std::abs(sol.root_value - 0.5) < 1e-12);
    CHECK(sol.policy.at(0, 0) == 1);
    CHECK(sol.policy.at(1, 1) == 3);  // brake after A
    CHECK(sol.policy.at(1, 2) == 2);  // pass after B
}

TEST_CASE("agreement with brute force and an independent evaluator") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto inst = random_dp_instance(seed);
        const auto sol = solve_policy(inst.tree, inst.scenario, inst.costs);
        const auto bf = brute_force_value(inst.tree, inst.scenario, inst.costs);
        CHECK(std::abs(sol.root_value - bf.value) < 1e-9);
        CHECK(std::abs(expected(inst.tree, inst.scenario, inst.costs, sol.policy, 0, 0) - sol.root_value) < 1e-9);
    }
}

TEST_CASE("Bellman residual is exactly zero") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto inst = random_dp_instance(seed);
        const auto sol = solve_policy(inst.tree, inst.scenario, inst.costs);
        for (const auto& r : inst.tree.nodes) {
            for (const auto& e : inst.scenario.nodes) {
                if (e.stage != r.stage) continue;
                if (r.children.empty()) {
                    CHECK(sol.values.value(r.id, e.id) == inst.costs.at(r.id, e.id));
                    continue;
                }
                double best = std::numeric_limits<double>::infinity();
                for (int c : r.children) best = std::min(best, sol.values.q_value(c, e.id));
                CHECK(sol.values.value(r.id, e.id) == best);
                CHECK(sol.values.q_value(sol.policy.at(r.id, e.id), e.id) == best);
                double expect = 0.0;
                const int c = sol.policy.at(r.id, e.id);
                for (int ch : e.children) expect += inst.scenario.node(ch).probability * sol.values.value(c, ch);
                CHECK(inst.costs.at(r.id, e.id) + expect == sol.values.q_value(c, e.id));
            }
        }
    }
}

TEST_CASE("ties go to the lowest child id") {
    DpInstance inst = n1_example();
    inst.costs.set(2, 1, 1.0);
    inst.costs.set(2, 2, 5.0);
    CHECK(solve_policy(inst.tree, inst.scenario, inst.costs).policy.at(0, 0) == 1);
    SolveOptions wrong;
    wrong.prefer_highest_id_on_ties = true;
    CHECK(solve_policy(inst.tree, inst.scenario, inst.costs, wrong).policy.at(0, 0) == 2);
}

TEST_CASE("positive scaling leaves the policy unchanged") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto inst = random_dp_instance(seed);
        const auto a = solve_policy(inst.tree, inst.scenario, inst.costs);
        const auto b = solve_policy(inst.tree, inst.scenario, inst.costs.scaled(4.0));
        CHECK(a.policy.choice == b.policy.choice);
        CHECK(b.root_value == doctest::Approx(4.0 * a.root_value).epsilon(1e-12));
    }
}

TEST_CASE("policy value dominates every fixed path") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto inst = random_dp_instance(seed);
        const double v = solve_policy(inst.tree, inst.scenario, inst.costs).root_value;
        for (int leaf : inst.tree.leaves()) {
            CHECK(v <= fixed_path_cost(inst.scenario, inst.costs, inst.tree.path_to(leaf), 0, 0) + 1e-9);
        }
    }
}

TEST_CASE("Monte-Carlo rollout estimates the value") {
    const auto inst = random_dp_instance(12, 3, 3);
    const auto sol = solve_policy(inst.tree, inst.scenario, inst.costs);
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int k = 0; k < n; ++k) {
        int r = 0, e = 0;
        double c = inst.costs.at(r, e);
        while (!inst.tree.node(r).children.empty()) {
            r = sol.policy.at(r, e);
            double x = u(rng);
            const auto& kids = inst.scenario.node(e).children;
            int next = kids.back();
            for (int ch : kids) {
                x -= inst.scenario.node(ch).probability;
                if (x < 0.0) {
                    next = ch;
                    break;
                }
            }
            e = next;
            c += inst.costs.at(r, e);
        }
        sum += c;
        sum2 += c * c;
    }
    const double mean = sum / n;
    const double se = std::sqrt(std::max(0.0, sum2 / n - mean * mean) / n);
    CHECK(std::abs(mean - sol.root_value) <= 3.0 * se + 1e-12);
}

TEST_CASE("brute force refuses oversized instances") {
    const auto inst = random_dp_instance(5, 3, 3);
    const double count = count_policies(inst.tree, ScenarioSource::single(inst.scenario));
    if (count > 1.0) {
        CHECK_THROWS_AS(brute_force_value(inst.tree, inst.scenario, inst.costs, count - 1.0), TooLarge);
    }
    CHECK_NOTHROW(brute_force_value(inst.tree, inst.scenario, inst.costs, count));
}

TEST_CASE("stage mismatch is a structure error") {
    const auto tree = tree_from_shape({2}, unit(1));
    const auto st = scenario_shape({2, 1, 1}, {1.0, 0.5, 0.5, 1.0, 1.0}, 2);
    CHECK_THROWS_AS(solve_policy(tree, st, CostTensor(3, 5)), StructureError);
}

TEST_CASE("unset cost cells are an error") {
    CostTensor L(2, 2);
    L.set(0, 0, 1.0);
    CHECK(L.has(0, 0));
    CHECK_FALSE(L.has(1, 1));
    CHECK_THROWS(L.at(1, 1));
}

TEST_CASE("EC solve collapses to the plain solve when trees coincide") {
    const auto inst = random_ec_instance(4);
    // Force every mode to share the first mode's tree.
    ECPredictionEnsemble same = inst.ensemble;
    for (auto& t : same.trees) t = same.trees.front();
    const auto ec = solve_policy_ec(inst.tree, same, inst.costs);
    const auto plain = solve_policy(inst.tree, same.trees.front(), inst.costs);
    CHECK(ec.root_value == plain.root_value);
    CHECK(ec.policy.choice == plain.policy.choice);
}

TEST_CASE("EC solve agrees with the brute-force oracle") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const auto inst = random_ec_instance(seed);
        const auto sol = solve_policy_ec(inst.tree, inst.ensemble, inst.costs);
        const auto bf = brute_force_value(inst.tree, inst.ensemble, inst.costs);
        CHECK(std::abs(sol.root_value - bf.value) < 1e-9);
        const auto src = ScenarioSource::ensemble(inst.ensemble);
        CHECK(std::abs(evaluate_policy(inst.tree, src, inst.costs, sol.policy) - sol.root_value) < 1e-9);
    }
}

TEST_CASE("EC branching-probability shift favours the reassuring child") {
    // Two stage-1 ego children with identical costs; under child 2 the
    // adverse branch is half as likely.
    const auto tree = tree_from_shape({1, 2}, unit(2));
    ECPredictionEnsemble ens;
    ens.modes = flatten_ec_modes(tree);
    REQUIRE(ens.modes.size() == 2);
    const auto st_a = scenario_shape({1, 2}, {1.0, 1.0, 0.6, 0.4}, 2);
    const auto st_b = scenario_shape({1, 2}, {1.0, 1.0, 0.3, 0.7}, 2);
    ens.trees = {st_a, st_b};
    ens.representative_mode.assign(tree.nodes.size(), 0);
    ens.representative_mode[3] = 1;
    ens.validated = check_causal_consistency(ens.modes, ens.trees).consistent;
    REQUIRE(ens.validated);
    CostTensor L(4, 4);
    for (int r = 0; r < 4; ++r)
        for (int e = 0; e < 4; ++e) L.set(r, e, 0.0);
    L.set(2, 2, 10.0);
    L.set(3, 2, 10.0);  // node 2 is the adverse branch in both trees
    const auto sol = solve_policy_ec(tree, ens, L);
    CHECK(sol.policy.at(1, 1) == 3);
    CHECK(sol.root_value == doctest::Approx(3.0));
}

TEST_CASE("branching-4 EC instance matches brute force") {
    // Two stages, four ego children per node, four scenario branches.
    const auto tree = tree_from_shape({4, 4, 4, 4, 4}, unit(2));
    ECPredictionEnsemble ens;
    ens.modes = flatten_ec_modes(tree);
    std::vector<double> probs(21, 0.25);
    probs[0] = 1.0;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    const auto shared_first = scenario_shape({4, 4, 4, 4, 4}, probs, 2);
    for (std::size_t m = 0; m < ens.modes.size(); ++m) {
        ScenarioTree st = shared_first;
        // stage-2 probabilities depend on the stage-2 ego node only
        // through the mode, so every mode may differ from stage 2 on
        const int r2 = ens.modes[m].ego_path[2];
        for (auto& n : st.nodes) {
            if (n.stage == 2) n.probability = (n.id % 4 == r2 % 4) ? 0.4 : 0.2;
        }
        ens.trees.push_back(st);
    }
    ens.representative_mode.assign(tree.nodes.size(), -1);
    for (std::size_t m = ens.modes.size(); m-- > 0;) {
        for (int r : ens.modes[m].ego_path) ens.representative_mode[static_cast<std::size_t>(r)] = static_cast<int>(m);
    }
    const auto rep = check_causal_consistency(ens.modes, ens.trees);
    ens.validated = rep.consistent;
    REQUIRE(ens.validated);
    CostTensor L(tree.nodes.size(), 21);
    for (const auto& r : tree.nodes)
        for (const auto& e : shared_first.nodes)
            if (e.stage == r.stage) L.set(r.id, e.id, u(rng));
    const auto sol = solve_policy_ec(tree, ens, L);
    const auto bf = brute_force_value(tree, ens, L);
    CHECK(std::abs(sol.root_value - bf.value) < 1e-9);
}

TEST_CASE("execute_policy concatenates continuous segments") {
    const auto inst = random_ec_instance(21);
    const auto src = ScenarioSource::ensemble(inst.ensemble);
    const auto sol = solve_policy_ec(inst.tree, inst.ensemble, inst.costs);
    // Follow the first child at each scenario stage.
    std::vector<int> observed{0};
    int r = 0;
    while (!inst.tree.node(r).children.empty()) {
        const int next = sol.policy.at(r, observed.back());
        const auto& st = src.tree_for(next);
        observed.push_back(st.node(observed.back()).children.front());
        r = next;
    }
    const auto traj = execute_policy(inst.tree, src, sol.policy, observed);
    const auto& leaf_path = inst.tree.path_to(r);
    std::size_t expected_samples = 1;
    for (int id : leaf_path) expected_samples += inst.tree.node(id).segment.samples.size() - 1;
    CHECK(traj.samples.size() == expected_samples);
    std::size_t offset = 0;
    for (int id : leaf_path) {
        const auto& seg = inst.tree.node(id).segment;
        for (std::size_t k = 0; k < seg.samples.size(); ++k) {
            CHECK(std::abs(traj.samples[offset + k].x - seg.samples[k].x) < 1e-9);
            CHECK(std::abs(traj.samples[offset + k].y - seg.samples[k].y) < 1e-9);
        }
        offset += seg.samples.size() - 1;
    }
}

TEST_CASE("execute_policy edge cases") {
    const auto inst = cut_in_instance();
    const auto src = ScenarioSource::single(inst.scenario);
    const auto sol = solve_policy(inst.tree, inst.scenario, inst.costs);
    // Structure-only trees have empty segments; the path is what matters.
    std::vector<int> bad{0, 7};
    CHECK_THROWS_AS(execute_policy(inst.tree, src, sol.policy, bad), UnknownNode);
    std::vector<int> wrong_parent{0, 1, 4};
    CHECK_THROWS_AS(execute_policy(inst.tree, src, sol.policy, wrong_parent), UnknownNode);

    const auto root_only = tree_from_shape({}, unit(0));
    const auto st0 = scenario_shape({}, {1.0}, 0);
    const auto s0 = solve_policy(root_only, st0, [] {
        CostTensor L(1, 1);
        L.set(0, 0, 0.0);
        return L;
    }());
    std::vector<int> just_root{0};
    CHECK(execute_policy(root_only, ScenarioSource::single(st0), s0.policy, just_root) == root_only.root().segment);
}

TEST_CASE("reachable decisions and policy comparison") {
    const auto inst = cut_in_instance();
    const auto src = ScenarioSource::single(inst.scenario);
    const auto sol = solve_policy(inst.tree, inst.scenario, inst.costs);
    const auto dec = reachable_decisions(inst.tree, src, sol.policy);
    CHECK(dec.size() == 3);
    CHECK(same_reachable_policy(inst.tree, src, sol.policy, sol.policy));
    auto other = sol.policy;
    other.set(1, 1, 2);
    CHECK_FALSE(same_reachable_policy(inst.tree, src, sol.policy, other));
    CHECK(count_policies(inst.tree, src) == 4.0);
}
