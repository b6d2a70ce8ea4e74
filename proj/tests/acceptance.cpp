// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "tpp/cli_runner.hpp"
#include "tpp/metrics.hpp"
#include "tpp/planner.hpp"
#include "tpp/verification.hpp"

using namespace tpp;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = TPP_SOURCE_DIR;
constexpr double kTol = 1e-9;
int g_failures = 0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

void report(int id, bool ok, const std::string& what) {
    std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Minimum expected cost over every root-to-leaf ego path.
double best_fixed_path(const TrajectoryTree& tree, const ScenarioSource& src, const CostTensor& costs) {
    double best = std::numeric_limits<double>::infinity();
    for (const TreeNode& n : tree.nodes) {
        if (!n.children.empty() || n.stage != tree.num_stages()) continue;
        std::vector<int> path;
        for (int id = n.id; id >= 0; id = tree.node(id).parent) path.insert(path.begin(), id);
        best = std::min(best, path_expected_cost(tree, src, costs, path));
    }
    return best;
}

void criterion_1() {
    const auto t0 = Clock::now();
    int ok = 0, bad = 0, oversized = 0;
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 200; ++i) {
        const DpInstance inst = random_dp_instance(hash_combine(0xa1, i));
        const ScenarioSource src = ScenarioSource::single(inst.scenario);
        const PolicySolution sol = solve_policy(inst.tree, inst.scenario, inst.costs);
        try {
            const BruteForceResult bf = brute_force_value(inst.tree, src, inst.costs);
            const double replay = evaluate_policy(inst.tree, src, inst.costs, sol.policy);
            const double err = std::max(std::abs(sol.root_value - bf.value), std::abs(replay - bf.value));
            worst = std::max(worst, err);
            (err <= kTol ? ok : bad)++;
        } catch (const TooLarge&) {
            ++oversized;
        }
    }
    const double secs = seconds_since(t0);
    report(1, bad == 0 && oversized == 0 && ok == 200 && secs < 10.0,
           fmt("DP vs brute force on %d/200 instances (oversized %d), max |err| %.2e, policy replay exact, %.2f s",
               ok, oversized, worst, secs));
}

void criterion_2() {
    int ok = 0, bad = 0, oversized = 0;
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 200; ++i) {
        const EcInstance inst = random_ec_instance(hash_combine(0xa2, i));
        const ScenarioSource src = ScenarioSource::ensemble(inst.ensemble);
        const PolicySolution sol = solve_policy_ec(inst.tree, inst.ensemble, inst.costs);
        try {
            const BruteForceResult bf = brute_force_value(inst.tree, inst.ensemble, inst.costs);
            const double replay = evaluate_policy(inst.tree, src, inst.costs, sol.policy);
            const double err = std::max(std::abs(sol.root_value - bf.value), std::abs(replay - bf.value));
            worst = std::max(worst, err);
            (err <= kTol ? ok : bad)++;
        } catch (const TooLarge&) {
            ++oversized;
        }
    }
    report(2, bad == 0 && oversized == 0 && ok == 200,
           fmt("ego-conditioned DP vs brute force on %d/200 kinematic-ensemble instances (oversized %d), max |err| %.2e",
               ok, oversized, worst));
}

void criterion_3() {
    int consistent = 0;
    for (std::uint64_t i = 0; i < 200; ++i) {
        const ConsistencyCase c = random_consistency_case(hash_combine(0xa3, i));
        const KinematicPredictor predictor({}, c.map);
        try {
            const ECPredictionEnsemble ens =
                predict_ensemble(predictor, c.scene, c.tree, c.branching_factor, hash_combine(i, 2));
            if (ens.validated && check_causal_consistency(ens.modes, ens.trees).consistent) ++consistent;
        } catch (const CausalConsistencyViolation&) {
        }
    }
    const ConsistencyCase adv = adversarial_consistency_case();
    const auto inner = std::make_shared<KinematicPredictor>(KinematicPredictorConfig{}, adv.map);
    const FutureLeakingPredictor leaking(inner);
    bool caught = false;
    try {
        predict_ensemble(leaking, adv.scene, adv.tree, adv.branching_factor, 11);
    } catch (const CausalConsistencyViolation&) {
        caught = true;
    }
    report(3, consistent == 200 && caught,
           fmt("kinematic ensembles consistent on %d/200 cases; leaking predictor %s", consistent,
               caught ? "rejected" : "NOT rejected"));
}

void criterion_4() {
    std::mt19937_64 rng(0xa4);
    std::uniform_real_distribution<double> pos(-50.0, 50.0), speed(0.0, 30.0), heading(-M_PI, M_PI),
        duration(0.5, 5.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const AgentState a{pos(rng), pos(rng), speed(rng), heading(rng)};
        const AgentState b{pos(rng), pos(rng), speed(rng), heading(rng)};
        worst = std::max(worst, spline_boundary_residual(fit_spline(a, b, duration(rng)), a, b));
    }
    const double mid = fit_spline({0, 0, 10, 0}, {20, 5, 10, 0}, 2.0).position(1.0).y;
    report(4, worst < 1e-9 && std::abs(mid - 2.5) <= 1e-12,
           fmt("max boundary residual %.2e over 1000 pairs; smoothstep midpoint %.15f", worst, mid));
}

void criterion_5() {
    const DpInstance cut = cut_in_instance();
    const ScenarioSource cut_src = ScenarioSource::single(cut.scenario);
    const double tpp = solve_policy(cut.tree, cut.scenario, cut.costs).root_value;
    const double tpp_bf = brute_force_value(cut.tree, cut_src, cut.costs).value;
    const double ncr = plan_ncr(cut.tree, cut_src, cut.costs).expected_cost;
    const double ncr_enum = best_fixed_path(cut.tree, cut_src, cut.costs);
    const bool exact = std::abs(tpp - 0.5) <= 1e-12 && std::abs(tpp_bf - 0.5) <= 1e-12 &&
                       std::abs(ncr - 1.0) <= 1e-12 && std::abs(ncr_enum - 1.0) <= 1e-12;
    int dominated = 0;
    for (std::uint64_t i = 0; i < 200; ++i) {
        const DpInstance inst = random_dp_instance(hash_combine(0xa5, i));
        const ScenarioSource src = ScenarioSource::single(inst.scenario);
        const double v = solve_policy(inst.tree, inst.scenario, inst.costs).root_value;
        const double r = plan_ncr(inst.tree, src, inst.costs).expected_cost;
        const double g = plan_ncg(inst.tree, src, inst.costs).expected_cost;
        if (v <= r + kTol && v <= g + kTol && v <= best_fixed_path(inst.tree, src, inst.costs) + kTol) ++dominated;
    }
    report(5, exact && dominated == 200,
           fmt("cut-in TPP %.3f (enumerated %.3f), NCR %.3f (enumerated %.3f); TPP <= NCR, NCG on %d/200", tpp,
               tpp_bf, ncr, ncr_enum, dominated));
}

void criterion_6() {
    const auto t0 = Clock::now();
    PlannerConfig cfg = load_planner_config(kRoot / "configs/default.json");
    const auto res = run_evaluation({kRoot / "scenarios/cut_in.json"}, cfg,
                                    {PlannerKind::tpp, PlannerKind::ncr, PlannerKind::ncg}, 500, 0,
                                    static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
    const double secs = seconds_since(t0);
    struct Count {
        double crash_steps = 0, steps = 0;
        int failed = 0;
    };
    std::map<std::string, Count> c;
    for (const EpisodeMetrics& e : res.episodes) {
        Count& k = c[e.planner];
        if (e.failed) {
            ++k.failed;
            continue;
        }
        k.crash_steps += std::round(e.crash_rate * e.steps);
        k.steps += e.steps;
    }
    const Count& t = c["tpp"];
    const Count& g = c["ncg"];
    const double p1 = t.crash_steps / t.steps, p2 = g.crash_steps / g.steps;
    const double pooled = (t.crash_steps + g.crash_steps) / (t.steps + g.steps);
    const double se = std::sqrt(pooled * (1 - pooled) * (1 / t.steps + 1 / g.steps));
    const double z = se > 0 ? (p1 - p2) / se : 0.0;
    const bool ok = t.failed == 0 && g.failed == 0 && p1 <= p2 && z < 1.96 && secs < 300.0;
    const Count& r = c["ncr"];
    report(6, ok,
           fmt("cut-in, 500 episodes each: crash rate TPP %.4f (%g/%g), NCR %.4f, NCG %.4f (%g/%g); "
               "z(TPP-NCG) = %.2f; %.1f s",
               p1, t.crash_steps, t.steps, r.crash_steps / r.steps, p2, g.crash_steps, g.steps, z, secs));
}

void criterion_7() {
    const Scenario sc = load_scenario(kRoot / "scenarios/cut_in.json");
    PlanningSettings settings;
    settings.sampler.max_children = 4;
    settings.branching_factor = 4;
    std::vector<AgentHistory> scene;
    for (int k = 0; k < 3; ++k) {
        AgentHistory h;
        h.id = k + 1;
        h.states = {{14.0 + 12.0 * k, k % 2 ? 0.0 : 3.5, 9.0, 0.0}};
        scene.push_back(h);
    }
    const AgentState ego{0.0, 0.0, 12.0, 0.0};
    const TrajectoryTree tree = grow_tree(ego, sc.map.get(), settings.schedule, settings.sampler, 1);
    const KinematicPredictor predictor(settings.predictor, sc.map);
    const ECPredictionEnsemble ens = predict_ensemble(predictor, scene, tree, 4, 2);
    const CostTensor costs =
        build_cost_tensor(tree, ScenarioSource::ensemble(ens), sc.ego_footprint, sc.map.get(), settings.weights);
    double best = std::numeric_limits<double>::infinity();
    for (int rep = 0; rep < 5; ++rep) {
        const auto t0 = Clock::now();
        const PolicySolution sol = solve_policy_ec(tree, ens, costs);
        best = std::min(best, seconds_since(t0));
        (void)sol;
    }
    std::size_t scen_nodes = 0;
    for (const auto& t : ens.trees) scen_nodes += t.nodes.size();
    const bool shape = tree.num_stages() == 2 && tree.nodes_at_stage(2).size() == 16;
    report(7, shape && best < 0.050,
           fmt("N=2, branching 4: %zu ego nodes, %zu modes, %zu scenario nodes; solve_policy_ec %.3f ms",
               tree.nodes.size(), ens.modes.size(), scen_nodes, 1e3 * best));
}

SimTrace stepped(const std::vector<Vec2>& pts) {
    SimTrace t;
    t.meta.dt = 0.1;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        StepRecord r;
        r.t = 0.1 * static_cast<double>(k);
        r.ego = {pts[k].x, pts[k].y, 0, 0};
        t.steps.push_back(r);
    }
    return t;
}

Trajectory line(double t0, int n, double x0, double y) {
    Trajectory t;
    t.t0 = t0;
    t.dt = 0.1;
    for (int k = 0; k < n; ++k) t.samples.push_back({x0 + k, y, 10, 0});
    return t;
}

ScenarioTree one_agent_tree(double y) {
    ScenarioTree st;
    st.schedule.stage_durations = {0.1, 1.0};
    ScenarioNode root;
    root.agents.emplace(1, line(0.0, 2, 0.0, y));
    ScenarioNode leaf;
    leaf.id = 1;
    leaf.stage = 1;
    leaf.parent = 0;
    leaf.agents.emplace(1, line(0.1, 11, 1.0, y));
    root.children = {1};
    st.nodes = {root, leaf};
    return st;
}

void criterion_8() {
    const Rates zero = crash_and_offroad_rates(stepped(std::vector<Vec2>(40, Vec2{0, 0})));
    const bool rates_ok = zero.crash == 0.0 && zero.offroad == 0.0;

    std::mt19937_64 rng(0xa8);
    std::normal_distribution<double> step(0.0, 1.0);
    std::uniform_int_distribution<int> len(1, 150);
    int monotone = 0;
    for (int i = 0; i < 50; ++i) {
        std::vector<Vec2> pts{{0, 0}};
        const int n = len(rng), extra = len(rng);
        for (int k = 1; k < n + extra; ++k) pts.push_back({pts.back().x + step(rng), pts.back().y + step(rng)});
        if (kde_coverage(std::vector<Vec2>(pts.begin(), pts.begin() + n)) <= kde_coverage(pts)) ++monotone;
    }

    const std::map<AgentId, Trajectory> realized{{1, line(0.0, 12, 0.0, 0.0)}};
    const DisplacementErrors exact = ade_fde(one_agent_tree(0.0), realized);
    const DisplacementErrors offset = ade_fde(one_agent_tree(1.5), realized);
    const bool de_ok = exact.ade == 0.0 && exact.fde == 0.0 && std::abs(offset.ade - 1.5) <= 1e-12 &&
                       std::abs(offset.fde - 1.5) <= 1e-12;
    report(8, rates_ok && monotone == 50 && de_ok,
           fmt("empty rates (%g, %g); coverage monotone %d/50; ADE/FDE exact (%g, %g), offset 1.5 (%.12f, %.12f)",
               zero.crash, zero.offroad, monotone, exact.ade, exact.fde, offset.ade, offset.fde));
}

void criterion_9() {
    const fs::path tmp = fs::temp_directory_path() / "tpp_acceptance";
    fs::remove_all(tmp);
    std::ostringstream out, err;
    RunOptions a{kRoot / "scenarios/cut_in.json", kRoot / "configs/default.json", tmp / "a", {}, {}};
    RunOptions b = a;
    b.out = tmp / "b";
    const bool ran = cmd_run(a, out, err) == kExitOk && cmd_run(b, out, err) == kExitOk;
    const bool same_run = ran && read_file(a.out / "trace.jsonl") == read_file(b.out / "trace.jsonl") &&
                          read_file(a.out / "report.json") == read_file(b.out / "report.json");

    PlannerConfig cfg;
    cfg.sim.total_duration = 6.0;
    const std::vector<fs::path> files{kRoot / "scenarios/cut_in.json", kRoot / "scenarios/straight_empty.json"};
    const std::vector<fs::path> reversed{files[1], files[0]};
    const auto serial = run_evaluation(files, cfg, {PlannerKind::tpp, PlannerKind::ncr, PlannerKind::ncg}, 4, 0, 1);
    const auto parallel =
        run_evaluation(reversed, cfg, {PlannerKind::ncg, PlannerKind::ncr, PlannerKind::tpp}, 4, 0, 8);
    const bool same_eval = evaluation_csv(serial.episodes, serial.aggregates) ==
                           evaluation_csv(parallel.episodes, parallel.aggregates);
    fs::remove_all(tmp);
    report(9, same_run && same_eval,
           fmt("repeated run byte-identical: %s; eval with 1 vs 8 workers and permuted inputs identical: %s",
               same_run ? "yes" : "no", same_eval ? "yes" : "no"));
}

}  // namespace

int main() {
    const std::pair<int, void (*)()> criteria[] = {{1, criterion_1}, {2, criterion_2}, {3, criterion_3},
                                                  {4, criterion_4}, {5, criterion_5}, {6, criterion_6},
                                                  {7, criterion_7}, {8, criterion_8}, {9, criterion_9}};
    for (const auto& [id, run] : criteria) {
        try {
            run();
        } catch (const std::exception& e) {
            report(id, false, std::string("threw: ") + e.what());
        }
    }
    std::printf("%d of 9 criteria failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
