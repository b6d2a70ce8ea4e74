#include <doctest.h>

#include <random>

#include "tpp/metrics.hpp"

using namespace tpp;

namespace {

SimTrace trace_of(const std::vector<Vec2>& positions) {
    SimTrace t;
    t.meta.dt = 0.1;
    for (std::size_t k = 0; k < positions.size(); ++k) {
        StepRecord r;
        r.t = 0.1 * static_cast<double>(k);
        r.ego = {positions[k].x, positions[k].y, 0, 0};
        t.steps.push_back(r);
    }
    return t;
}

Trajectory traj(double t0, int n, double x0, double vx, double y = 0.0) {
    Trajectory t;
    t.t0 = t0;
    t.dt = 0.1;
    for (int k = 0; k < n; ++k) t.samples.push_back({x0 + vx * 0.1 * k, y, vx, 0});
    return t;
}

// Root stage 0.1 s, one stage of 1 s with one child per entry of `offsets`.
ScenarioTree two_stage(const std::vector<double>& offsets) {
    ScenarioTree st;
    st.schedule.stage_durations = {0.1, 1.0};
    ScenarioNode root;
    root.agents.emplace(1, traj(0.0, 2, 0.0, 10.0));
    st.nodes.push_back(root);
    for (double off : offsets) {
        ScenarioNode n;
        n.id = static_cast<int>(st.nodes.size());
        n.stage = 1;
        n.parent = 0;
        n.probability = 1.0 / static_cast<double>(offsets.size());
        auto child = traj(0.1, 11, 1.0, 10.0, off);
        child.samples.front().y = 0.0;  // joins the root endpoint
        n.agents.emplace(1, child);
        st.nodes[0].children.push_back(n.id);
        st.nodes.push_back(n);
    }
    return st;
}

}  // namespace

TEST_CASE("rates without events are zero") {
    const auto t = trace_of(std::vector<Vec2>(50, Vec2{0, 0}));
    const auto r = crash_and_offroad_rates(t);
    CHECK(r.crash == 0.0);
    CHECK(r.offroad == 0.0);
}

TEST_CASE("rates count flagged steps") {
    auto t = trace_of(std::vector<Vec2>(100, Vec2{0, 0}));
    t.steps[10].events.collision = {3};
    t.steps[57].events.collision = {3, 4};
    t.steps[20].events.offroad = true;
    const auto r = crash_and_offroad_rates(t);
    CHECK(r.crash == doctest::Approx(0.02));
    CHECK(r.offroad == doctest::Approx(0.01));

    // Permuting steps leaves the rates alone.
    auto shuffled = t;
    std::mt19937_64 rng(1);
    std::shuffle(shuffled.steps.begin(), shuffled.steps.end(), rng);
    CHECK(crash_and_offroad_rates(shuffled).crash == r.crash);
}

TEST_CASE("empty trace is an error") {
    CHECK_THROWS_AS(crash_and_offroad_rates(SimTrace{}), EmptyTrace);
}

TEST_CASE("recomputed events agree with stored ones") {
    LaneGraph map;
    map.lanes.push_back({0, {{0, 0}, {100, 0}}, 10, {}});
    map.drivable_area.push_back({{0, -3}, {100, -3}, {100, 3}, {0, 3}});
    SimTrace t = trace_of({{10, 0}, {20, 0}, {30, 2.5}, {40, 0}});
    t.meta.ego_footprint = {4.0, 2.0};
    t.steps[1].agents.push_back({7, {21, 0, 0, 0}, {4.0, 2.0}});
    t.steps[3].agents.push_back({8, {60, 0, 0, 0}, {4.0, 2.0}});
    t.steps[1].events.collision = {7};
    t.steps[2].events.offroad = true;
    const auto re = recompute_events(t, map);
    CHECK(re[1].collision == std::vector<AgentId>{7});
    CHECK(re[2].offroad);
    CHECK(re[3].collision.empty());
    CHECK(events_match_geometry(t, map));
    t.steps[3].events.collision = {8};
    CHECK_FALSE(events_match_geometry(t, map));
}

TEST_CASE("stationary coverage matches the closed-form kernel radius") {
    for (double bw : {1.0, 2.0, 3.0}) {
        KdeParams p;
        p.bandwidth = bw;
        const double thr = p.resolved_threshold();
        const double radius = bw * std::sqrt(-2.0 * std::log(thr / gaussian_kernel(0.0, bw)));
        int cells = 0;
        const int reach = static_cast<int>(std::ceil(radius)) + 1;
        for (int i = -reach; i <= reach; ++i)
            for (int j = -reach; j <= reach; ++j)
                if (std::hypot(i, j) <= radius) ++cells;
        const auto t = trace_of(std::vector<Vec2>(30, Vec2{0, 0}));
        CHECK(kde_coverage(t, p) == cells);
    }
    CHECK(kde_coverage(trace_of({{0, 0}})) == 13);
}

TEST_CASE("coverage is deterministic and grows with the visited area") {
    std::vector<Vec2> drive;
    for (int k = 0; k <= 100; ++k) drive.push_back({static_cast<double>(k), 0.0});
    const auto moving = trace_of(drive);
    const auto parked = trace_of(std::vector<Vec2>(101, Vec2{0, 0}));
    CHECK(kde_coverage(moving) == kde_coverage(moving));
    CHECK(kde_coverage(moving) > kde_coverage(parked));
}

TEST_CASE("coverage is monotone under trace extension") {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> step(0.0, 0.8);
    std::uniform_int_distribution<int> len(1, 200);
    for (int pair = 0; pair < 50; ++pair) {
        std::vector<Vec2> pts{{0, 0}};
        const int n = len(rng), extra = len(rng);
        for (int k = 1; k < n + extra; ++k) pts.push_back({pts.back().x + step(rng), pts.back().y + step(rng)});
        const std::vector<Vec2> prefix(pts.begin(), pts.begin() + n);
        CHECK(kde_coverage(prefix) <= kde_coverage(pts));
    }
}

TEST_CASE("ADE/FDE exact cases") {
    std::map<AgentId, Trajectory> realized{{1, traj(0.0, 12, 0.0, 10.0)}};
    auto e = ade_fde(two_stage({0.0}), realized);
    CHECK(e.ade == 0.0);
    CHECK(e.fde == 0.0);

    // Constant 1 m offset at every sample, root included.
    auto shifted = two_stage({1.0});
    for (auto& s : shifted.nodes[0].agents.at(1).samples) s.y = 1.0;
    shifted.nodes[1].agents.at(1).samples.front().y = 1.0;
    e = ade_fde(shifted, realized);
    CHECK(e.ade == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e.fde == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ADE/FDE average modes uniformly") {
    // One exact mode, one that leaves the root 2 m to the side.
    std::map<AgentId, Trajectory> realized{{1, traj(0.0, 12, 0.0, 10.0)}};
    const auto e = ade_fde(two_stage({0.0, 2.0}), realized);
    CHECK(e.fde == doctest::Approx(1.0));
    // 12 concatenated samples, the last 10 of them offset in the second mode.
    CHECK(e.ade == doctest::Approx(0.5 * (0.0 + 2.0 * 10.0 / 12.0)));
    CHECK(e.ade <= 2.0);
}

TEST_CASE("ADE/FDE needs the full horizon") {
    std::map<AgentId, Trajectory> short_realized{{1, traj(0.0, 5, 0.0, 10.0)}};
    CHECK_THROWS_AS(ade_fde(two_stage({0.0}), short_realized), HorizonMismatch);
    std::map<AgentId, Trajectory> missing;
    CHECK_THROWS_AS(ade_fde(two_stage({0.0}), missing), HorizonMismatch);
}

TEST_CASE("episode metrics and aggregation") {
    auto t = trace_of(std::vector<Vec2>(10, Vec2{0, 0}));
    t.meta.planner = "tpp";
    t.meta.scenario = "s";
    t.steps[0].events.collision = {1};
    const auto a = episode_metrics(t);
    CHECK(a.crash_rate == doctest::Approx(0.1));
    CHECK(a.coverage == 13);
    CHECK(a.steps == 10);
    auto b = a;
    b.crash_rate = 0.3;
    EpisodeMetrics failed;
    failed.planner = "tpp";
    failed.failed = true;
    EpisodeMetrics other = a;
    other.planner = "ncg";
    const auto rows = aggregate_by_planner({a, b, failed, other});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].planner == "tpp");
    CHECK(rows[0].crash_rate == doctest::Approx(0.2));
    CHECK(rows[0].episodes == 2);
    CHECK(rows[0].failed == 1);
    const auto rep = aggregate_report({a, b, failed});
    CHECK(rep.crash_rate == doctest::Approx(0.2));
    CHECK(rep.coverage == doctest::Approx(13.0));
    CHECK(rep.episodes.size() == 3);
}
