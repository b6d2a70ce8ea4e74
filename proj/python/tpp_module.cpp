#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tpp/cli_runner.hpp"
#include "tpp/metrics.hpp"

namespace py = pybind11;
using namespace tpp;

namespace {

py::dict metrics_dict(const EpisodeMetrics& m) {
    py::dict d;
    d["scenario"] = m.scenario;
    d["planner"] = m.planner;
    d["seed"] = m.seed;
    d["crash_rate"] = m.crash_rate;
    d["offroad_rate"] = m.offroad_rate;
    d["coverage"] = m.coverage;
    d["steps"] = m.steps;
    d["failed"] = m.failed;
    d["error"] = m.error;
    return d;
}

std::vector<PlannerKind> kinds_of(const std::vector<std::string>& names) {
    std::vector<PlannerKind> out;
    for (const auto& n : names) out.push_back(parse_planner_kind(n));
    return out;
}

}  // namespace

PYBIND11_MODULE(tpp, m) {
    m.doc() = "Tree policy planning: DP over ego and scenario trees, baselines and a closed-loop simulator";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

    py::class_<AgentState>(m, "AgentState")
        .def(py::init<double, double, double, double>(), py::arg("x") = 0.0, py::arg("y") = 0.0,
             py::arg("v") = 0.0, py::arg("psi") = 0.0)
        .def_readwrite("x", &AgentState::x)
        .def_readwrite("y", &AgentState::y)
        .def_readwrite("v", &AgentState::v)
        .def_readwrite("psi", &AgentState::psi)
        .def("__repr__", [](const AgentState& s) {
            return "AgentState(x=" + std::to_string(s.x) + ", y=" + std::to_string(s.y) +
                   ", v=" + std::to_string(s.v) + ", psi=" + std::to_string(s.psi) + ")";
        });

    m.def(
        "spline_position",
        [](const AgentState& start, const AgentState& terminal, double duration, double t) {
            const Vec2 p = fit_spline(start, terminal, duration).position(t);
            return std::make_pair(p.x, p.y);
        },
        py::arg("start"), py::arg("terminal"), py::arg("duration"), py::arg("t"),
        "Position at time t of the cubic Hermite segment between two states.");
    m.def(
        "spline_residual",
        [](const AgentState& start, const AgentState& terminal, double duration) {
            return spline_boundary_residual(fit_spline(start, terminal, duration), start, terminal);
        },
        py::arg("start"), py::arg("terminal"), py::arg("duration"));

    m.def(
        "check_collision",
        [](const AgentState& a, const AgentState& b, double length, double width) {
            return check_collision(a, {length, width}, b, {length, width});
        },
        py::arg("a"), py::arg("b"), py::arg("length") = 4.5, py::arg("width") = 1.8);

    m.def(
        "cut_in_values",
        [] {
            const DpInstance inst = cut_in_instance();
            const ScenarioSource src = ScenarioSource::single(inst.scenario);
            py::dict d;
            d["tpp"] = solve_policy(inst.tree, inst.scenario, inst.costs).root_value;
            d["brute_force"] = brute_force_value(inst.tree, src, inst.costs).value;
            d["ncr"] = plan_ncr(inst.tree, src, inst.costs).expected_cost;
            d["ncg"] = plan_ncg(inst.tree, src, inst.costs).expected_cost;
            return d;
        },
        "Policy value and baseline costs on the built-in cut-in instance.");

    m.def(
        "random_instance_values",
        [](std::uint64_t seed) {
            const DpInstance inst = random_dp_instance(seed);
            const ScenarioSource src = ScenarioSource::single(inst.scenario);
            return std::make_pair(solve_policy(inst.tree, inst.scenario, inst.costs).root_value,
                                  brute_force_value(inst.tree, src, inst.costs).value);
        },
        py::arg("seed"), "(dp value, brute-force value) of a seeded random instance.");

    m.def(
        "kde_coverage",
        [](const std::vector<std::pair<double, double>>& points, double bandwidth) {
            std::vector<Vec2> pts;
            for (const auto& [x, y] : points) pts.push_back({x, y});
            KdeParams p;
            p.bandwidth = bandwidth;
            return kde_coverage(pts, p);
        },
        py::arg("points"), py::arg("bandwidth") = 2.0);

    m.def("default_config", [] { return serialize_planner_config(PlannerConfig{}); },
          "Default planner config as canonical JSON text.");

    m.def(
        "run_episode",
        [](const std::filesystem::path& scenario, const std::string& config_json, const std::string& planner,
           std::uint64_t seed) {
            const Scenario sc = load_scenario(scenario);
            PlannerConfig cfg = parse_planner_config(config_json, "<config>");
            cfg.planner = parse_planner_kind(planner);
            cfg.seed = seed;
            cfg.sim.seed = seed;
            SimTrace trace;
            {
                py::gil_scoped_release release;
                trace = run_closed_loop(sc, cfg.planning, cfg.planner, cfg.sim, config_hash(sc, cfg));
            }
            py::dict d = metrics_dict(episode_metrics(trace, cfg.kde));
            d["trace"] = trace_to_jsonl(trace);
            return d;
        },
        py::arg("scenario"), py::arg("config") = serialize_planner_config(PlannerConfig{}),
        py::arg("planner") = "tpp", py::arg("seed") = 0,
        "Simulate one episode; returns its metrics and the JSONL trace text.");

    m.def(
        "evaluate",
        [](const std::vector<std::filesystem::path>& scenarios, const std::string& config_json,
           const std::vector<std::string>& planners, int episodes, std::uint64_t seed, int jobs) {
            const PlannerConfig cfg = parse_planner_config(config_json, "<config>");
            const auto kinds = kinds_of(planners);
            EvaluationResult res;
            {
                py::gil_scoped_release release;
                res = run_evaluation(scenarios, cfg, kinds, episodes, seed, jobs);
            }
            py::list rows;
            for (const auto& e : res.episodes) rows.append(metrics_dict(e));
            return py::make_tuple(rows, evaluation_csv(res.episodes, res.aggregates));
        },
        py::arg("scenarios"), py::arg("config") = serialize_planner_config(PlannerConfig{}),
        py::arg("planners") = std::vector<std::string>{"tpp", "ncr", "ncg"}, py::arg("episodes") = 1,
        py::arg("seed") = 0, py::arg("jobs") = 1,
        "Cross product of scenarios, planners and seeds; returns (episode rows, csv text).");

    m.def(
        "verify",
        [](int instances, int spline_pairs, std::uint64_t seed) {
            VerifyOptions v;
            v.instances = instances;
            v.spline_pairs = spline_pairs;
            v.seed = seed;
            std::vector<SuiteResult> all;
            {
                py::gil_scoped_release release;
                all = verify_dp_oracle(v);
                all.push_back(verify_causal_consistency(v));
                all.push_back(verify_splines(v));
            }
            py::list out;
            for (const auto& s : all) {
                py::dict d;
                d["name"] = s.name;
                d["passed"] = s.passed;
                d["failed"] = s.failed;
                d["skipped"] = s.skipped;
                d["first_failure"] = s.first_failure;
                out.append(d);
            }
            return out;
        },
        py::arg("instances") = 200, py::arg("spline_pairs") = 1000, py::arg("seed") = 0);
}
