#include "tpp/cli_runner.hpp"

#include <algorithm>
#include <atomic>
#include <ostream>
#include <thread>

namespace tpp {
namespace {

std::vector<PlannerKind> canonical_planners(const std::vector<PlannerKind>& kinds) {
    std::vector<PlannerKind> out;
    for (PlannerKind k : {PlannerKind::tpp, PlannerKind::ncr, PlannerKind::ncg}) {
        if (std::find(kinds.begin(), kinds.end(), k) != kinds.end()) out.push_back(k);
    }
    return out;
}

std::vector<std::filesystem::path> scenario_files(const std::filesystem::path& where) {
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(where)) {
        for (const auto& entry : std::filesystem::directory_iterator(where)) {
            if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw ValidationError(where.string() + ": no scenario files (*.json)");
    } else if (std::filesystem::is_regular_file(where)) {
        files.push_back(where);
    } else {
        throw ValidationError(where.string() + ": no such file or directory");
    }
    return files;
}

void prepare_out_dir(const std::filesystem::path& dir) {
    if (std::filesystem::exists(dir) && !std::filesystem::is_directory(dir)) {
        throw std::runtime_error(dir.string() + ": exists and is not a directory");
    }
    std::filesystem::create_directories(dir);
}

}  // namespace

int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err) {
    Scenario scenario;
    PlannerConfig config;
    try {
        scenario = load_scenario(options.scenario);
        config = load_planner_config(options.config);
        if (options.planner) config.planner = parse_planner_kind(*options.planner);
        if (options.seed) {
            config.seed = *options.seed;
            config.sim.seed = *options.seed;
        }
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    try {
        const SimTrace trace =
            run_closed_loop(scenario, config.planning, config.planner, config.sim, config_hash(scenario, config));
        const MetricReport report = aggregate_report({episode_metrics(trace, config.kde)});
        const std::string trace_text = trace_to_jsonl(trace);
        const std::string report_text = canonical_dump(report_to_json(report));
        prepare_out_dir(options.out);
        write_file_atomic(options.out / "trace.jsonl", trace_text);
        write_file_atomic(options.out / "report.json", report_text);
        out << scenario.name << " " << to_string(config.planner) << " seed " << config.sim.seed
            << ": crash_rate " << report.crash_rate << " offroad_rate " << report.offroad_rate << " coverage "
            << report.coverage << "\n";
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

EvaluationResult run_evaluation(const std::vector<std::filesystem::path>& files, const PlannerConfig& config,
                                const std::vector<PlannerKind>& planners, int episodes, std::uint64_t seed,
                                int jobs) {
    std::vector<std::filesystem::path> sorted = files;
    std::sort(sorted.begin(), sorted.end());
    const std::vector<PlannerKind> kinds = canonical_planners(planners);

    struct Task {
        std::size_t scenario;
        PlannerKind planner;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (std::size_t s = 0; s < sorted.size(); ++s) {
        for (PlannerKind k : kinds) {
            for (int i = 0; i < episodes; ++i) tasks.push_back({s, k, seed + static_cast<std::uint64_t>(i)});
        }
    }
    // a scenario that fails to load fails each of its episodes
    std::vector<std::optional<Scenario>> loaded(sorted.size());
    std::vector<std::string> load_errors(sorted.size());
    for (std::size_t s = 0; s < sorted.size(); ++s) {
        try {
            loaded[s] = load_scenario(sorted[s]);
        } catch (const std::exception& e) {
            load_errors[s] = e.what();
        }
    }

    std::vector<EpisodeMetrics> results(tasks.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            const Task& t = tasks[i];
            EpisodeMetrics& m = results[i];
            m.planner = to_string(t.planner);
            m.seed = t.seed;
            m.scenario = loaded[t.scenario] ? loaded[t.scenario]->name : sorted[t.scenario].stem().string();
            if (!loaded[t.scenario]) {
                m.failed = true;
                m.error = load_errors[t.scenario];
                continue;
            }
            try {
                SimConfig sim = config.sim;
                sim.seed = t.seed;
                PlannerConfig hashed = config;
                hashed.planner = t.planner;
                hashed.seed = t.seed;
                hashed.sim.seed = t.seed;
                const SimTrace trace = run_closed_loop(*loaded[t.scenario], config.planning, t.planner, sim,
                                                       config_hash(*loaded[t.scenario], hashed));
                m = episode_metrics(trace, config.kde);
            } catch (const std::exception& e) {
                m.failed = true;
                m.error = e.what();
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }
    EvaluationResult res;
    res.aggregates = aggregate_by_planner(results);
    res.episodes = std::move(results);
    return res;
}

int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err) {
    std::vector<std::filesystem::path> files;
    PlannerConfig config;
    std::vector<PlannerKind> kinds;
    try {
        files = scenario_files(options.scenarios);
        config = load_planner_config(options.config);
        for (const std::string& p : options.planners) kinds.push_back(parse_planner_kind(p));
        if (kinds.empty()) throw ValidationError("no planners given");
        if (options.episodes < 1) throw ValidationError("episodes must be >= 1");
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    try {
        const EvaluationResult res = run_evaluation(files, config, kinds, options.episodes, options.seed, options.jobs);
        prepare_out_dir(options.out);
        write_file_atomic(options.out / "eval.csv", evaluation_csv(res.episodes, res.aggregates));
        write_file_atomic(options.out / "eval.json", canonical_dump(evaluation_to_json(res.episodes, res.aggregates)));
        std::size_t failed = 0;
        for (const EpisodeMetrics& e : res.episodes) {
            if (e.failed) {
                ++failed;
                err << "episode failed: " << e.scenario << " " << e.planner << " seed " << e.seed << ": " << e.error
                    << "\n";
            }
        }
        out << "planner  episodes  crash%    offroad%  coverage\n";
        for (const AggregateRow& r : res.aggregates) {
            char line[128];
            std::snprintf(line, sizeof line, "%-8s %8d  %8.4f  %8.4f  %8.1f\n", r.planner.c_str(), r.episodes,
                          100.0 * r.crash_rate, 100.0 * r.offroad_rate, r.coverage);
            out << line;
        }
        if (failed == res.episodes.size()) {
            err << "error: every episode failed\n";
            return kExitRuntime;
        }
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

int cmd_verify(const VerifyCommandOptions& options, std::ostream& out, std::ostream& err) {
    const std::string& suite = options.suite;
    if (suite != "all" && suite != "dp-oracle" && suite != "causal-consistency" && suite != "spline") {
        err << "error: unknown suite '" << suite << "' (expected dp-oracle, causal-consistency, spline or all)\n";
        return kExitValidation;
    }
    std::vector<SuiteResult> results;
    if (suite == "all" || suite == "dp-oracle") {
        for (SuiteResult& r : verify_dp_oracle(options.verify)) results.push_back(std::move(r));
    }
    if (suite == "all" || suite == "causal-consistency") results.push_back(verify_causal_consistency(options.verify));
    if (suite == "all" || suite == "spline") results.push_back(verify_splines(options.verify));

    bool ok = true;
    for (const SuiteResult& r : results) {
        out << (r.ok() ? "PASS " : "FAIL ") << r.name << ": " << r.passed << " passed, " << r.failed << " failed, "
            << r.skipped << " skipped\n";
        if (!r.ok()) {
            ok = false;
            err << r.name << " first failing instance: " << r.first_failure << "\n";
        }
    }
    return ok ? kExitOk : kExitFailure;
}

}  // namespace tpp
