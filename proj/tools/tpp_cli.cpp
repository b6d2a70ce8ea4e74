#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "tpp/cli_runner.hpp"

namespace {

std::vector<std::string> split_list(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    for (const std::string& item : items) {
        std::stringstream ss(item);
        std::string part;
        while (std::getline(ss, part, ',')) {
            if (!part.empty()) out.push_back(part);
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tree policy planning: closed-loop simulation, evaluation and verification"};
    app.require_subcommand(1);

    tpp::RunOptions run;
    std::string run_planner;
    std::uint64_t run_seed = 0;
    CLI::App* run_cmd = app.add_subcommand("run", "Simulate one episode and write trace.jsonl and report.json");
    run_cmd->add_option("--scenario", run.scenario, "Scenario JSON file")->required();
    run_cmd->add_option("--config", run.config, "Planner config JSON file")->required();
    run_cmd->add_option("--out", run.out, "Output directory")->required();
    CLI::Option* planner_opt =
        run_cmd->add_option("--planner", run_planner, "Override the planner")->check(CLI::IsMember({"tpp", "ncr", "ncg"}));
    CLI::Option* seed_opt = run_cmd->add_option("--seed", run_seed, "Override the seed");

    tpp::EvalOptions eval;
    std::vector<std::string> eval_planners{"tpp,ncr,ncg"};
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate planners over scenarios and seeds");
    eval_cmd->add_option("--scenario", eval.scenarios, "Scenario file or directory of scenario files")->required();
    eval_cmd->add_option("--config", eval.config, "Planner config JSON file")->required();
    eval_cmd->add_option("--out", eval.out, "Output directory")->required();
    eval_cmd->add_option("--planner", eval_planners, "Planners, comma separated")->delimiter(' ');
    eval_cmd->add_option("--episodes", eval.episodes, "Episodes per planner and scenario")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--seed", eval.seed, "First episode seed");
    eval_cmd->add_option("--jobs", eval.jobs, "Worker threads")->check(CLI::PositiveNumber);

    tpp::VerifyCommandOptions verify;
    CLI::App* verify_cmd = app.add_subcommand("verify", "Run the randomized verification suites");
    verify_cmd->add_option("--suite", verify.suite, "dp-oracle, causal-consistency, spline or all")
        ->check(CLI::IsMember({"dp-oracle", "causal-consistency", "spline", "all"}));
    verify_cmd->add_option("--cap", verify.verify.cap, "Largest policy count the brute-force oracle enumerates");
    verify_cmd->add_option("--instances", verify.verify.instances, "Random instances per suite");
    verify_cmd->add_option("--seed", verify.verify.seed, "Base seed");
    verify_cmd->add_flag("--inject-wrong-tiebreak", verify.verify.inject_wrong_tiebreak,
                         "Solve with highest-id tie-breaking to exercise the policy replay check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : tpp::kExitValidation;
    }

    if (*run_cmd) {
        if (*planner_opt) run.planner = run_planner;
        if (*seed_opt) run.seed = run_seed;
        return tpp::cmd_run(run, std::cout, std::cerr);
    }
    if (*eval_cmd) {
        eval.planners = split_list(eval_planners);
        return tpp::cmd_eval(eval, std::cout, std::cerr);
    }
    return tpp::cmd_verify(verify, std::cout, std::cerr);
}
