#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tpp/io.hpp"
#include "tpp/verification.hpp"

namespace tpp {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

struct RunOptions {
    std::filesystem::path scenario;
    std::filesystem::path config;
    std::filesystem::path out;  // directory; receives trace.jsonl and report.json
    std::optional<std::string> planner;
    std::optional<std::uint64_t> seed;
};

/// 0 on success, 2 on validation errors (nothing written), 3 on runtime errors.
int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err);

struct EvalOptions {
    std::filesystem::path scenarios;  // directory of *.json, or a single file
    std::filesystem::path config;
    std::filesystem::path out;  // directory; receives eval.csv and eval.json
    std::vector<std::string> planners{"tpp", "ncr", "ncg"};
    int episodes = 1;
    std::uint64_t seed = 0;
    int jobs = 1;
};

struct EvaluationResult {
    std::vector<EpisodeMetrics> episodes;  // (scenario file, planner, seed) order
    std::vector<AggregateRow> aggregates;
};

/// Cross product of scenarios x planners x seeds [seed, seed + episodes).
/// Planners are deduplicated and put in tpp, ncr, ncg order; scenarios are
/// sorted by file name, so the result does not depend on argument order or
/// on `jobs`.
EvaluationResult run_evaluation(const std::vector<std::filesystem::path>& scenario_files,
                                const PlannerConfig& config, const std::vector<PlannerKind>& planners,
                                int episodes, std::uint64_t seed, int jobs);

/// Nonzero only when every episode failed (3) or the inputs are invalid (2).
int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);

struct VerifyCommandOptions {
    std::string suite = "all";  // dp-oracle | causal-consistency | spline | all
    VerifyOptions verify;
};

/// Prints pass/fail/skip counts per suite; exit 0 iff nothing failed.
int cmd_verify(const VerifyCommandOptions& options, std::ostream& out, std::ostream& err);

}  // namespace tpp
