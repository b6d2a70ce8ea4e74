#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "tpp/metrics.hpp"
#include "tpp/planner.hpp"
#include "tpp/sim_engine.hpp"

namespace tpp {

using Json = nlohmann::json;

/// Everything one configuration file controls.
struct PlannerConfig {
    PlanningSettings planning;
    PlannerKind planner = PlannerKind::tpp;
    SimConfig sim;
    KdeParams kde;
    std::uint64_t seed = 0;

    void validate() const;
};

// Parsing is strict: unknown keys and wrong types are ValidationErrors whose
// message names the source and the JSON path (or line and column for syntax
// errors). Missing keys take their defaults.
Scenario parse_scenario(const std::string& text, const std::string& source = "<scenario>");
PlannerConfig parse_planner_config(const std::string& text, const std::string& source = "<config>");
Scenario load_scenario(const std::filesystem::path& path);
PlannerConfig load_planner_config(const std::filesystem::path& path);

Json scenario_to_json(const Scenario& scenario);
Json planner_config_to_json(const PlannerConfig& config);

/// Canonical text: sorted keys, two-space indent, trailing newline.
std::string canonical_dump(const Json& j);
std::string serialize_scenario(const Scenario& scenario);
std::string serialize_planner_config(const PlannerConfig& config);

/// FNV-1a of the canonical compact form, as 16 hex digits.
std::string config_hash(const Scenario& scenario, const PlannerConfig& config);

/// One compact JSON object per line: a metadata record first, then one per
/// step.
std::string trace_to_jsonl(const SimTrace& trace);
SimTrace trace_from_jsonl(const std::string& text);

Json report_to_json(const MetricReport& report);
Json evaluation_to_json(const std::vector<EpisodeMetrics>& episodes, const std::vector<AggregateRow>& aggregates);
/// Columns: scenario, planner, seed, crash_rate, offroad_rate, coverage.
/// Aggregate rows use scenario "ALL" and seed "mean"; failed episodes leave
/// the metric cells empty.
std::string evaluation_csv(const std::vector<EpisodeMetrics>& episodes, const std::vector<AggregateRow>& aggregates);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace tpp
