#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tpp/scenario_prediction.hpp"
#include "tpp/sim_engine.hpp"

namespace tpp {

struct Rates {
    double crash = 0.0;
    double offroad = 0.0;
};

/// Fraction of steps flagged with a collision (resp. offroad) event.
/// Throws EmptyTrace.
Rates crash_and_offroad_rates(const SimTrace& trace);

struct RecomputedEvents {
    std::vector<AgentId> collision;
    bool offroad = false;
};

/// Collision and offroad flags recomputed from the stored states alone.
std::vector<RecomputedEvents> recompute_events(const SimTrace& trace, const LaneGraph& map);
bool events_match_geometry(const SimTrace& trace, const LaneGraph& map);

struct KdeParams {
    double bandwidth = 2.0;  // m
    double cell = 1.0;       // m
    double threshold = -1.0; // < 0: default_kde_threshold(bandwidth)

    double resolved_threshold() const;
};

/// Gaussian kernel value at distance `r`.
double gaussian_kernel(double r, double bandwidth);
/// Kernel value at 1.05 bandwidths. With the 2 m bandwidth and 1 m cells a
/// lone point then covers the 13 cells within 2.1 m.
double default_kde_threshold(double bandwidth);

/// Number of grid cells (centers at integer multiples of `cell`) whose
/// summed kernel density from the visited ego cells reaches the threshold.
/// Visited positions are snapped to their nearest grid center first, so
/// lingering in place does not inflate density and the count is monotone
/// under trace extension.
int kde_coverage(const SimTrace& trace, const KdeParams& params = {});
int kde_coverage(const std::vector<Vec2>& positions, const KdeParams& params = {});

struct DisplacementErrors {
    double ade = 0.0;
    double fde = 0.0;
};

/// Per scenario leaf and per agent, mean and final displacement of the
/// concatenated prediction against the realized motion; uniform mean over
/// every (leaf, agent) pair. Throws HorizonMismatch when `realized` does not
/// cover the predicted samples.
DisplacementErrors ade_fde(const ScenarioTree& predicted, const std::map<AgentId, Trajectory>& realized);

struct EpisodeMetrics {
    std::string scenario;
    std::string planner;
    std::uint64_t seed = 0;
    double crash_rate = 0.0;
    double offroad_rate = 0.0;
    int coverage = 0;
    int steps = 0;
    bool failed = false;
    std::string error;
};

struct MetricReport {
    double crash_rate = 0.0;
    double offroad_rate = 0.0;
    double coverage = 0.0;  // mean cell count over episodes
    std::vector<EpisodeMetrics> episodes;
};

/// Per-planner means over several episodes.
struct AggregateRow {
    std::string planner;
    double crash_rate = 0.0;
    double offroad_rate = 0.0;
    double coverage = 0.0;
    int episodes = 0;
    int failed = 0;
};

/// One row per planner, in first-appearance order of `episodes`.
std::vector<AggregateRow> aggregate_by_planner(const std::vector<EpisodeMetrics>& episodes);

EpisodeMetrics episode_metrics(const SimTrace& trace, const KdeParams& kde = {});
/// Means over the episodes that did not fail.
MetricReport aggregate_report(std::vector<EpisodeMetrics> episodes);

}  // namespace tpp
