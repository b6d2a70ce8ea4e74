#include "tpp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace tpp {

Rates crash_and_offroad_rates(const SimTrace& trace) {
    if (trace.steps.empty()) throw EmptyTrace("trace has no steps");
    std::size_t crash = 0;
    std::size_t off = 0;
    for (const StepRecord& s : trace.steps) {
        crash += s.events.collision.empty() ? 0 : 1;
        off += s.events.offroad ? 1 : 0;
    }
    const double n = static_cast<double>(trace.steps.size());
    return {static_cast<double>(crash) / n, static_cast<double>(off) / n};
}

std::vector<RecomputedEvents> recompute_events(const SimTrace& trace, const LaneGraph& map) {
    std::vector<RecomputedEvents> out;
    out.reserve(trace.steps.size());
    for (const StepRecord& s : trace.steps) {
        RecomputedEvents ev;
        for (const AgentSnapshot& a : s.agents) {
            if (check_collision(s.ego, trace.meta.ego_footprint, a.state, a.footprint)) {
                ev.collision.push_back(a.id);
            }
        }
        ev.offroad = is_offroad(s.ego, trace.meta.ego_footprint, map);
        out.push_back(std::move(ev));
    }
    return out;
}

bool events_match_geometry(const SimTrace& trace, const LaneGraph& map) {
    const std::vector<RecomputedEvents> ev = recompute_events(trace, map);
    for (std::size_t i = 0; i < ev.size(); ++i) {
        const StepEvents& stored = trace.steps[i].events;
        if (stored.collision != ev[i].collision || stored.offroad != ev[i].offroad) return false;
    }
    return true;
}

double gaussian_kernel(double r, double bandwidth) {
    const double h2 = bandwidth * bandwidth;
    return std::exp(-r * r / (2.0 * h2)) / (2.0 * kPi * h2);
}

double default_kde_threshold(double bandwidth) { return gaussian_kernel(1.05 * bandwidth, bandwidth); }

double KdeParams::resolved_threshold() const { return threshold < 0.0 ? default_kde_threshold(bandwidth) : threshold; }

int kde_coverage(const std::vector<Vec2>& positions, const KdeParams& params) {
    if (!(params.bandwidth > 0.0) || !(params.cell > 0.0)) {
        throw ValidationError("kde bandwidth and cell must be > 0");
    }
    if (positions.empty()) return 0;
    const double cell = params.cell;
    std::set<std::pair<long, long>> visited;
    for (const Vec2& p : positions) {
        visited.insert({std::lround(p.x / cell), std::lround(p.y / cell)});
    }
    long min_i = std::numeric_limits<long>::max();
    long max_i = std::numeric_limits<long>::min();
    long min_j = min_i;
    long max_j = max_i;
    for (const auto& [i, j] : visited) {
        min_i = std::min(min_i, i);
        max_i = std::max(max_i, i);
        min_j = std::min(min_j, j);
        max_j = std::max(max_j, j);
    }
    const long pad = static_cast<long>(std::ceil(3.0 * params.bandwidth / cell));
    const double threshold = params.resolved_threshold();
    const double cutoff = 6.0 * params.bandwidth;
    const long reach = static_cast<long>(std::ceil(cutoff / cell));
    int count = 0;
    for (long i = min_i - pad; i <= max_i + pad; ++i) {
        for (long j = min_j - pad; j <= max_j + pad; ++j) {
            double density = 0.0;
            for (auto it = visited.lower_bound({i - reach, std::numeric_limits<long>::min()});
                 it != visited.end() && it->first <= i + reach; ++it) {
                const double dx = static_cast<double>(it->first - i) * cell;
                const double dy = static_cast<double>(it->second - j) * cell;
                const double r = std::hypot(dx, dy);
                if (r <= cutoff) density += gaussian_kernel(r, params.bandwidth);
            }
            if (density >= threshold * (1.0 - 1e-12)) ++count;
        }
    }
    return count;
}

int kde_coverage(const SimTrace& trace, const KdeParams& params) {
    std::vector<Vec2> positions;
    positions.reserve(trace.steps.size());
    for (const StepRecord& s : trace.steps) positions.push_back(s.ego.position());
    return kde_coverage(positions, params);
}

DisplacementErrors ade_fde(const ScenarioTree& predicted, const std::map<AgentId, Trajectory>& realized) {
    double ade_sum = 0.0;
    double fde_sum = 0.0;
    std::size_t pairs = 0;
    for (int leaf : predicted.leaves()) {
        const std::vector<int> path = predicted.path_to(leaf);
        for (const auto& [id, first] : predicted.node(path.front()).agents) {
            Trajectory pred = first;
            for (std::size_t k = 1; k < path.size(); ++k) {
                const auto it = predicted.node(path[k]).agents.find(id);
                if (it == predicted.node(path[k]).agents.end()) {
                    throw HorizonMismatch("agent " + std::to_string(id) + " missing from scenario node " +
                                          std::to_string(path[k]));
                }
                append_trajectory(pred, it->second);
            }
            const auto real = realized.find(id);
            if (real == realized.end()) {
                throw HorizonMismatch("no realized trajectory for agent " + std::to_string(id));
            }
            const Trajectory& r = real->second;
            if (pred.samples.empty()) continue;
            if (std::abs(r.dt - pred.dt) > 1e-9) {
                throw HorizonMismatch("realized dt differs from the prediction dt");
            }
            const double offset = (pred.t0 - r.t0) / r.dt;
            const long first_index = std::lround(offset);
            if (std::abs(offset - static_cast<double>(first_index)) > 1e-6 || first_index < 0 ||
                first_index + static_cast<long>(pred.samples.size()) > static_cast<long>(r.samples.size())) {
                throw HorizonMismatch("realized trajectory of agent " + std::to_string(id) +
                                      " does not cover the prediction horizon");
            }
            double sum = 0.0;
            double last = 0.0;
            for (std::size_t k = 0; k < pred.samples.size(); ++k) {
                const AgentState& a = pred.samples[k];
                const AgentState& b = r.samples[static_cast<std::size_t>(first_index) + k];
                last = std::hypot(a.x - b.x, a.y - b.y);
                sum += last;
            }
            ade_sum += sum / static_cast<double>(pred.samples.size());
            fde_sum += last;
            ++pairs;
        }
    }
    if (pairs == 0) return {};
    return {ade_sum / static_cast<double>(pairs), fde_sum / static_cast<double>(pairs)};
}

EpisodeMetrics episode_metrics(const SimTrace& trace, const KdeParams& kde) {
    EpisodeMetrics m;
    m.scenario = trace.meta.scenario;
    m.planner = trace.meta.planner;
    m.seed = trace.meta.seed;
    const Rates r = crash_and_offroad_rates(trace);
    m.crash_rate = r.crash;
    m.offroad_rate = r.offroad;
    m.coverage = kde_coverage(trace, kde);
    m.steps = static_cast<int>(trace.steps.size());
    return m;
}

MetricReport aggregate_report(std::vector<EpisodeMetrics> episodes) {
    MetricReport rep;
    std::size_t ok = 0;
    for (const EpisodeMetrics& e : episodes) {
        if (e.failed) continue;
        rep.crash_rate += e.crash_rate;
        rep.offroad_rate += e.offroad_rate;
        rep.coverage += e.coverage;
        ++ok;
    }
    if (ok > 0) {
        rep.crash_rate /= static_cast<double>(ok);
        rep.offroad_rate /= static_cast<double>(ok);
        rep.coverage /= static_cast<double>(ok);
    }
    rep.episodes = std::move(episodes);
    return rep;
}

std::vector<AggregateRow> aggregate_by_planner(const std::vector<EpisodeMetrics>& episodes) {
    std::vector<AggregateRow> rows;
    for (const EpisodeMetrics& e : episodes) {
        auto it = std::find_if(rows.begin(), rows.end(), [&](const AggregateRow& r) { return r.planner == e.planner; });
        if (it == rows.end()) {
            rows.push_back({e.planner});
            it = rows.end() - 1;
        }
        if (e.failed) {
            ++it->failed;
            continue;
        }
        it->crash_rate += e.crash_rate;
        it->offroad_rate += e.offroad_rate;
        it->coverage += e.coverage;
        ++it->episodes;
    }
    for (AggregateRow& r : rows) {
        if (r.episodes > 0) {
            r.crash_rate /= r.episodes;
            r.offroad_rate /= r.episodes;
            r.coverage /= r.episodes;
        }
    }
    return rows;
}

}  // namespace tpp
