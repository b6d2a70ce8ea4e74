#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tpp/ego_sampler.hpp"
#include "tpp/world_model.hpp"

namespace tpp {

using AgentId = int;

/// Observed past of one agent, oldest first; the last entry is the state at
/// the scene time. Spacing is the schedule dt.
struct AgentHistory {
    AgentId id = 0;
    Footprint footprint;
    std::vector<AgentState> states;
};

struct ScenarioNode {
    int id = 0;
    int stage = 0;
    int parent = -1;
    std::vector<int> children;
    double probability = 1.0;  // conditional on the parent
    std::map<AgentId, Trajectory> agents;

    friend bool operator==(const ScenarioNode&, const ScenarioNode&) = default;
};

struct ScenarioTree {
    std::vector<ScenarioNode> nodes;  // ids are indices, assigned stage by stage
    StageSchedule schedule;
    std::map<AgentId, Footprint> footprints;

    int num_stages() const { return schedule.num_stages(); }
    const ScenarioNode& node(int id) const { return nodes.at(static_cast<std::size_t>(id)); }
    bool contains(int id) const { return id >= 0 && id < static_cast<int>(nodes.size()); }
    std::vector<int> nodes_at_stage(int stage) const;
    std::vector<int> leaves() const;
    std::vector<int> path_to(int id) const;
    /// Product of branch probabilities from the root down to `id`.
    double path_probability(int id) const;
    /// Throws StructureError if probabilities or agent sets are inconsistent.
    void check_invariants(int branching_factor = -1) const;
};

/// One flattened root-to-leaf path of the ego tree.
struct ECMode {
    int mode_id = 0;
    std::vector<int> ego_path;
    Trajectory ego_trajectory;
};

/// Copy of the samples of `traj` on [t_start, t_end].
Trajectory slice_trajectory(const Trajectory& traj, double t_start, double t_end);

/// One mode per leaf, in depth-first child order.
std::vector<ECMode> flatten_ec_modes(const TrajectoryTree& tree);

struct StageQuery {
    std::span<const AgentHistory> history;  // original history plus ancestor predictions
    const Trajectory* ego_segment = nullptr;  // conditioned ego motion for this stage only
    int stage = 0;
    std::uint64_t rng_key = 0;
    int branching_factor = 1;
    double t0 = 0.0;  // stage start (absolute)
    double duration = 0.0;
    double dt = 0.1;
    // The conditioning mode. Causal predictors must not look past the stage
    // window; the ensemble validator is what catches those that do.
    const ECMode* mode = nullptr;
};

struct StageOutcome {
    std::map<AgentId, Trajectory> trajectories;
    double probability = 0.0;
};

class Predictor {
  public:
    virtual ~Predictor() = default;
    /// Must be a pure function of the query.
    virtual std::vector<StageOutcome> predict_stage(const StageQuery& query) const = 0;
    virtual std::string name() const = 0;
};

enum class JointModeRule {
    product,  // per-agent hypotheses combined, top-k joint combinations kept
    shared,   // every agent follows the same hypothesis
};

struct KinematicPredictorConfig {
    double p_maintain = 0.7;
    double p_brake = 0.3;
    double brake_decel = 4.0;
    double tau_yield = 3.0;
    double yield_boost = 2.0;
    double corridor_half_width = 2.0;
    double lane_snap_distance = 3.0;
    double lane_heading_tolerance = 0.1;
    JointModeRule joint_rule = JointModeRule::product;

    void validate() const;
};

/// Two hypotheses per agent: keep speed, or brake at brake_decel until stopped.
/// Agents the conditioned ego cuts in front of get their brake prior boosted.
class KinematicPredictor final : public Predictor {
  public:
    explicit KinematicPredictor(KinematicPredictorConfig config = {},
                                std::shared_ptr<const LaneGraph> map = nullptr);

    std::vector<StageOutcome> predict_stage(const StageQuery& query) const override;
    std::string name() const override { return "kinematic"; }

    const KinematicPredictorConfig& config() const { return config_; }

    /// Trajectory of one agent under one hypothesis over the stage window.
    Trajectory rollout(const AgentState& start, bool brake, double t0, double duration, double dt) const;
    /// True if the ego segment crosses in front of the agent (maintain
    /// hypothesis) within tau_yield.
    bool ego_cuts_in(const Trajectory& agent_maintain, const Trajectory& ego) const;

  private:
    KinematicPredictorConfig config_;
    std::shared_ptr<const LaneGraph> map_;
};

/// Stream key for the node at `path` (child indices from the root); depends
/// on nothing mode-specific, so modes sharing an ego prefix share keys.
std::uint64_t scenario_rng_key(std::uint64_t seed, int stage, std::span<const int> path);

ScenarioTree predict_scenario_tree(const Predictor& predictor, std::span<const AgentHistory> scene,
                                   const ECMode& mode, const StageSchedule& schedule, int branching_factor,
                                   std::uint64_t seed);

struct ECPredictionEnsemble {
    std::vector<ECMode> modes;
    std::vector<ScenarioTree> trees;  // indexed by mode id
    bool validated = false;
    // ego node id -> first mode whose path passes through it
    std::vector<int> representative_mode;

    const ScenarioTree& tree_for_ego_node(int ego_node) const;
};

struct ConsistencyReport {
    bool consistent = true;
    int mode_a = -1;
    int mode_b = -1;
    int stage = -1;
    std::string detail;
};

/// Every pair of modes agreeing through stage i has trees that
/// match node for node through stage i. Reports the earliest mismatch.
ConsistencyReport check_causal_consistency(const std::vector<ECMode>& modes, const std::vector<ScenarioTree>& trees);

/// Flatten, predict one tree per mode, then validate. Throws
/// CausalConsistencyViolation on a mismatch.
ECPredictionEnsemble predict_ensemble(const Predictor& predictor, std::span<const AgentHistory> scene,
                                      const TrajectoryTree& tree, int branching_factor, std::uint64_t seed);

/// Same as predict_ensemble without the final validation (validated = false).
ECPredictionEnsemble predict_ensemble_unchecked(const Predictor& predictor, std::span<const AgentHistory> scene,
                                                const TrajectoryTree& tree, int branching_factor,
                                                std::uint64_t seed);

/// Test predictor that encodes the whole conditioned ego future at every
/// stage: a deliberately non-causal model.
class FutureLeakingPredictor final : public Predictor {
  public:
    explicit FutureLeakingPredictor(std::shared_ptr<const Predictor> inner) : inner_(std::move(inner)) {}
    std::vector<StageOutcome> predict_stage(const StageQuery& query) const override;
    std::string name() const override { return "future-leaking"; }

  private:
    std::shared_ptr<const Predictor> inner_;
};

}  // namespace tpp
