// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "serp/ase_engine.hpp"
#include "serp/gcot_engine.hpp"
#include "serp/param_memory.hpp"
#include "serp/scenario_io.hpp"

#include <optional>
#include <string>
#include <vector>

namespace serp {

struct VerifyOptions {
    ControllerConfig controller;
    DetectionConfig detection;
    double goal_tolerance = 0.5;
    double attempt_time_limit = 60.0;   // simulated seconds per verify call
    double episode_timeout = 1e9;       // simulated seconds since the episode began
    double shortcut_clearance = 0.6;    // m; 0 keeps the raw cell path
};

/// Where the robot is within the current plan.
struct ExecutionCursor {
    RobotState pose;
    std::size_t goto_index = 0;
    bool has_path = false;
    ReferencePath path;
    Vec2 path_goal;
    double progress = 0.0;
    bool at_rest = false;
};

/// One bounded attempt at the stuck segment, as the evolution loop needs it.
struct StuckSegment {
    SegmentSpec spec;
    std::size_t goto_index = 0;
};

/// Executes plans on the episode timeline: global path per goto, receding
/// horizon control, dynamics, injections and the failure detectors.
class Executor {
public:
    Executor(World world, SceneGraph graph, std::vector<Injection> injections, RobotState start,
             VerifyOptions options);

    /// Runs the plan from the cursor until it succeeds or a detector fires.
    Feedback verify(const SymbolicPlan& plan, const PlannerParams& params);
    /// Starts the plan over from its first step at the current pose.
    void restart_plan();
    /// Commits a successful evaluation episode of the stuck segment as real
    /// execution; the goto it belongs to is then complete.
    void commit(const Episode& episode, const StuckSegment& segment);

    /// The bounded re-run of the segment that last failed, starting at the
    /// pose where it failed.
    std::optional<StuckSegment> stuck_segment(int steps) const;

    const World& world() const { return world_; }
    const SceneGraph& graph() const { return graph_; }
    /// Long-term graph edits forwarded by corrupt_graph injections since the
    /// last call.
    bool take_graph_changed();
    const std::vector<RobotState>& trace() const { return trace_; }
    const ExecutionCursor& cursor() const { return cursor_; }
    int steps() const { return steps_; }
    double elapsed() const { return steps_ * world_.dt; }
    double min_clearance() const { return min_clearance_; }
    void apply_due(int step);

private:
    Feedback fail(FeedbackStatus status, const SymbolicPlan& plan, std::string note);
    bool plan_path(const SymbolicPlan& plan, std::string& error);

    World world_;
    SceneGraph graph_;
    std::vector<Injection> injections_;
    VerifyOptions options_;
    ExecutionCursor cursor_;
    std::vector<RobotState> trace_;
    int steps_ = 0;
    int applied_through_ = -1;
    double min_clearance_ = 1e9;
    bool graph_changed_ = false;
    std::optional<StuckSegment> stuck_;
};

/// Executes a plan from `start` in a fixed world (no injections).
Feedback verify_plan(const SymbolicPlan& plan, const World& world, const SceneGraph& graph, const RobotState& start,
                     const PlannerParams& params, const VerifyOptions& options);

/// Physical failures are handled by local evolution; the rest (missing
/// target, no path) go straight to global replanning.
bool is_physical(const Feedback& feedback);

struct LocalPhase {
    int start_epoch = 0;
    int end_epoch = 0;
    std::string status;   // success | local_failure
    std::string reason;
};

struct GlobalPass {
    int index = 0;
    std::string trigger;   // initial | feedback status
    std::optional<SymbolicPlan> plan;
    int iterations = 0;
    std::vector<std::string> subtasks;
    std::vector<GcotIteration> trace;
    std::vector<std::string> warnings;
    TokenLedger tokens;
    std::size_t distilled_tokens = 0;
};

struct AttemptRecord {
    int index = 0;
    PlannerParams params;
    Feedback feedback;
    int steps_before = 0;
    int steps_after = 0;
};

struct EvolutionTraceRow {
    int phase = 0;
    EpochRecord record;
};

struct EpisodeReport {
    std::string scenario_id;
    std::string backend = "mock";
    std::string mode = "ilad";
    unsigned seed = 0;
    std::string outcome = "failure";   // success | failure
    std::string reason;
    RobotState start;
    RobotState final_pose;
    std::string goal_node;
    Vec2 goal_position;
    double goal_distance = 0.0;
    double path_length = 0.0;
    double shortest_path_length = 0.0;
    PlannerParams initial_params;
    PlannerParams final_params;
    std::string retrieval_status;   // retrieved | cold start | not configured
    RetrievalAnswer retrieval;
    std::vector<AttemptRecord> attempts;
    std::vector<LocalPhase> local_phases;
    std::vector<EvolutionTraceRow> evolution;
    std::vector<GlobalPass> global_passes;
    int epochs_total = 0;
    int max_local_epochs = 20;
    TokenLedger tokens;
    double rgtr = 0.0;
    std::vector<RobotState> trace;
    std::vector<Exchange> exchanges;
    std::vector<std::string> warnings;
    std::vector<std::string> final_grid;   // RLE rows of the world at the end
    double grid_resolution = 1.0;
    double sim_time = 0.0;
    double wall_clock_seconds = 0.0;
};

struct RunOptions {
    std::string backend = "mock";
    unsigned seed = 0;
    std::optional<EvolutionMode> mode;             // overrides the scenario
    std::optional<PlannerParams> initial_params;   // skips retrieval
    bool remove_best_record = false;               // drop the rank-1 record before retrieving
    int max_global_passes = 8;
};

/// Plan, verify, evolve locally, escalate globally: the whole episode.
EpisodeReport run_serp(const ScenarioSpec& spec, ModelClients& clients, const RunOptions& options = {});

/// Mock clients from the scenario's script files.
ModelClients scenario_clients(const ScenarioSpec& spec, const std::string& backend);

} // namespace serp
