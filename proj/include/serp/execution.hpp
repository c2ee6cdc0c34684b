// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "serp/local_planner.hpp"

#include <functional>
#include <string>
#include <vector>

namespace serp {

/// Arc-length parametrized polyline over global-path waypoints.
class ReferencePath {
public:
    ReferencePath() = default;
    explicit ReferencePath(const std::vector<RobotState>& waypoints);

    bool empty() const { return points_.empty(); }
    double length() const { return arc_.empty() ? 0.0 : arc_.back(); }
    const std::vector<Vec2>& points() const { return points_; }

    /// Pose at arc length s (clamped to the path).
    RobotState sample(double s) const;
    /// Arc length of the closest point within [lo, hi].
    double project(Vec2 p, double lo, double hi) const;

    /// H+1 poses from s0 at v_ref*dt spacing.
    ReferenceSegment segment(double s0, int horizon, double v_ref, double dt) const;

private:
    std::vector<Vec2> points_;
    std::vector<double> arc_;
};

struct ControllerConfig {
    int horizon = 20;
    SolverOptions solver;
    double projection_back = 0.5;    // m behind current progress searched when projecting
    double projection_ahead = 3.0;   // m ahead
};

/// Receding-horizon tracker: projects onto the path, solves the horizon
/// problem (warm-started by shifting the previous plan) and returns the
/// first control.
class LocalController {
public:
    LocalController(ReferencePath path, PlannerParams params, ControllerConfig config, double start_progress = 0.0);

    ControlInput act(const World& world, const RobotState& state);

    double progress() const { return progress_; }
    /// True when the next solve starts from all-zero controls.
    bool resting() const { return !has_plan_ && from_rest_; }
    const ReferencePath& path() const { return path_; }
    const ActionPlan& last_plan() const { return last_plan_; }
    const ReferenceSegment& last_reference() const { return last_ref_; }
    const PlannerParams& params() const { return params_; }
    void set_params(const PlannerParams& p) { params_ = p; }
    /// Next solve starts from the reference controls.
    void reset_warm_start()
    {
        has_plan_ = false;
        from_rest_ = false;
    }
    /// Next solve starts from the stationary plan (all controls zero). Used
    /// after the robot has been stopped by contact.
    void start_from_rest()
    {
        has_plan_ = false;
        from_rest_ = true;
    }

private:
    ReferencePath path_;
    PlannerParams params_;
    ControllerConfig config_;
    double progress_ = 0.0;
    bool has_plan_ = false;
    bool from_rest_ = false;
    ActionPlan last_plan_;
    ReferenceSegment last_ref_;
};

/// Closed-loop run of a controller against a world, recording everything the
/// evolution loss and the failure detectors need.
///
/// A step whose end pose would overlap an obstacle is refused: the robot stays
/// where it is, the applied control is recorded as zero and the controller
/// restarts from rest.
struct Rollout {
    std::vector<RobotState> states;     // states[0] is the start
    std::vector<ControlInput> controls; // controls[i] applied at states[i]; same length as states
    std::vector<double> clearances;     // per state, clamped
    std::vector<bool> blocked;          // blocked[i]: step i -> i+1 was refused
    double start_progress = 0.0;
    double end_progress = 0.0;
    int first_blocked = -1;

    bool collided() const { return first_blocked >= 0; }
};

/// Runs `steps` receding-horizon steps. When `stop_on_collision` is set the
/// run ends at the first refused step.
Rollout simulate(const World& world, LocalController& controller, const RobotState& start, int steps,
                 bool stop_on_collision);

enum class SegmentStatus { reached, collision, stationary, timeout };
std::string to_string(SegmentStatus status);

/// One bounded attempt at following a reference path towards `goal`.
struct SegmentSpec {
    ReferencePath path;
    double start_progress = 0.0;
    RobotState start;
    Vec2 goal;
    double goal_tolerance = 0.5;
    int max_steps = 600;
    bool start_from_rest = false;
    /// Stationary: displacement below `stall_distance` over `stall_window` steps.
    double stall_distance = 0.05;
    int stall_window = 30;
    /// Stop at the first collision or stall instead of running all steps.
    bool stop_on_failure = true;
};

struct SegmentResult {
    Rollout rollout;
    SegmentStatus status = SegmentStatus::timeout;
    int event_step = -1;                // step of the status event, -1 for timeout
    double min_clearance = 0.0;
};

/// Step-at-a-time form of run_segment. The world may change between steps
/// (injections); the controller keeps its warm start across them.
class SegmentRunner {
public:
    SegmentRunner(const World& world, const PlannerParams& params, const ControllerConfig& config, SegmentSpec spec);

    /// Advances one control step against `world`. Returns false once the
    /// segment is over (reached, step budget used, or a failure event with
    /// stop_on_failure).
    bool step(const World& world);
    bool done() const { return done_; }
    /// Call after the world changed so that distances see the new points.
    void world_changed(const World& world);

    SegmentResult finish();
    const SegmentResult& partial() const { return out_; }
    const RobotState& state() const { return s_; }

private:
    void note(SegmentStatus st, int step);

    SegmentSpec spec_;
    LocalController ctl_;
    SegmentResult out_;
    std::vector<Vec2> pts_;
    double robot_radius_ = 0.0;
    double cap_ = 0.0;
    RobotState s_;
    int i_ = 0;
    bool frozen_ = false;
    bool done_ = false;
};

SegmentResult run_segment(const World& world, const PlannerParams& params, const ControllerConfig& config,
                          const SegmentSpec& spec);

/// Total length of a state trace's polyline.
double trace_length(const std::vector<RobotState>& states);

} // namespace serp
