// SPDX-License-Identifier: Apache-2.0

#include "serp/execution.hpp"

#include <algorithm>
#include <limits>

namespace serp {

ReferencePath::ReferencePath(const std::vector<RobotState>& waypoints)
{
    for (const auto& w : waypoints) {
        const Vec2 p = w.position();
        if (!points_.empty() && distance(points_.back(), p) < 1e-12) continue;
        arc_.push_back(points_.empty() ? 0.0 : arc_.back() + distance(points_.back(), p));
        points_.push_back(p);
    }
}

RobotState ReferencePath::sample(double s) const
{
    if (points_.empty()) throw Error("empty reference path");
    if (points_.size() == 1) return {points_[0].x, points_[0].y, 0.0};
    s = std::clamp(s, 0.0, length());
    auto it = std::upper_bound(arc_.begin(), arc_.end(), s);
    std::size_t i = static_cast<std::size_t>(std::distance(arc_.begin(), it));
    i = std::clamp<std::size_t>(i, 1, points_.size() - 1);
    const Vec2 a = points_[i - 1];
    const Vec2 b = points_[i];
    const double seg = arc_[i] - arc_[i - 1];
    const double t = seg > 0.0 ? (s - arc_[i - 1]) / seg : 0.0;
    const Vec2 p = a + t * (b - a);
    return {p.x, p.y, std::atan2(b.y - a.y, b.x - a.x)};
}

double ReferencePath::project(Vec2 p, double lo, double hi) const
{
    if (points_.size() < 2) return 0.0;
    lo = std::clamp(lo, 0.0, length());
    hi = std::clamp(hi, lo, length());
    double best_s = lo;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < points_.size(); ++i) {
        if (arc_[i] < lo || arc_[i - 1] > hi) continue;
        const Vec2 a = points_[i - 1];
        const Vec2 ab = points_[i] - a;
        const double len2 = dot(ab, ab);
        double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
        const double seg = arc_[i] - arc_[i - 1];
        double s = arc_[i - 1] + std::clamp(t, 0.0, 1.0) * seg;
        s = std::clamp(s, lo, hi);
        const double d = distance(p, sample(s).position());
        if (d < best_d - 1e-12) {
            best_d = d;
            best_s = s;
        }
    }
    return best_s;
}

ReferenceSegment ReferencePath::segment(double s0, int horizon, double v_ref, double dt) const
{
    ReferenceSegment ref;
    ref.v_ref = v_ref;
    ref.waypoints.reserve(static_cast<std::size_t>(horizon) + 1);
    for (int h = 0; h <= horizon; ++h) ref.waypoints.push_back(sample(s0 + h * v_ref * dt));
    return ref;
}

LocalController::LocalController(ReferencePath path, PlannerParams params, ControllerConfig config, double start_progress)
    : path_(std::move(path)), params_(params), config_(config), progress_(start_progress)
{
    if (path_.empty()) throw Error("empty reference path");
    if (config_.horizon < 1) throw Error("horizon must be >= 1");
}

ControlInput LocalController::act(const World& world, const RobotState& state)
{
    progress_ = std::max(progress_, path_.project(state.position(), progress_ - config_.projection_back,
                                                  progress_ + config_.projection_ahead));
    last_ref_ = path_.segment(progress_, config_.horizon, world.v_ref, world.dt);
    std::optional<std::vector<ControlInput>> warm;
    if (has_plan_) warm = shift_controls(last_plan_);
    else if (from_rest_) warm = std::vector<ControlInput>(static_cast<std::size_t>(config_.horizon) + 1);
    last_plan_ = solve_mpc(state, last_ref_, world, params_, world.limits, warm, config_.solver);
    has_plan_ = true;
    from_rest_ = false;
    return last_plan_.controls.front();
}

Rollout simulate(const World& world, LocalController& controller, const RobotState& start, int steps,
                 bool stop_on_collision)
{
    Rollout r;
    r.start_progress = controller.progress();
    r.states.push_back(start);
    const auto pts = world.obstacle_points();
    r.clearances.push_back(nearest_obstacle_distance(start.position(), pts, world.robot_radius, world.distance_cap));
    RobotState s = start;
    for (int i = 0; i < steps; ++i) {
        ControlInput u = controller.act(world, s);
        const RobotState next = step_dynamics(s, u, world.dt);
        const bool refused = world.in_collision(next.position());
        if (refused) {
            if (r.first_blocked < 0) r.first_blocked = i;
            controller.start_from_rest();
            u = {};
        }
        r.controls.push_back(u);
        r.blocked.push_back(refused);
        if (refused && stop_on_collision) break;
        if (!refused) s = next;
        r.states.push_back(s);
        r.clearances.push_back(nearest_obstacle_distance(s.position(), pts, world.robot_radius, world.distance_cap));
    }
    if (r.controls.size() < r.states.size()) r.controls.push_back(controller.act(world, s));
    r.end_progress = controller.progress();
    return r;
}

std::string to_string(SegmentStatus status)
{
    switch (status) {
    case SegmentStatus::reached: return "reached";
    case SegmentStatus::collision: return "collision";
    case SegmentStatus::stationary: return "stationary";
    case SegmentStatus::timeout: return "timeout";
    }
    return "unknown";
}

SegmentRunner::SegmentRunner(const World& world, const PlannerParams& params, const ControllerConfig& config,
                             SegmentSpec spec)
    : spec_(std::move(spec)), ctl_(spec_.path, params, config, spec_.start_progress)
{
    if (spec_.start_from_rest) ctl_.start_from_rest();
    world_changed(world);
    Rollout& r = out_.rollout;
    r.start_progress = ctl_.progress();
    s_ = spec_.start;
    r.states.push_back(s_);
    r.clearances.push_back(nearest_obstacle_distance(s_.position(), pts_, robot_radius_, cap_));
    if (spec_.max_steps <= 0) done_ = true;
}

void SegmentRunner::world_changed(const World& world)
{
    pts_ = world.obstacle_points();
    robot_radius_ = world.robot_radius;
    cap_ = world.distance_cap;
    frozen_ = false;
}

void SegmentRunner::note(SegmentStatus st, int step)
{
    if (out_.event_step >= 0) return;
    out_.status = st;
    out_.event_step = step;
}

bool SegmentRunner::step(const World& world)
{
    if (done_) return false;
    Rollout& r = out_.rollout;
    if (distance(s_.position(), spec_.goal) <= spec_.goal_tolerance) {
        note(SegmentStatus::reached, i_);
        done_ = true;
        return false;
    }
    // A refused step taken from rest with no progress change leaves the robot
    // and controller exactly as they were, so every later step repeats it.
    ControlInput u{};
    bool refused = true;
    if (!frozen_) {
        const bool cold = ctl_.resting();
        const double before = ctl_.progress();
        u = ctl_.act(world, s_);
        const RobotState next = step_dynamics(s_, u, world.dt);
        refused = world.in_collision(next.position());
        if (!refused) s_ = next;
        frozen_ = refused && cold && ctl_.progress() == before;
    }
    if (refused) {
        if (r.first_blocked < 0) r.first_blocked = i_;
        ctl_.start_from_rest();
        u = {};
        note(SegmentStatus::collision, i_);
    }
    r.controls.push_back(u);
    r.blocked.push_back(refused);
    r.states.push_back(s_);
    r.clearances.push_back(frozen_ ? r.clearances.back()
                                   : nearest_obstacle_distance(s_.position(), pts_, robot_radius_, cap_));
    const int n = static_cast<int>(r.states.size());
    if (spec_.stall_window > 0 && n > spec_.stall_window &&
        distance(r.states[static_cast<std::size_t>(n - 1 - spec_.stall_window)].position(), s_.position()) <
            spec_.stall_distance)
        note(SegmentStatus::stationary, i_ + 1);
    ++i_;
    if ((spec_.stop_on_failure && out_.event_step >= 0) || i_ >= spec_.max_steps) done_ = true;
    return !done_;
}

SegmentResult SegmentRunner::finish()
{
    Rollout& r = out_.rollout;
    if (out_.event_step < 0 && distance(s_.position(), spec_.goal) <= spec_.goal_tolerance)
        note(SegmentStatus::reached, static_cast<int>(r.states.size()) - 1);
    if (r.controls.size() < r.states.size()) r.controls.push_back(r.controls.empty() ? ControlInput{} : r.controls.back());
    r.end_progress = ctl_.progress();
    out_.min_clearance = *std::min_element(r.clearances.begin(), r.clearances.end());
    done_ = true;
    return out_;
}

SegmentResult run_segment(const World& world, const PlannerParams& params, const ControllerConfig& config,
                          const SegmentSpec& spec)
{
    SegmentRunner runner(world, params, config, spec);
    while (runner.step(world)) {
    }
    return runner.finish();
}

double trace_length(const std::vector<RobotState>& states)
{
    double total = 0.0;
    for (std::size_t i = 1; i < states.size(); ++i) total += distance(states[i - 1].position(), states[i].position());
    return total;
}

} // namespace serp
