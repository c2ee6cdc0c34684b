// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "serp/sim_world.hpp"

#include <optional>
#include <span>
#include <vector>

namespace serp {

/// Weights of the three receding-horizon cost terms: path tracking, speed
/// tracking and obstacle-distance reward.
struct PlannerParams {
    double q_s = 1.0;
    double p_v = 1.0;
    double eta = 1.0;

    bool valid() const;
    friend bool operator==(const PlannerParams&, const PlannerParams&) = default;
};

/// H+1 reference poses and the reference speed.
struct ReferenceSegment {
    std::vector<RobotState> waypoints;
    double v_ref = 0.0;
};

/// controls[i] drives states[i] -> states[i+1]; the last control only enters
/// the speed term.
struct ActionPlan {
    std::vector<ControlInput> controls;
    std::vector<RobotState> states;
    int horizon = 0;
};

struct SolverOptions {
    double initial_step = 0.1;
    double max_step = 10.0;
    double step_growth = 2.0;
    double backtrack = 0.5;
    double armijo = 1e-4;
    int max_iters = 200;
    int max_backtracks = 40;
    double g_tol = 1e-4;
};

struct SolveStats {
    int iterations = 0;
    bool converged = false;
    std::vector<double> cost_trace;   // cost of every accepted iterate, initial point first
};

/// Everything the cost needs besides the decision variables.
struct CostModel {
    RobotState start;
    ReferenceSegment ref;
    PlannerParams params;
    std::vector<Vec2> obstacles;
    double robot_radius = 0.2;
    double d_cap = 3.0;
    double dt = 0.1;
    Constraints limits;

    int horizon() const { return static_cast<int>(ref.waypoints.size()) - 1; }

    std::vector<RobotState> rollout(std::span<const ControlInput> controls) const;
    double cost(std::span<const ControlInput> controls) const;
    /// Cost plus its exact gradient w.r.t. (v_0, w_0, ..., v_H, w_H) by a
    /// reverse sweep through the unicycle rollout.
    double cost_and_gradient(std::span<const ControlInput> controls, std::vector<double>& grad) const;
};

CostModel make_cost_model(const RobotState& start, const ReferenceSegment& ref, const World& world,
                          const PlannerParams& params, const Constraints& limits);

/// Three-term receding-horizon cost of a plan.
double cost_F(const ActionPlan& plan, const PlannerParams& params, const ReferenceSegment& ref, const World& world);

/// Controls that steer onto the reference headings at the reference speed.
std::vector<ControlInput> reference_controls(const RobotState& start, const ReferenceSegment& ref, double dt,
                                             const Constraints& limits);

/// Previous solution advanced by one step, last control repeated.
std::vector<ControlInput> shift_controls(const ActionPlan& previous);

/// Projected gradient descent with Armijo backtracking over the control
/// sequence. Deterministic given its inputs.
ActionPlan solve_mpc(const RobotState& state, const ReferenceSegment& ref, const World& world,
                     const PlannerParams& params, const Constraints& limits,
                     const std::optional<std::vector<ControlInput>>& warm_start = std::nullopt,
                     const SolverOptions& options = {}, SolveStats* stats = nullptr);

ActionPlan solve_mpc(const CostModel& model, std::vector<ControlInput> init, const SolverOptions& options = {},
                     SolveStats* stats = nullptr);

} // namespace serp
