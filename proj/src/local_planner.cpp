// SPDX-License-Identifier: Apache-2.0

#include "serp/local_planner.hpp"

#include <algorithm>
#include <limits>

namespace serp {

bool PlannerParams::valid() const
{
    return std::isfinite(q_s) && std::isfinite(p_v) && std::isfinite(eta) && q_s >= 0.0 && p_v >= 0.0 &&
           eta >= 0.0;
}

namespace {

struct Nearest {
    double d = 0.0;    // clamped clearance
    Vec2 grad{};       // zero when clamped
};

Nearest clearance(Vec2 p, const std::vector<Vec2>& pts, double radius, double cap)
{
    double best2 = std::numeric_limits<double>::infinity();
    Vec2 best{};
    for (const auto& q : pts) {
        const double dx = p.x - q.x;
        const double dy = p.y - q.y;
        const double d2 = dx * dx + dy * dy;
        if (d2 < best2) {
            best2 = d2;
            best = q;
        }
    }
    if (!std::isfinite(best2)) return {cap, {}};
    const double raw = std::sqrt(best2) - radius;
    if (raw <= 0.0) return {0.0, {}};
    if (raw >= cap) return {cap, {}};
    const double len = std::sqrt(best2);
    return {raw, {(p.x - best.x) / len, (p.y - best.y) / len}};
}

void check_sizes(const CostModel& m, std::size_t n)
{
    if (m.ref.waypoints.size() < 2) throw Error("reference must contain at least two waypoints");
    if (n != m.ref.waypoints.size()) throw Error("plan horizon does not match reference length");
}

} // namespace

std::vector<RobotState> CostModel::rollout(std::span<const ControlInput> controls) const
{
    std::vector<RobotState> states;
    states.reserve(controls.size());
    states.push_back(start);
    for (std::size_t i = 0; i + 1 < controls.size(); ++i) states.push_back(step_dynamics(states.back(), controls[i], dt));
    return states;
}

double CostModel::cost(std::span<const ControlInput> controls) const
{
    check_sizes(*this, controls.size());
    const auto states = rollout(controls);
    double total = 0.0;
    for (std::size_t h = 0; h < states.size(); ++h) {
        const auto& s = states[h];
        const auto& r = ref.waypoints[h];
        const double ex = s.x - r.x;
        const double ey = s.y - r.y;
        const double ev = controls[h].v - ref.v_ref;
        total += params.q_s * (ex * ex + ey * ey) + params.p_v * ev * ev -
                 params.eta * clearance(s.position(), obstacles, robot_radius, d_cap).d;
    }
    return total;
}

double CostModel::cost_and_gradient(std::span<const ControlInput> controls, std::vector<double>& grad) const
{
    check_sizes(*this, controls.size());
    const auto states = rollout(controls);
    const std::size_t n = states.size();
    grad.assign(2 * n, 0.0);

    double total = 0.0;
    // Adjoint of the state (x, y, theta), carried backwards.
    double lx = 0.0, ly = 0.0, lt = 0.0;
    for (std::size_t k = n; k-- > 0;) {
        const auto& s = states[k];
        const auto& r = ref.waypoints[k];
        const double ex = s.x - r.x;
        const double ey = s.y - r.y;
        const double ev = controls[k].v - ref.v_ref;
        const Nearest near = clearance(s.position(), obstacles, robot_radius, d_cap);
        total += params.q_s * (ex * ex + ey * ey) + params.p_v * ev * ev - params.eta * near.d;

        grad[2 * k] += 2.0 * params.p_v * ev;

        // Stage cost contribution to the adjoint of s_k.
        const double sx = 2.0 * params.q_s * ex - params.eta * near.grad.x;
        const double sy = 2.0 * params.q_s * ey - params.eta * near.grad.y;
        if (k + 1 < n) {
            // s_{k+1} = f(s_k, u_k); lx, ly, lt currently hold dF/ds_{k+1}.
            const double c = std::cos(s.theta);
            const double sn = std::sin(s.theta);
            const double v = controls[k].v;
            grad[2 * k] += (lx * c + ly * sn) * dt;
            grad[2 * k + 1] += lt * dt;
            const double nlt = lt + (-lx * v * sn + ly * v * c) * dt;
            lx = lx + sx;
            ly = ly + sy;
            lt = nlt;
        } else {
            lx = sx;
            ly = sy;
            lt = 0.0;
        }
    }
    return total;
}

CostModel make_cost_model(const RobotState& start, const ReferenceSegment& ref, const World& world,
                          const PlannerParams& params, const Constraints& limits)
{
    CostModel m;
    m.start = start;
    m.ref = ref;
    m.params = params;
    m.robot_radius = world.robot_radius;
    m.d_cap = world.distance_cap;
    m.dt = world.dt;
    m.limits = limits;
    // Points that can matter: anything within the capped range of where the
    // horizon can reach.
    const double reach = limits.v_max * world.dt * static_cast<double>(ref.waypoints.size());
    m.obstacles = world.points_near(start.position(), reach + world.distance_cap + world.robot_radius + 1e-9);
    return m;
}

double cost_F(const ActionPlan& plan, const PlannerParams& params, const ReferenceSegment& ref, const World& world)
{
    if (plan.states.empty()) throw Error("empty plan");
    auto model = make_cost_model(plan.states.front(), ref, world, params, world.limits);
    model.obstacles = world.obstacle_points();
    return model.cost(plan.controls);
}

std::vector<ControlInput> reference_controls(const RobotState& start, const ReferenceSegment& ref, double dt,
                                             const Constraints& limits)
{
    const std::size_t n = ref.waypoints.size();
    std::vector<ControlInput> u(n);
    RobotState s = start;
    for (std::size_t i = 0; i < n; ++i) {
        const double target = i + 1 < n ? ref.waypoints[i + 1].theta : ref.waypoints[i].theta;
        u[i] = limits.clamp({ref.v_ref, wrap_angle(target - s.theta) / dt});
        if (i + 1 < n) s = step_dynamics(s, u[i], dt);
    }
    return u;
}

std::vector<ControlInput> shift_controls(const ActionPlan& previous)
{
    std::vector<ControlInput> u = previous.controls;
    if (u.size() > 1) {
        std::rotate(u.begin(), u.begin() + 1, u.end());
        u.back() = u[u.size() - 2];
    }
    return u;
}

ActionPlan solve_mpc(const CostModel& model, std::vector<ControlInput> u, const SolverOptions& opt, SolveStats* stats)
{
    if (!model.params.valid()) throw Error("invalid planner params");
    check_sizes(model, u.size());
    const std::size_t n = u.size();
    for (auto& c : u) c = model.limits.clamp(c);

    std::vector<double> g;
    model.cost_and_gradient(u, g);
    double f = model.cost(u);
    if (!std::isfinite(f)) throw Error("solver diverged");
    if (stats) {
        stats->cost_trace.clear();
        stats->cost_trace.push_back(f);
        stats->iterations = 0;
        stats->converged = false;
    }

    std::vector<ControlInput> trial(n);
    double step = opt.initial_step;
    int it = 0;
    bool converged = false;
    for (; it < opt.max_iters; ++it) {
        // Projected-gradient stationarity measure with unit step.
        double pg2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const ControlInput moved = model.limits.clamp({u[i].v - g[2 * i], u[i].w - g[2 * i + 1]});
            pg2 += (u[i].v - moved.v) * (u[i].v - moved.v) + (u[i].w - moved.w) * (u[i].w - moved.w);
        }
        if (std::sqrt(pg2) < opt.g_tol) {
            converged = true;
            break;
        }

        bool accepted = false;
        double t = step;
        double f_trial = f;
        for (int b = 0; b < opt.max_backtracks; ++b, t *= opt.backtrack) {
            double slope = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                trial[i] = model.limits.clamp({u[i].v - t * g[2 * i], u[i].w - t * g[2 * i + 1]});
                slope += g[2 * i] * (trial[i].v - u[i].v) + g[2 * i + 1] * (trial[i].w - u[i].w);
            }
            f_trial = model.cost(trial);
            if (!std::isfinite(f_trial)) throw Error("solver diverged");
            if (f_trial <= f + opt.armijo * slope) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            converged = true;   // no descent left at machine precision
            break;
        }
        u.swap(trial);
        model.cost_and_gradient(u, g);
        f = f_trial;
        if (stats) stats->cost_trace.push_back(f);
        step = std::min(t * opt.step_growth, opt.max_step);
    }
    if (stats) {
        stats->iterations = it;
        stats->converged = converged;
    }

    ActionPlan plan;
    plan.controls = std::move(u);
    plan.states = model.rollout(plan.controls);
    plan.horizon = static_cast<int>(n) - 1;
    return plan;
}

ActionPlan solve_mpc(const RobotState& state, const ReferenceSegment& ref, const World& world,
                     const PlannerParams& params, const Constraints& limits,
                     const std::optional<std::vector<ControlInput>>& warm_start, const SolverOptions& options,
                     SolveStats* stats)
{
    const auto model = make_cost_model(state, ref, world, params, limits);
    auto init = warm_start ? *warm_start : reference_controls(state, ref, world.dt, limits);
    if (init.size() != ref.waypoints.size()) init = reference_controls(state, ref, world.dt, limits);
    return solve_mpc(model, std::move(init), options, stats);
}

} // namespace serp
