// SPDX-License-Identifier: Apache-2.0

// Random problem instances shared by the unit tests and the acceptance run.

#pragma once

#include "serp/ase_engine.hpp"
#include "serp/local_planner.hpp"
#include "serp/sim_world.hpp"

#include <cmath>
#include <limits>
#include <queue>
#include <random>
#include <vector>

namespace serp::testing {

struct SolverInstance {
    CostModel model;
    std::vector<ControlInput> controls;
};

/// A straight reference with obstacle points beside it and controls strictly
/// inside the box. With `single_obstacle` one point sits 1 to 2 m off the
/// reference and the cap is wide, so the clearance never clamps.
inline SolverInstance random_solver_instance(std::mt19937& rng, bool single_obstacle = false)
{
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

    SolverInstance inst;
    CostModel& m = inst.model;
    m.dt = 0.1;
    m.robot_radius = uni(0.1, 0.4);
    m.d_cap = uni(1.0, 3.0);
    m.limits = {uni(0.8, 2.0), uni(1.0, 2.0)};
    m.params = {uni(0.2, 3.0), uni(0.2, 3.0), uni(0.5, 20.0)};
    m.start = {uni(-1.0, 1.0), uni(-1.0, 1.0), uni(-3.0, 3.0)};

    const int horizon = std::uniform_int_distribution<int>(5, 20)(rng);
    const double heading = uni(-3.0, 3.0);
    m.ref.v_ref = uni(0.3, 1.0);
    for (int h = 0; h <= horizon; ++h) {
        const double s = m.ref.v_ref * m.dt * (h + 1);
        m.ref.waypoints.push_back({m.start.x + s * std::cos(heading), m.start.y + s * std::sin(heading), heading});
    }
    if (single_obstacle) {
        m.d_cap = 10.0;
        const double side = u01(rng) < 0.5 ? -1.0 : 1.0;
        const double off = uni(1.0, 2.0) * side;
        const double along = uni(0.0, m.ref.v_ref * m.dt * horizon);
        m.obstacles.push_back({m.start.x + along * std::cos(heading) - off * std::sin(heading),
                               m.start.y + along * std::sin(heading) + off * std::cos(heading)});
    } else {
        const int n_obs = std::uniform_int_distribution<int>(1, 6)(rng);
        for (int i = 0; i < n_obs; ++i)
            m.obstacles.push_back({m.start.x + uni(-2.5, 2.5), m.start.y + uni(-2.5, 2.5)});
    }

    for (int h = 0; h <= horizon; ++h)
        inst.controls.push_back({uni(-0.9, 0.9) * m.limits.v_max, uni(-0.9, 0.9) * m.limits.w_max});
    return inst;
}

/// Closure that runs the solver for a fixed number of fixed-size projected
/// steps (every step accepted) and returns the open-loop trajectory as the
/// episode. The map from parameters to loss is then smooth away from the
/// clamps.
inline EpisodeClosure solver_closure(CostModel base, int iters = 50, double step = 0.01)
{
    return [base, iters, step](const PlannerParams& p) {
        CostModel m = base;
        m.params = p;
        SolverOptions opt;
        opt.max_iters = iters;
        opt.g_tol = 0.0;
        opt.initial_step = step;
        opt.max_step = step;
        opt.step_growth = 1.0;
        opt.armijo = -1e12;
        const auto init = std::vector<ControlInput>(static_cast<std::size_t>(m.horizon()) + 1, ControlInput{});
        const ActionPlan plan = solve_mpc(m, init, opt);
        Episode e;
        e.states = plan.states;
        e.controls = plan.controls;
        e.reference = m.ref.waypoints;
        e.v_ref = m.ref.v_ref;
        for (const auto& s : e.states)
            e.clearances.push_back(nearest_obstacle_distance(s.position(), m.obstacles, m.robot_radius, m.d_cap));
        e.success = true;
        e.outcome = "reached";
        return e;
    };
}

inline OccupancyGrid random_grid(std::mt19937& rng, int rows, int cols, double fill)
{
    OccupancyGrid g(rows, cols, 1.0);
    std::bernoulli_distribution occ(fill);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) g.set_occupied({r, c}, occ(rng));
    return g;
}

// Plain Dijkstra over the same inflated free set.
inline int dijkstra_len(const OccupancyGrid& g, double radius, Cell s, Cell t)
{
    const auto blocked = g.inflated(radius);
    std::vector<std::uint8_t> free(blocked.size());
    for (std::size_t i = 0; i < free.size(); ++i) free[i] = !blocked[i];
    auto idx = [&](Cell c) { return c.row * g.cols() + c.col; };
    if (!free[idx(s)] || !free[idx(t)]) return -1;
    std::vector<int> dist(free.size(), std::numeric_limits<int>::max());
    using Item = std::pair<int, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[idx(s)] = 0;
    pq.push({0, idx(s)});
    const int dr[] = {1, -1, 0, 0}, dc[] = {0, 0, 1, -1};
    while (!pq.empty()) {
        auto [d, i] = pq.top();
        pq.pop();
        if (d > dist[i]) continue;
        if (i == idx(t)) return d;
        const Cell c{i / g.cols(), i % g.cols()};
        for (int k = 0; k < 4; ++k) {
            const Cell n{c.row + dr[k], c.col + dc[k]};
            if (!g.in_bounds(n) || !free[idx(n)]) continue;
            if (d + 1 < dist[idx(n)]) {
                dist[idx(n)] = d + 1;
                pq.push({d + 1, idx(n)});
            }
        }
    }
    return -1;
}

} // namespace serp::testing
