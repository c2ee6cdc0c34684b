// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "instances.hpp"
#include "serp/execution.hpp"

#include <random>

using namespace serp;

namespace {

double rel_error(const std::vector<double>& a, const std::vector<double>& b)
{
    double num = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(num) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

std::vector<double> fd_gradient(const CostModel& m, std::vector<ControlInput> u, double h)
{
    std::vector<double> g(2 * u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        for (int k = 0; k < 2; ++k) {
            double& x = k == 0 ? u[i].v : u[i].w;
            const double x0 = x;
            x = x0 + h;
            const double hi = m.cost(u);
            x = x0 - h;
            const double lo = m.cost(u);
            x = x0;
            g[2 * i + k] = (hi - lo) / (2.0 * h);
        }
    }
    return g;
}

World open_world(int rows, int cols, double res)
{
    World w;
    w.grid = OccupancyGrid(rows, cols, res);
    w.robot_radius = 0.2;
    w.v_ref = 0.5;
    w.distance_cap = 2.0;
    w.limits = {1.0, 1.5};
    return w;
}

} // namespace

TEST_CASE("analytic control gradient matches central differences")
{
    std::mt19937 rng(5);
    for (int t = 0; t < 30; ++t) {
        auto inst = testing::random_solver_instance(rng);
        std::vector<double> g;
        const double f = inst.model.cost_and_gradient(inst.controls, g);
        CHECK(f == doctest::Approx(inst.model.cost(inst.controls)).epsilon(1e-12));
        CHECK(rel_error(g, fd_gradient(inst.model, inst.controls, 1e-6)) < 1e-4);
    }
}

TEST_CASE("solver iterates never increase cost and stay admissible")
{
    std::mt19937 rng(8);
    for (int t = 0; t < 20; ++t) {
        auto inst = testing::random_solver_instance(rng);
        SolveStats stats;
        const auto plan = solve_mpc(inst.model, inst.controls, {}, &stats);
        REQUIRE_FALSE(stats.cost_trace.empty());
        for (std::size_t i = 1; i < stats.cost_trace.size(); ++i)
            CHECK(stats.cost_trace[i] <= stats.cost_trace[i - 1]);
        for (const auto& u : plan.controls) CHECK(inst.model.limits.admits(u));
        CHECK(plan.states.size() == plan.controls.size());
        CHECK(inst.model.cost(plan.controls) == doctest::Approx(stats.cost_trace.back()));
    }
}

TEST_CASE("solver is deterministic")
{
    std::mt19937 rng(21);
    auto inst = testing::random_solver_instance(rng);
    const auto a = solve_mpc(inst.model, inst.controls);
    const auto b = solve_mpc(inst.model, inst.controls);
    CHECK(a.controls == b.controls);
}

TEST_CASE("invalid params are rejected")
{
    std::mt19937 rng(1);
    auto inst = testing::random_solver_instance(rng);
    inst.model.params.eta = -1.0;
    CHECK_THROWS_WITH_AS(solve_mpc(inst.model, inst.controls), "invalid planner params", Error);
}

TEST_CASE("shift repeats the last control")
{
    ActionPlan p;
    p.controls = {{1, 0}, {2, 0}, {3, 0}};
    const auto s = shift_controls(p);
    CHECK(s[0].v == 2);
    CHECK(s[1].v == 3);
    CHECK(s[2].v == 3);
}

TEST_CASE("reference path arc length, sampling and projection")
{
    const ReferencePath path({{0, 0, 0}, {2, 0, 0}, {2, 2, 0}});
    CHECK(path.length() == doctest::Approx(4.0));
    const auto mid = path.sample(3.0);
    CHECK(mid.x == doctest::Approx(2.0));
    CHECK(mid.y == doctest::Approx(1.0));
    CHECK(path.sample(99.0).y == doctest::Approx(2.0));
    CHECK(path.project({1.0, 0.3}, 0.0, 4.0) == doctest::Approx(1.0));
    const auto seg = path.segment(0.0, 10, 0.5, 0.1);
    CHECK(seg.waypoints.size() == 11);
    CHECK(seg.v_ref == 0.5);
}

TEST_CASE("tracker reaches the end of a straight corridor")
{
    const World w = open_world(10, 40, 0.5);
    SegmentSpec spec;
    spec.path = ReferencePath({{1.0, 2.5, 0.0}, {15.0, 2.5, 0.0}});
    spec.start = {1.0, 2.5, 0.0};
    spec.goal = {15.0, 2.5};
    spec.max_steps = 600;
    ControllerConfig cfg;
    cfg.horizon = 10;
    const auto r = run_segment(w, {1.0, 1.0, 1.0}, cfg, spec);
    CHECK(r.status == SegmentStatus::reached);
    CHECK(distance(r.rollout.states.back().position(), spec.goal) <= spec.goal_tolerance);
    CHECK(r.rollout.states.size() == r.rollout.controls.size());
}

TEST_CASE("blocked steps are refused and the stall detector fires")
{
    World w = open_world(10, 40, 0.5);
    for (int r = 0; r < 10; ++r) w.grid.set_occupied({r, 12}, true);
    SegmentSpec spec;
    spec.path = ReferencePath({{1.0, 2.5, 0.0}, {15.0, 2.5, 0.0}});
    spec.start = {1.0, 2.5, 0.0};
    spec.goal = {15.0, 2.5};
    spec.max_steps = 400;
    ControllerConfig cfg;
    cfg.horizon = 10;
    const auto r = run_segment(w, {1.0, 1.0, 0.0}, cfg, spec);
    CHECK(r.status != SegmentStatus::reached);
    for (const auto& s : r.rollout.states) CHECK_FALSE(w.in_collision(s.position()));
}
