// SPDX-License-Identifier: Apache-2.0

#include "serp/sim_world.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <tuple>

namespace serp {

ControlInput Constraints::clamp(ControlInput u) const
{
    return {std::clamp(u.v, -v_max, v_max), std::clamp(u.w, -w_max, w_max)};
}

bool Constraints::admits(ControlInput u) const
{
    return std::abs(u.v) <= v_max && std::abs(u.w) <= w_max;
}

OccupancyGrid::OccupancyGrid(int rows, int cols, double resolution)
    : rows_(rows), cols_(cols), resolution_(resolution),
      cells_(static_cast<std::size_t>(std::max(rows, 0)) * static_cast<std::size_t>(std::max(cols, 0)), 0)
{
    if (rows <= 0 || cols <= 0) throw Error("invalid grid: empty");
    if (!(resolution > 0.0)) throw Error("invalid grid: resolution must be positive");
}

bool OccupancyGrid::in_bounds(Vec2 p) const
{
    return p.x >= 0.0 && p.y >= 0.0 && p.x <= cols_ * resolution_ && p.y <= rows_ * resolution_;
}

bool OccupancyGrid::occupied(Cell c) const
{
    if (!in_bounds(c)) return true;
    return cells_[static_cast<std::size_t>(c.row) * cols_ + c.col] != 0;
}

void OccupancyGrid::set_occupied(Cell c, bool value)
{
    if (!in_bounds(c)) throw Error("cell out of bounds");
    cells_[static_cast<std::size_t>(c.row) * cols_ + c.col] = value ? 1 : 0;
}

Vec2 OccupancyGrid::center(Cell c) const
{
    return {(c.col + 0.5) * resolution_, (c.row + 0.5) * resolution_};
}

Cell OccupancyGrid::cell_at(Vec2 p) const
{
    int col = static_cast<int>(std::floor(p.x / resolution_));
    int row = static_cast<int>(std::floor(p.y / resolution_));
    return {std::clamp(row, 0, rows_ - 1), std::clamp(col, 0, cols_ - 1)};
}

std::vector<std::uint8_t> OccupancyGrid::inflated(double radius) const
{
    std::vector<std::uint8_t> blocked = cells_;
    const int reach = static_cast<int>(std::ceil(radius / resolution_)) + 1;
    const double half = resolution_ / 2.0;
    for (int r = 0; r < rows_; ++r) {
        for (int c = 0; c < cols_; ++c) {
            if (!occupied({r, c})) continue;
            const Vec2 sq = center({r, c});
            for (int dr = -reach; dr <= reach; ++dr) {
                for (int dc = -reach; dc <= reach; ++dc) {
                    Cell n{r + dr, c + dc};
                    if (!in_bounds(n)) continue;
                    const Vec2 p = center(n);
                    const double dx = std::max(std::abs(p.x - sq.x) - half, 0.0);
                    const double dy = std::max(std::abs(p.y - sq.y) - half, 0.0);
                    if (std::hypot(dx, dy) < radius) blocked[static_cast<std::size_t>(n.row) * cols_ + n.col] = 1;
                }
            }
        }
    }
    return blocked;
}

std::vector<Vec2> World::obstacle_points() const
{
    std::vector<Vec2> out;
    for (const auto& o : obstacles) out.insert(out.end(), o.points.begin(), o.points.end());
    return out;
}

std::vector<Vec2> World::points_near(Vec2 center, double radius) const
{
    std::vector<Vec2> out;
    const double r2 = radius * radius;
    for (const auto& o : obstacles) {
        for (const auto& p : o.points) {
            const Vec2 d = p - center;
            if (d.x * d.x + d.y * d.y <= r2) out.push_back(p);
        }
    }
    return out;
}

bool World::in_collision(Vec2 p) const
{
    for (const auto& o : obstacles)
        for (const auto& q : o.points)
            if (distance(p, q) - robot_radius <= 0.0) return true;

    const double res = grid.resolution();
    const Cell c = grid.cell_at(p);
    const int reach = static_cast<int>(std::ceil(robot_radius / res)) + 1;
    for (int dr = -reach; dr <= reach; ++dr) {
        for (int dc = -reach; dc <= reach; ++dc) {
            Cell n{c.row + dr, c.col + dc};
            if (!grid.in_bounds(n) || !grid.occupied(n)) continue;
            const Vec2 sq = grid.center(n);
            const double dx = std::max(std::abs(p.x - sq.x) - res / 2.0, 0.0);
            const double dy = std::max(std::abs(p.y - sq.y) - res / 2.0, 0.0);
            if (std::hypot(dx, dy) < robot_radius) return true;
        }
    }
    return !grid.in_bounds(p);
}

void validate_world(const World& world)
{
    if (!(world.grid.resolution() > 0.0)) throw Error("invalid world: resolution must be positive");
    if (!(world.dt > 0.0)) throw Error("invalid world: dt must be positive");
    if (!(world.robot_radius >= 0.0)) throw Error("invalid world: robot_radius must be non-negative");
    if (!(world.distance_cap > 0.0)) throw Error("invalid world: distance_cap must be positive");
    for (const auto& o : world.obstacles)
        for (const auto& p : o.points)
            if (!world.grid.in_bounds(p)) throw Error("invalid world: obstacle '" + o.name + "' leaves the grid");
}

RobotState step_dynamics(const RobotState& s, ControlInput u, double dt)
{
    if (!(dt > 0.0)) throw Error("invalid state: dt must be positive");
    if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.theta) || !std::isfinite(u.v) ||
        !std::isfinite(u.w) || !std::isfinite(dt))
        throw Error("invalid state");
    return {s.x + u.v * std::cos(s.theta) * dt, s.y + u.v * std::sin(s.theta) * dt, wrap_angle(s.theta + u.w * dt)};
}

std::vector<Cell> plan_cells(const OccupancyGrid& grid, double robot_radius, Cell start, Cell goal)
{
    const auto blocked = grid.inflated(robot_radius);
    const int cols = grid.cols();
    auto index = [cols](Cell c) { return static_cast<std::size_t>(c.row) * cols + c.col; };
    auto is_free = [&](Cell c) { return grid.in_bounds(c) && blocked[index(c)] == 0; };
    if (!is_free(start) || !is_free(goal)) throw Error("invalid endpoint");

    auto h = [&](Cell c) { return std::abs(c.row - goal.row) + std::abs(c.col - goal.col); };
    const std::size_t n = static_cast<std::size_t>(grid.rows()) * cols;
    std::vector<int> g(n, std::numeric_limits<int>::max());
    std::vector<std::size_t> came(n, n);
    std::vector<std::uint8_t> closed(n, 0);

    using Entry = std::tuple<int, int, int>;   // (f, row, col): smallest first
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    g[index(start)] = 0;
    open.emplace(h(start), start.row, start.col);

    constexpr Cell moves[4] = {{-1, 0}, {0, -1}, {0, 1}, {1, 0}};
    while (!open.empty()) {
        auto [f, r, c] = open.top();
        open.pop();
        const Cell cur{r, c};
        const std::size_t ci = index(cur);
        if (closed[ci]) continue;
        closed[ci] = 1;
        if (cur == goal) {
            std::vector<Cell> path;
            for (std::size_t i = ci; i != n; i = came[i])
                path.push_back({static_cast<int>(i / cols), static_cast<int>(i % cols)});
            std::reverse(path.begin(), path.end());
            return path;
        }
        for (auto m : moves) {
            const Cell nb{cur.row + m.row, cur.col + m.col};
            if (!is_free(nb)) continue;
            const std::size_t ni = index(nb);
            if (closed[ni]) continue;
            const int ng = g[ci] + 1;
            if (ng < g[ni]) {
                g[ni] = ng;
                came[ni] = ci;
                open.emplace(ng + h(nb), nb.row, nb.col);
            }
        }
    }
    throw Error("no path");
}

std::vector<RobotState> plan_global_path(const OccupancyGrid& grid, double robot_radius, Cell start, Cell goal)
{
    const auto cells = plan_cells(grid, robot_radius, start, goal);
    std::vector<RobotState> out;
    out.reserve(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const Vec2 p = grid.center(cells[i]);
        double heading = out.empty() ? 0.0 : out.back().theta;
        if (i + 1 < cells.size()) {
            const Vec2 q = grid.center(cells[i + 1]);
            heading = std::atan2(q.y - p.y, q.x - p.x);
        }
        out.push_back({p.x, p.y, wrap_angle(heading)});
    }
    return out;
}

std::vector<RobotState> shortcut_path(const OccupancyGrid& grid, double clearance,
                                      const std::vector<RobotState>& wps, int rounding_passes)
{
    if (wps.size() < 3) return wps;
    const auto blocked = grid.inflated(clearance);
    auto free_at = [&](Vec2 p) {
        const Cell c = grid.cell_at(p);
        return grid.in_bounds(c) && !blocked[static_cast<std::size_t>(c.row) * grid.cols() + c.col];
    };
    auto visible = [&](Vec2 a, Vec2 b) {
        const int n = std::max(1, static_cast<int>(std::ceil(distance(a, b) / (0.25 * grid.resolution()))));
        for (int i = 0; i <= n; ++i)
            if (!free_at(a + (static_cast<double>(i) / n) * (b - a))) return false;
        return true;
    };
    auto straight = [&](std::size_t i, std::size_t j) {
        const Vec2 d = wps[j].position() - wps[i].position();
        for (std::size_t k = i + 1; k < j; ++k) {
            const Vec2 e = wps[k].position() - wps[i].position();
            if (d.x * e.y - d.y * e.x != 0.0) return false;
        }
        return true;
    };
    if (straight(0, wps.size() - 1)) return wps;

    std::vector<Vec2> poly{wps.front().position()};
    std::size_t i = 0;
    while (i + 1 < wps.size()) {
        std::size_t j = wps.size() - 1;
        while (j > i + 1 && !visible(wps[i].position(), wps[j].position())) --j;
        poly.push_back(wps[j].position());
        i = j;
    }
    // Corner cutting; a pass is kept only if every new edge stays visible.
    for (int pass = 0; pass < rounding_passes && poly.size() > 2; ++pass) {
        std::vector<Vec2> next{poly.front()};
        for (std::size_t k = 0; k + 1 < poly.size(); ++k) {
            const Vec2 a = poly[k];
            const Vec2 b = poly[k + 1];
            if (k > 0) next.push_back(0.75 * a + 0.25 * b);
            if (k + 2 < poly.size()) next.push_back(0.25 * a + 0.75 * b);
        }
        next.push_back(poly.back());
        bool ok = true;
        for (std::size_t k = 0; ok && k + 1 < next.size(); ++k) ok = visible(next[k], next[k + 1]);
        if (!ok) break;
        poly = std::move(next);
    }

    std::vector<Vec2> pts{poly.front()};
    for (std::size_t k = 0; k + 1 < poly.size(); ++k) {
        const Vec2 a = poly[k];
        const Vec2 b = poly[k + 1];
        const int n = std::max(1, static_cast<int>(std::ceil(distance(a, b) / grid.resolution())));
        for (int m = 1; m < n; ++m) pts.push_back(a + (static_cast<double>(m) / n) * (b - a));
        pts.push_back(b);
    }
    std::vector<RobotState> out;
    out.reserve(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) {
        double heading = out.empty() ? wps.front().theta : out.back().theta;
        if (k + 1 < pts.size()) heading = std::atan2(pts[k + 1].y - pts[k].y, pts[k + 1].x - pts[k].x);
        out.push_back({pts[k].x, pts[k].y, wrap_angle(heading)});
    }
    return out;
}

std::vector<RobotState> plan_global_path(const World& world, Cell start, Cell goal)
{
    return plan_global_path(world.grid, world.robot_radius, start, goal);
}

double nearest_obstacle_distance(Vec2 p, std::span<const Vec2> points, double robot_radius, double d_cap)
{
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : points) best = std::min(best, distance(p, q));
    if (!std::isfinite(best)) return d_cap;
    return std::clamp(best - robot_radius, 0.0, d_cap);
}

double nearest_obstacle_distance(const RobotState& state, const World& world)
{
    const auto pts = world.obstacle_points();
    return nearest_obstacle_distance(state.position(), pts, world.robot_radius, world.distance_cap);
}

std::string to_string(InjectionKind kind)
{
    switch (kind) {
    case InjectionKind::spawn_obstacle: return "spawn_obstacle";
    case InjectionKind::block_cells: return "block_cells";
    case InjectionKind::corrupt_graph: return "corrupt_graph";
    }
    return "unknown";
}

std::vector<Vec2> box_perimeter(Vec2 lo, Vec2 hi, double spacing)
{
    if (!(spacing > 0.0)) throw Error("invalid injection: spacing must be positive");
    std::vector<Vec2> pts;
    const double w = hi.x - lo.x;
    const double h = hi.y - lo.y;
    const int nx = std::max(1, static_cast<int>(std::ceil(w / spacing - 1e-9)));
    const int ny = std::max(1, static_cast<int>(std::ceil(h / spacing - 1e-9)));
    for (int i = 0; i < nx; ++i) {
        pts.push_back({lo.x + w * i / nx, lo.y});
        pts.push_back({hi.x - w * i / nx, hi.y});
    }
    for (int j = 0; j < ny; ++j) {
        pts.push_back({hi.x, lo.y + h * j / ny});
        pts.push_back({lo.x, hi.y - h * j / ny});
    }
    return pts;
}

Injection make_box_injection(const OccupancyGrid& grid, std::string name, int step, Vec2 lo, Vec2 hi, double spacing)
{
    if (!(hi.x > lo.x) || !(hi.y > lo.y)) throw Error("invalid injection: degenerate box");
    if (!grid.in_bounds(lo) || !grid.in_bounds(hi)) throw Error("invalid injection");
    Injection inj;
    inj.kind = InjectionKind::spawn_obstacle;
    inj.step = step;
    inj.name = std::move(name);
    const Cell a = grid.cell_at(lo);
    const Cell b = grid.cell_at({hi.x - 1e-9, hi.y - 1e-9});
    for (int r = a.row; r <= b.row; ++r)
        for (int c = a.col; c <= b.col; ++c) inj.cells.push_back({r, c});
    inj.points = box_perimeter(lo, hi, spacing);
    return inj;
}

std::vector<Vec2> segment_points(Vec2 a, Vec2 b, double spacing)
{
    if (!(spacing > 0.0)) throw Error("invalid injection: spacing must be positive");
    const int n = std::max(1, static_cast<int>(std::ceil(distance(a, b) / spacing)));
    std::vector<Vec2> pts;
    pts.reserve(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) pts.push_back(a + (static_cast<double>(i) / n) * (b - a));
    return pts;
}

Injection make_segment_injection(const OccupancyGrid& grid, std::string name, int step, Vec2 a, Vec2 b,
                                 double spacing, double margin)
{
    if (!grid.in_bounds(a) || !grid.in_bounds(b)) throw Error("invalid injection");
    Injection inj;
    inj.kind = InjectionKind::spawn_obstacle;
    inj.step = step;
    inj.name = std::move(name);
    inj.points = segment_points(a, b, spacing);
    const Vec2 ab = b - a;
    const double len2 = dot(ab, ab);
    for (int r = 0; r < grid.rows(); ++r)
        for (int c = 0; c < grid.cols(); ++c) {
            const Vec2 p = grid.center({r, c});
            const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
            if (distance(p, a + t * ab) < margin) inj.cells.push_back({r, c});
        }
    return inj;
}

void apply_injection(const Injection& inj, World& world, SceneGraph& graph)
{
    switch (inj.kind) {
    case InjectionKind::spawn_obstacle:
    case InjectionKind::block_cells: {
        for (const auto& c : inj.cells)
            if (!world.grid.in_bounds(c)) throw Error("invalid injection");
        for (const auto& p : inj.points)
            if (!world.grid.in_bounds(p)) throw Error("invalid injection");
        for (const auto& c : inj.cells) world.grid.set_occupied(c, true);
        Obstacle o{inj.name, inj.points};
        if (inj.kind == InjectionKind::block_cells && o.points.empty())
            for (const auto& c : inj.cells) o.points.push_back(world.grid.center(c));
        if (!o.points.empty()) world.obstacles.push_back(std::move(o));
        break;
    }
    case InjectionKind::corrupt_graph:
        graph = corrupt(graph, inj.edit);
        break;
    }
}

int apply_due_injections(std::span<const Injection> injections, int step, World& world, SceneGraph& graph)
{
    int fired = 0;
    for (const auto& inj : injections) {
        if (inj.step != step) continue;
        apply_injection(inj, world, graph);
        ++fired;
    }
    return fired;
}

void validate_budgets(const Budgets& b)
{
    if (b.max_local_epochs < 1) throw Error("invalid budgets: Y must be >= 1");
    for (int x : b.reset_epochs)
        if (x < 0 || x >= b.max_local_epochs) throw Error("invalid budgets: X must lie in [0, Y)");
    if (!(b.timeout > 0.0)) throw Error("invalid budgets: timeout must be positive");
    if (!(b.attempt_time_limit > 0.0)) throw Error("invalid budgets: attempt_time_limit must be positive");
    if (b.gcot_iterations < 1) throw Error("invalid budgets: gcot_iterations must be >= 1");
}

} // namespace serp
