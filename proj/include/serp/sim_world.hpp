// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "serp/common.hpp"
#include "serp/scene_graph.hpp"

#include <compare>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace serp {

struct RobotState {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;   // (-pi, pi]

    Vec2 position() const { return {x, y}; }
    friend bool operator==(const RobotState&, const RobotState&) = default;
};

struct ControlInput {
    double v = 0.0;   // m/s
    double w = 0.0;   // rad/s
    friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

/// Physical constraint set: box bounds on speed and turn rate.
struct Constraints {
    double v_max = 1.0;
    double w_max = 1.5;

    ControlInput clamp(ControlInput u) const;
    bool admits(ControlInput u) const;
};

struct Cell {
    int row = 0;
    int col = 0;
    auto operator<=>(const Cell&) const = default;
};

/// Row-major occupancy grid. Cell (r, c) covers
/// [c*res, (c+1)*res) x [r*res, (r+1)*res) in world coordinates.
class OccupancyGrid {
public:
    OccupancyGrid() = default;
    OccupancyGrid(int rows, int cols, double resolution);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double resolution() const { return resolution_; }

    bool in_bounds(Cell c) const { return c.row >= 0 && c.col >= 0 && c.row < rows_ && c.col < cols_; }
    bool in_bounds(Vec2 p) const;
    bool occupied(Cell c) const;
    void set_occupied(Cell c, bool value);

    Vec2 center(Cell c) const;
    Cell cell_at(Vec2 p) const;

    /// Blocked mask (1 = blocked): occupied cells plus every cell whose center
    /// lies closer than `radius` to an occupied cell square.
    std::vector<std::uint8_t> inflated(double radius) const;

    friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    double resolution_ = 1.0;
    std::vector<std::uint8_t> cells_;
};

struct Obstacle {
    std::string name;
    std::vector<Vec2> points;
};

/// Ground-truth object placement, used only by target detection.
struct WorldObject {
    std::string id;
    std::string tag;
    Vec2 position;
};

struct World {
    OccupancyGrid grid;
    std::vector<Obstacle> obstacles;
    std::vector<WorldObject> objects;
    double robot_radius = 0.2;
    double dt = 0.1;
    double v_ref = 0.5;
    double distance_cap = 3.0;
    Constraints limits;

    std::vector<Vec2> obstacle_points() const;
    /// Obstacle points within `radius` of `center`.
    std::vector<Vec2> points_near(Vec2 center, double radius) const;
    /// Robot disc overlaps an occupied cell or touches an obstacle point.
    bool in_collision(Vec2 p) const;
};

void validate_world(const World& world);

/// Forward-Euler unicycle step.
RobotState step_dynamics(const RobotState& state, ControlInput u, double dt);

/// 4-connected, unit-cost A* over cells left free after inflating `grid`
/// by `robot_radius`. Returns metric waypoints (cell centers) with headings
/// along successive segments. Ties in f are broken by (row, col).
std::vector<RobotState> plan_global_path(const OccupancyGrid& grid, double robot_radius, Cell start, Cell goal);
std::vector<RobotState> plan_global_path(const World& world, Cell start, Cell goal);
/// Line-of-sight shortcutting of a cell path: from each kept waypoint, jump to
/// the farthest later waypoint whose straight segment stays in cells free
/// under inflation by `clearance`. Corners are then cut (quarter points,
/// `rounding_passes` times) while the edges stay free, and the result is
/// resampled at the grid resolution. A path that is already straight is
/// returned verbatim.
std::vector<RobotState> shortcut_path(const OccupancyGrid& grid, double clearance,
                                      const std::vector<RobotState>& waypoints, int rounding_passes = 3);
/// Same search, returning the cell sequence.
std::vector<Cell> plan_cells(const OccupancyGrid& grid, double robot_radius, Cell start, Cell goal);

/// Distance from the robot disc to the nearest obstacle point, clamped to
/// [0, d_cap]. With no obstacle points the cap is returned.
double nearest_obstacle_distance(const RobotState& state, const World& world);
double nearest_obstacle_distance(Vec2 p, std::span<const Vec2> points, double robot_radius, double d_cap);

enum class InjectionKind { spawn_obstacle, block_cells, corrupt_graph };
std::string to_string(InjectionKind kind);

struct Injection {
    InjectionKind kind = InjectionKind::spawn_obstacle;
    int step = 0;
    std::string name;
    std::vector<Cell> cells;      // cells to mark occupied
    std::vector<Vec2> points;     // obstacle point samples
    GraphEdit edit;               // corrupt_graph only
};

/// Axis-aligned box: covered cells plus perimeter samples at `spacing`.
Injection make_box_injection(const OccupancyGrid& grid, std::string name, int step,
                             Vec2 lo, Vec2 hi, double spacing);
std::vector<Vec2> box_perimeter(Vec2 lo, Vec2 hi, double spacing);

/// Thin wall from a to b: cells whose centers lie within `margin` of the
/// segment plus evenly spaced samples, at most `spacing` apart.
Injection make_segment_injection(const OccupancyGrid& grid, std::string name, int step, Vec2 a, Vec2 b,
                                 double spacing, double margin);
std::vector<Vec2> segment_points(Vec2 a, Vec2 b, double spacing);

void apply_injection(const Injection& injection, World& world, SceneGraph& graph);
/// Applies every injection whose trigger equals `step`; returns how many fired.
int apply_due_injections(std::span<const Injection> injections, int step, World& world, SceneGraph& graph);

struct Budgets {
    std::set<int> reset_epochs;       // X
    int max_local_epochs = 20;        // Y
    double timeout = 300.0;           // simulated seconds for the whole episode
    double attempt_time_limit = 60.0; // simulated seconds per verify attempt
    int gcot_iterations = 3;
};

void validate_budgets(const Budgets& budgets);

struct Scenario {
    std::string id;
    World world;
    std::string graph_file;
    std::string instruction;
    RobotState start;
    double goal_tolerance = 0.5;
    std::vector<Injection> injections;
    Budgets budgets;
    std::string llm_script;
    std::string vlm_script;
    std::string memory_file;
    std::string memory_query;
};

} // namespace serp
