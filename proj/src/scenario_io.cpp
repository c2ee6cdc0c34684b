// SPDX-License-Identifier: Apache-2.0

#include "serp/scenario_io.hpp"

#include "serp/model_clients.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace serp {

using json = nlohmann::json;

std::string to_string(EvolutionMode mode)
{
    switch (mode) {
    case EvolutionMode::ilad: return "ilad";
    case EvolutionMode::ad_only: return "ad_only";
    case EvolutionMode::il_only: return "il_only";
    }
    return "unknown";
}

EvolutionMode parse_mode(const std::string& text)
{
    if (text == "ilad" || text == "ILAD") return EvolutionMode::ilad;
    if (text == "ad_only" || text == "ad-only" || text == "AD") return EvolutionMode::ad_only;
    if (text == "il_only" || text == "il-only" || text == "IL") return EvolutionMode::il_only;
    throw Error("unknown evolution mode: " + text);
}

std::filesystem::path ScenarioSpec::resolve(const std::string& relative) const
{
    if (relative.empty()) return {};
    std::filesystem::path p(relative);
    return p.is_absolute() ? p : base_dir / p;
}

std::vector<std::uint8_t> decode_rle_row(const std::string& text)
{
    std::vector<std::uint8_t> out;
    std::istringstream in(text);
    std::string run;
    while (in >> run) {
        const auto x = run.find('x');
        if (x == std::string::npos || x == 0 || x + 2 != run.size()) throw Error("malformed grid row: " + run);
        int count = 0;
        try {
            std::size_t used = 0;
            count = std::stoi(run.substr(0, x), &used);
            if (used != x) throw Error("");
        } catch (...) {
            throw Error("malformed grid row: " + run);
        }
        const char v = run[x + 1];
        if (count < 1 || (v != '0' && v != '1')) throw Error("malformed grid row: " + run);
        out.insert(out.end(), static_cast<std::size_t>(count), static_cast<std::uint8_t>(v - '0'));
    }
    return out;
}

std::string encode_rle_row(const std::vector<std::uint8_t>& cells)
{
    std::string out;
    std::size_t i = 0;
    while (i < cells.size()) {
        std::size_t j = i;
        while (j < cells.size() && cells[j] == cells[i]) ++j;
        if (!out.empty()) out += ' ';
        out += std::to_string(j - i) + "x" + (cells[i] ? "1" : "0");
        i = j;
    }
    return out;
}

namespace {

Vec2 vec(const json& j)
{
    if (!j.is_array() || j.size() != 2) throw Error("malformed scenario: expected [x, y]");
    return {j[0].get<double>(), j[1].get<double>()};
}

Cell cell(const json& j)
{
    if (!j.is_array() || j.size() != 2) throw Error("malformed scenario: expected [row, col]");
    return {j[0].get<int>(), j[1].get<int>()};
}

OccupancyGrid read_grid(const json& g)
{
    const double res = g.at("resolution").get<double>();
    std::vector<std::vector<std::uint8_t>> rows;
    for (const auto& r : g.at("rows")) {
        if (r.is_string()) {
            rows.push_back(decode_rle_row(r.get<std::string>()));
        } else {
            const auto row = decode_rle_row(r.at("row").get<std::string>());
            const int repeat = r.value("repeat", 1);
            for (int i = 0; i < repeat; ++i) rows.push_back(row);
        }
    }
    if (rows.empty()) throw Error("malformed scenario: empty grid");
    const std::size_t cols = rows.front().size();
    for (const auto& r : rows)
        if (r.size() != cols) throw Error("malformed scenario: grid rows differ in length");
    OccupancyGrid grid(static_cast<int>(rows.size()), static_cast<int>(cols), res);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < cols; ++c)
            if (rows[r][c]) grid.set_occupied({static_cast<int>(r), static_cast<int>(c)}, true);
    return grid;
}

// Shapes shared by static obstacles and spawn injections.
Injection read_shape(const json& j, const OccupancyGrid& grid, int step)
{
    const std::string name = j.value("name", std::string("obstacle"));
    const double spacing = j.value("spacing", 0.1);
    if (j.contains("segment")) {
        const auto& s = j.at("segment");
        return make_segment_injection(grid, name, step, vec(s.at(0)), vec(s.at(1)), spacing, j.value("margin", 0.25));
    }
    if (j.contains("box")) {
        const auto& b = j.at("box");
        return make_box_injection(grid, name, step, vec(b.at(0)), vec(b.at(1)), spacing);
    }
    Injection inj;
    inj.kind = InjectionKind::spawn_obstacle;
    inj.step = step;
    inj.name = name;
    for (const auto& p : j.value("points", json::array())) inj.points.push_back(vec(p));
    for (const auto& c : j.value("cells", json::array())) inj.cells.push_back(cell(c));
    if (inj.points.empty() && inj.cells.empty()) throw Error("malformed scenario: obstacle '" + name + "' has no shape");
    return inj;
}

GraphEdit read_edit(const json& j)
{
    GraphEdit e;
    e.kind = parse_edit_kind(j.at("kind").get<std::string>());
    e.id = j.at("id").get<std::string>();
    e.parent = j.value("parent", std::string());
    e.tag = j.value("tag", std::string());
    if (j.contains("position")) e.position = vec(j.at("position"));
    return e;
}

Injection read_injection(const json& j, const OccupancyGrid& grid)
{
    const std::string kind = j.at("kind").get<std::string>();
    const int step = j.value("step", 0);
    if (kind == "spawn_obstacle") return read_shape(j, grid, step);
    if (kind == "block_cells") {
        Injection inj;
        inj.kind = InjectionKind::block_cells;
        inj.step = step;
        inj.name = j.value("name", std::string("block"));
        for (const auto& c : j.value("cells", json::array())) inj.cells.push_back(cell(c));
        if (j.contains("rect")) {
            const Cell a = cell(j.at("rect").at(0));
            const Cell b = cell(j.at("rect").at(1));
            for (int r = std::min(a.row, b.row); r <= std::max(a.row, b.row); ++r)
                for (int c = std::min(a.col, b.col); c <= std::max(a.col, b.col); ++c) inj.cells.push_back({r, c});
        }
        if (j.contains("points_spacing")) {
            // Sample each blocked cell square on a lattice so the distance term sees the block.
            const double sp = j.at("points_spacing").get<double>();
            const double res = grid.resolution();
            const int n = std::max(1, static_cast<int>(std::ceil(res / sp)));
            for (const auto& c : inj.cells)
                for (int a = 0; a <= n; ++a)
                    for (int b = 0; b <= n; ++b)
                        inj.points.push_back({(c.col + static_cast<double>(b) / n) * res,
                                              (c.row + static_cast<double>(a) / n) * res});
        }
        for (const auto& c : inj.cells)
            if (!grid.in_bounds(c)) throw Error("invalid injection: cell outside the grid");
        return inj;
    }
    if (kind == "corrupt_graph") {
        Injection inj;
        inj.kind = InjectionKind::corrupt_graph;
        inj.step = step;
        inj.name = j.value("name", std::string("corruption"));
        inj.edit = read_edit(j.at("edit"));
        return inj;
    }
    throw Error("malformed scenario: unknown injection kind " + kind);
}

PlannerParams read_params(const json& j)
{
    if (j.is_array()) {
        if (j.size() != 3) throw Error("malformed scenario: params need [q_s, p_v, eta]");
        return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    }
    return {j.at("q_s").get<double>(), j.at("p_v").get<double>(), j.at("eta").get<double>()};
}

} // namespace

ScenarioSpec scenario_from_json_text(const std::string& text, const std::filesystem::path& base_dir)
{
    ScenarioSpec spec;
    spec.base_dir = base_dir;
    Scenario& sc = spec.scenario;
    try {
        const json doc = json::parse(text);
        sc.id = doc.at("id").get<std::string>();
        World& w = sc.world;
        w.grid = read_grid(doc.at("grid"));
        const json wj = doc.value("world", json::object());
        w.robot_radius = wj.value("robot_radius", w.robot_radius);
        w.dt = wj.value("dt", w.dt);
        w.v_ref = wj.value("v_ref", w.v_ref);
        w.distance_cap = wj.value("distance_cap", w.distance_cap);
        w.limits.v_max = wj.value("v_max", w.limits.v_max);
        w.limits.w_max = wj.value("w_max", w.limits.w_max);

        for (const auto& o : doc.value("obstacles", json::array())) {
            const Injection shape = read_shape(o, w.grid, 0);
            for (const auto& c : shape.cells) w.grid.set_occupied(c, true);
            if (!shape.points.empty()) w.obstacles.push_back({shape.name, shape.points});
        }
        for (const auto& o : doc.value("objects", json::array()))
            w.objects.push_back({o.at("id").get<std::string>(), o.value("tag", std::string()), vec(o.at("position"))});

        const auto& st = doc.at("start");
        sc.start = {st.at(0).get<double>(), st.at(1).get<double>(), st.size() > 2 ? st.at(2).get<double>() : 0.0};
        sc.graph_file = doc.value("graph_file", std::string());
        sc.instruction = doc.value("instruction", std::string());
        sc.goal_tolerance = doc.value("goal_tolerance", sc.goal_tolerance);
        for (const auto& inj : doc.value("injections", json::array())) sc.injections.push_back(read_injection(inj, w.grid));

        const json b = doc.value("budgets", json::object());
        for (const auto& x : b.value("X", json::array())) sc.budgets.reset_epochs.insert(x.get<int>());
        sc.budgets.max_local_epochs = b.value("Y", sc.budgets.max_local_epochs);
        sc.budgets.timeout = b.value("timeout", sc.budgets.timeout);
        sc.budgets.attempt_time_limit = b.value("attempt_time_limit", sc.budgets.attempt_time_limit);
        sc.budgets.gcot_iterations = b.value("gcot_iterations", sc.budgets.gcot_iterations);

        const json s = doc.value("scripts", json::object());
        sc.llm_script = s.value("llm", std::string());
        sc.vlm_script = s.value("vlm", std::string());

        const json m = doc.value("memory", json::object());
        sc.memory_file = m.value("file", std::string());
        sc.memory_query = m.value("query", std::string());
        if (m.contains("default_params")) spec.default_params = read_params(m.at("default_params"));
        spec.retrieval_k = m.value("k", spec.retrieval_k);

        const json e = doc.value("evolution", json::object());
        spec.evolution.options.epsilon = e.value("epsilon", spec.evolution.options.epsilon);
        spec.evolution.options.clip = e.value("clip", spec.evolution.options.clip);
        spec.evolution.options.fd_scale = e.value("fd_scale", spec.evolution.options.fd_scale);
        spec.evolution.steps = e.value("steps", spec.evolution.steps);
        if (e.contains("mode")) spec.evolution.mode = parse_mode(e.at("mode").get<std::string>());
        if (e.contains("weights")) {
            const auto& lw = e.at("weights");
            spec.evolution.weights = {lw.value("alpha", 1.0), lw.value("beta", 1.0), lw.value("gamma", 1.0),
                                      lw.value("omega", 1.0)};
        }

        const json c = doc.value("controller", json::object());
        spec.controller.horizon = c.value("horizon", spec.controller.horizon);
        spec.controller.solver.max_iters = c.value("max_iters", spec.controller.solver.max_iters);
        spec.controller.solver.g_tol = c.value("g_tol", spec.controller.solver.g_tol);

        const json d = doc.value("detection", json::object());
        spec.detection.stall_distance = d.value("stall_distance", spec.detection.stall_distance);
        spec.detection.stall_window = d.value("stall_window", spec.detection.stall_window);
        spec.detection.detection_radius = d.value("detection_radius", spec.detection.detection_radius);
        spec.gcot_k = doc.value("gcot_k", spec.gcot_k);
        const json gp = doc.value("global_planner", json::object());
        spec.shortcut_clearance = gp.value("shortcut_clearance", spec.shortcut_clearance);
    } catch (const json::exception& ex) {
        throw Error(std::string("malformed scenario: ") + ex.what());
    }
    validate_world(sc.world);
    validate_budgets(sc.budgets);
    if (!spec.default_params.valid()) throw Error("malformed scenario: invalid default params");
    if (!spec.evolution.weights.valid()) throw Error("malformed scenario: invalid loss weights");
    if (spec.evolution.steps < 1) throw Error("malformed scenario: evolution steps must be >= 1");
    return spec;
}

ScenarioSpec load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open scenario file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return scenario_from_json_text(ss.str(), path.parent_path());
}

std::vector<std::string> lint_scenario(const ScenarioSpec& spec)
{
    std::vector<std::string> issues;
    const Scenario& sc = spec.scenario;
    auto check_file = [&](const std::string& field, const std::string& rel) {
        if (rel.empty()) return false;
        const auto p = spec.resolve(rel);
        if (!std::filesystem::exists(p)) {
            issues.push_back(field + " not found: " + p.string());
            return false;
        }
        return true;
    };
    if (sc.graph_file.empty()) {
        issues.push_back("graph_file missing");
    } else if (check_file("graph_file", sc.graph_file)) {
        try {
            const HashEmbedder embedder;
            SceneGraph g = load_graph(spec.resolve(sc.graph_file), &embedder);
            for (const auto& v : validate(g)) issues.push_back("graph: " + v.rule + " at " + v.node);
        } catch (const Error& e) {
            issues.push_back(std::string("graph: ") + e.what());
        }
    }
    if (check_file("llm script", sc.llm_script)) {
        try {
            MockScript::load(spec.resolve(sc.llm_script));
        } catch (const Error& e) {
            issues.push_back(std::string("llm script: ") + e.what());
        }
    }
    if (check_file("vlm script", sc.vlm_script)) {
        try {
            MockScript::load(spec.resolve(sc.vlm_script));
        } catch (const Error& e) {
            issues.push_back(std::string("vlm script: ") + e.what());
        }
    }
    check_file("memory file", sc.memory_file);
    if (sc.instruction.empty()) issues.push_back("instruction is empty");
    if (!sc.world.grid.in_bounds(sc.start.position())) {
        issues.push_back("start outside the grid");
    } else if (sc.world.in_collision(sc.start.position())) {
        issues.push_back("start pose is in collision");
    }
    for (const auto& inj : sc.injections) {
        for (const auto& c : inj.cells)
            if (!sc.world.grid.in_bounds(c)) issues.push_back("injection '" + inj.name + "' has a cell outside the grid");
        for (const auto& p : inj.points)
            if (!sc.world.grid.in_bounds(p)) issues.push_back("injection '" + inj.name + "' has a point outside the grid");
    }
    return issues;
}

} // namespace serp
