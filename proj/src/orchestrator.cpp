// SPDX-License-Identifier: Apache-2.0

#include "serp/orchestrator.hpp"

#include "serp/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <queue>

namespace serp {

namespace {

// Nearest cell (breadth first, 4-connected) that survives inflation.
std::optional<Cell> nearest_free(const OccupancyGrid& grid, const std::vector<std::uint8_t>& blocked, Cell from)
{
    auto idx = [&](Cell c) { return static_cast<std::size_t>(c.row) * grid.cols() + c.col; };
    auto clampc = [&](Cell c) {
        return Cell{std::clamp(c.row, 0, grid.rows() - 1), std::clamp(c.col, 0, grid.cols() - 1)};
    };
    from = clampc(from);
    std::vector<std::uint8_t> seen(blocked.size(), 0);
    std::queue<Cell> q;
    q.push(from);
    seen[idx(from)] = 1;
    while (!q.empty()) {
        const Cell c = q.front();
        q.pop();
        if (!blocked[idx(c)]) return c;
        const Cell next[4] = {{c.row - 1, c.col}, {c.row, c.col - 1}, {c.row, c.col + 1}, {c.row + 1, c.col}};
        for (const Cell& n : next) {
            if (!grid.in_bounds(n) || seen[idx(n)]) continue;
            seen[idx(n)] = 1;
            q.push(n);
        }
    }
    return std::nullopt;
}

} // namespace

bool is_physical(const Feedback& f)
{
    if (f.status == FeedbackStatus::collision || f.status == FeedbackStatus::prolonged_stationary) return true;
    return f.status == FeedbackStatus::timeout_unreached && f.note.rfind("no path", 0) != 0 &&
           f.note.rfind("episode timeout", 0) != 0;
}

Executor::Executor(World world, SceneGraph graph, std::vector<Injection> injections, RobotState start,
                   VerifyOptions options)
    : world_(std::move(world)), graph_(std::move(graph)), injections_(std::move(injections)), options_(options)
{
    cursor_.pose = start;
}

void Executor::apply_due(int step)
{
    bool world_edit = false;
    for (int s = applied_through_ + 1; s <= step; ++s) {
        for (const auto& inj : injections_) {
            if (inj.step != s) continue;
            apply_injection(inj, world_, graph_);
            if (inj.kind == InjectionKind::corrupt_graph) graph_changed_ = true;
            else world_edit = true;
        }
    }
    applied_through_ = std::max(applied_through_, step);
    (void)world_edit;
}

bool Executor::take_graph_changed()
{
    const bool v = graph_changed_;
    graph_changed_ = false;
    return v;
}

void Executor::restart_plan()
{
    cursor_.goto_index = 0;
    cursor_.has_path = false;
    stuck_.reset();
}

bool Executor::plan_path(const SymbolicPlan& plan, std::string& error)
{
    const PlanStep& step = plan.steps[cursor_.goto_index];
    const auto blocked = world_.grid.inflated(world_.robot_radius);
    const auto s = nearest_free(world_.grid, blocked, world_.grid.cell_at(cursor_.pose.position()));
    const auto g = nearest_free(world_.grid, blocked, world_.grid.cell_at(step.target));
    if (!s || !g) {
        error = "no free cell near " + (s ? step.label : std::string("the robot"));
        return false;
    }
    std::vector<RobotState> wps;
    try {
        wps = plan_global_path(world_.grid, world_.robot_radius, *s, *g);
        if (options_.shortcut_clearance > 0.0) wps = shortcut_path(world_.grid, options_.shortcut_clearance, wps);
    } catch (const Error& e) {
        error = e.what();
        return false;
    }
    cursor_.path = ReferencePath(wps);
    cursor_.path_goal = wps.back().position();
    cursor_.progress = 0.0;
    cursor_.has_path = true;
    return true;
}

Feedback Executor::fail(FeedbackStatus status, const SymbolicPlan& plan, std::string note)
{
    Feedback f;
    f.status = status;
    f.note = std::move(note);
    f.context.failed_step = static_cast<int>(cursor_.goto_index);
    if (cursor_.goto_index < plan.steps.size()) f.context.failed_node = plan.steps[cursor_.goto_index].node_id;
    f.context.pose = cursor_.pose;
    f.context.min_distance = min_clearance_;
    f.context.elapsed = elapsed();
    return f;
}

Feedback Executor::verify(const SymbolicPlan& plan, const PlannerParams& params)
{
    stuck_.reset();
    const int start_steps = steps_;
    auto to_steps = [](double s) { return static_cast<int>(std::min(s, double(std::numeric_limits<int>::max() / 2))); };
    const int attempt_steps = to_steps(std::ceil(options_.attempt_time_limit / world_.dt - 1e-9));
    const int episode_steps = to_steps(std::floor(options_.episode_timeout / world_.dt + 1e-9));
    min_clearance_ = 1e9;
    if (plan.steps.empty()) return fail(FeedbackStatus::timeout_unreached, plan, "no path: empty plan");

    while (true) {
        if (cursor_.goto_index >= plan.steps.size()) break;
        if (cursor_.has_path && distance(cursor_.pose.position(), cursor_.path_goal) <= options_.goal_tolerance) {
            // Goto complete. The last one must also see its object.
            const PlanStep& done = plan.steps[cursor_.goto_index];
            if (cursor_.goto_index + 1 == plan.steps.size() && graph_.contains(done.node_id) &&
                graph_.node(done.node_id).level == NodeLevel::object) {
                const bool seen = std::any_of(world_.objects.begin(), world_.objects.end(), [&](const WorldObject& o) {
                    return o.id == done.node_id && distance(o.position, done.target) <= options_.detection.detection_radius;
                });
                if (!seen)
                    return fail(FeedbackStatus::target_not_detected, plan,
                                done.node_id + " not found at recorded location");
            }
            ++cursor_.goto_index;
            cursor_.has_path = false;
            continue;
        }
        if (!cursor_.has_path) {
            apply_due(steps_);
            std::string err;
            if (!plan_path(plan, err)) return fail(FeedbackStatus::timeout_unreached, plan, "no path: " + err);
            if (distance(cursor_.pose.position(), cursor_.path_goal) <= options_.goal_tolerance) continue;
        }
        const int budget = std::min(attempt_steps - (steps_ - start_steps), episode_steps - steps_);
        if (budget <= 0) {
            return fail(FeedbackStatus::timeout_unreached, plan,
                        steps_ >= episode_steps ? "episode timeout" : "time limit reached");
        }

        SegmentSpec spec;
        spec.path = cursor_.path;
        spec.start_progress = cursor_.progress;
        spec.start = cursor_.pose;
        spec.goal = cursor_.path_goal;
        spec.goal_tolerance = options_.goal_tolerance;
        spec.max_steps = budget;
        spec.start_from_rest = cursor_.at_rest;
        spec.stall_distance = options_.detection.stall_distance;
        spec.stall_window = options_.detection.stall_window;
        spec.stop_on_failure = true;

        SegmentRunner runner(world_, params, options_.controller, spec);
        while (!runner.done()) {
            const int taken = static_cast<int>(runner.partial().rollout.states.size()) - 1;
            const int before = applied_through_;
            apply_due(steps_ + taken);
            if (applied_through_ != before) runner.world_changed(world_);
            runner.step(world_);
        }
        const SegmentResult r = runner.finish();
        const auto& states = r.rollout.states;
        trace_.insert(trace_.end(), states.begin() + 1, states.end());
        steps_ += static_cast<int>(states.size()) - 1;
        min_clearance_ = std::min(min_clearance_, r.min_clearance);
        cursor_.pose = states.back();
        cursor_.progress = r.rollout.end_progress;
        if (!r.rollout.blocked.empty()) cursor_.at_rest = r.rollout.blocked.back();

        if (r.status == SegmentStatus::reached) continue;

        StuckSegment stuck;
        stuck.spec = spec;
        stuck.spec.start = cursor_.pose;
        stuck.spec.start_progress = cursor_.progress;
        stuck.spec.start_from_rest = cursor_.at_rest;
        stuck.goto_index = cursor_.goto_index;
        stuck_ = stuck;
        switch (r.status) {
        case SegmentStatus::collision: return fail(FeedbackStatus::collision, plan, "refused step into an obstacle");
        case SegmentStatus::stationary:
            return fail(FeedbackStatus::prolonged_stationary, plan, "no progress over the stall window");
        default:
            return fail(FeedbackStatus::timeout_unreached, plan,
                        steps_ >= episode_steps ? "episode timeout" : "time limit reached");
        }
    }
    Feedback ok;
    ok.status = FeedbackStatus::success;
    ok.context.failed_step = -1;
    ok.context.pose = cursor_.pose;
    ok.context.min_distance = min_clearance_;
    ok.context.elapsed = elapsed();
    return ok;
}

std::optional<StuckSegment> Executor::stuck_segment(int steps) const
{
    if (!stuck_) return std::nullopt;
    StuckSegment s = *stuck_;
    s.spec.max_steps = steps;
    return s;
}

void Executor::commit(const Episode& episode, const StuckSegment& segment)
{
    if (episode.states.size() < 2) return;
    trace_.insert(trace_.end(), episode.states.begin() + 1, episode.states.end());
    steps_ += static_cast<int>(episode.states.size()) - 1;
    for (double d : episode.clearances) min_clearance_ = std::min(min_clearance_, d);
    cursor_.pose = episode.states.back();
    cursor_.goto_index = segment.goto_index;
    cursor_.path = segment.spec.path;
    cursor_.path_goal = segment.spec.goal;
    cursor_.has_path = true;
    cursor_.at_rest = false;
    apply_due(steps_);
    stuck_.reset();
}

Feedback verify_plan(const SymbolicPlan& plan, const World& world, const SceneGraph& graph, const RobotState& start,
                     const PlannerParams& params, const VerifyOptions& options)
{
    Executor ex(world, graph, {}, start, options);
    return ex.verify(plan, params);
}

ModelClients scenario_clients(const ScenarioSpec& spec, const std::string& backend)
{
    if (parse_backend(backend) == Backend::http) return make_http_clients(HttpConfig::from_env());
    std::shared_ptr<MockScript> llm;
    std::shared_ptr<MockScript> vlm;
    if (!spec.scenario.llm_script.empty())
        llm = std::make_shared<MockScript>(MockScript::load(spec.resolve(spec.scenario.llm_script)));
    if (!spec.scenario.vlm_script.empty())
        vlm = std::make_shared<MockScript>(MockScript::load(spec.resolve(spec.scenario.vlm_script)));
    return make_mock_clients(llm, vlm);
}

EpisodeReport run_serp(const ScenarioSpec& spec, ModelClients& clients, const RunOptions& options)
{
    const auto wall_start = std::chrono::steady_clock::now();
    const Scenario& sc = spec.scenario;
    EpisodeReport rep;
    rep.scenario_id = sc.id;
    rep.backend = options.backend;
    rep.seed = options.seed;
    rep.start = sc.start;
    rep.max_local_epochs = sc.budgets.max_local_epochs;
    rep.grid_resolution = sc.world.grid.resolution();
    const EvolutionMode mode = options.mode.value_or(spec.evolution.mode);
    rep.mode = to_string(mode);
    if (!clients.embedder) clients.embedder = std::make_shared<HashEmbedder>();
    const Embedder& embedder = *clients.embedder;

    if (sc.graph_file.empty()) throw Error("scenario has no graph_file");
    SceneGraph graph = load_graph(spec.resolve(sc.graph_file), &embedder);

    VerifyOptions vopts;
    vopts.controller = spec.controller;
    vopts.detection = spec.detection;
    vopts.goal_tolerance = sc.goal_tolerance;
    vopts.attempt_time_limit = sc.budgets.attempt_time_limit;
    vopts.episode_timeout = sc.budgets.timeout;
    vopts.shortcut_clearance = spec.shortcut_clearance;
    Executor ex(sc.world, graph, sc.injections, sc.start, vopts);
    ex.apply_due(0);
    SceneGraph memory_graph = ex.graph();
    embed_missing(memory_graph, embedder);
    ex.take_graph_changed();

    // Parameter retrieval.
    PlannerParams P = spec.default_params;
    if (options.initial_params) {
        P = *options.initial_params;
        rep.retrieval_status = "given";
    } else if (!sc.memory_file.empty()) {
        ParamMemory memory = ParamMemory::load(spec.resolve(sc.memory_file), &embedder);
        try {
            if (options.remove_best_record) {
                const auto best = memory.retrieve_initial(sc.memory_query, 1, embedder);
                memory.remove(best.second.ids.front());
            }
            auto [params, answer] = memory.retrieve_initial(sc.memory_query, spec.retrieval_k, embedder);
            P = params;
            rep.retrieval = std::move(answer);
            rep.retrieval_status = "retrieved";
        } catch (const Error& e) {
            if (std::string(e.what()) != "cold start") throw;
            rep.retrieval_status = "cold start";
            rep.warnings.push_back("cold start: using default parameters");
        }
    } else {
        rep.retrieval_status = "not configured";
    }
    rep.initial_params = P;

    std::set<int> X;
    const int Y = sc.budgets.max_local_epochs;
    if (mode == EvolutionMode::ilad) X = sc.budgets.reset_epochs;
    if (mode == EvolutionMode::il_only)
        for (int k = 0; k < Y; ++k) X.insert(k);

    EvolutionState evo;
    evo.params = P;
    evo.weights = spec.evolution.weights;
    evo.schedule = X;
    evo.budget = Y;

    RequestSequence seq;
    std::optional<SymbolicPlan> plan;
    const std::size_t full_tokens = token_count(memory_graph);
    rep.tokens.full_graph_tokens = full_tokens;

    auto global_pass = [&](const Feedback* fb, const std::string& trigger) {
        if (ex.take_graph_changed()) {
            memory_graph = ex.graph();
            embed_missing(memory_graph, embedder);
        }
        GlobalPass pass;
        pass.index = static_cast<int>(rep.global_passes.size());
        pass.trigger = trigger;
        try {
            GcotResult res = gcot_loop(memory_graph, sc.instruction, fb, {sc.budgets.gcot_iterations, spec.gcot_k},
                                       *clients.llm, embedder, seq);
            pass.plan = res.plan;
            pass.iterations = res.iterations;
            pass.subtasks = res.subtasks;
            pass.trace = res.trace;
            pass.warnings = res.warnings;
            pass.tokens = res.tokens;
            pass.distilled_tokens = token_count(res.distilled.graph);
        } catch (const Error& e) {
            pass.warnings.push_back(e.what());
        }
        rep.tokens.merge(pass.tokens);
        plan = pass.plan;
        rep.global_passes.push_back(pass);
        if (plan) ex.restart_plan();
        return plan.has_value();
    };

    auto finalize = [&](bool success, std::string reason) {
        rep.outcome = success ? "success" : "failure";
        rep.reason = std::move(reason);
        rep.final_params = P;
        rep.trace.clear();
        rep.trace.push_back(sc.start);
        rep.trace.insert(rep.trace.end(), ex.trace().begin(), ex.trace().end());
        rep.final_pose = rep.trace.back();
        rep.path_length = trace_length(rep.trace);
        rep.sim_time = ex.elapsed();
        if (plan && !plan->steps.empty()) {
            rep.goal_node = plan->steps.back().label;
            rep.goal_position = plan->steps.back().target;
        } else if (!rep.global_passes.empty()) {
            for (const auto& gp : rep.global_passes)
                if (gp.plan && !gp.plan->steps.empty()) {
                    rep.goal_node = gp.plan->steps.back().label;
                    rep.goal_position = gp.plan->steps.back().target;
                }
        }
        rep.goal_distance = distance(rep.final_pose.position(), rep.goal_position);
        const World& w = ex.world();
        try {
            const auto cells = plan_cells(w.grid, w.robot_radius, w.grid.cell_at(sc.start.position()),
                                          w.grid.cell_at(rep.goal_position));
            rep.shortest_path_length = (static_cast<double>(cells.size()) - 1.0) * w.grid.resolution();
        } catch (const Error&) {
            rep.shortest_path_length = distance(sc.start.position(), rep.goal_position);
        }
        if (rep.shortest_path_length <= 0.0) rep.shortest_path_length = w.grid.resolution();
        rep.rgtr = compute_rgtr(rep.tokens.graph_tokens_sent,
                                static_cast<std::size_t>(rep.tokens.graph_calls) * rep.tokens.full_graph_tokens);
        rep.exchanges = clients.log ? clients.log->entries() : std::vector<Exchange>{};
        rep.final_grid.clear();
        for (int r = 0; r < w.grid.rows(); ++r) {
            std::vector<std::uint8_t> row(static_cast<std::size_t>(w.grid.cols()));
            for (int c = 0; c < w.grid.cols(); ++c) row[static_cast<std::size_t>(c)] = w.grid.occupied({r, c}) ? 1 : 0;
            rep.final_grid.push_back(encode_rle_row(row));
        }
        rep.wall_clock_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
        return rep;
    };

    if (!global_pass(nullptr, "initial")) return finalize(false, "not plannable");

    while (true) {
        if (ex.elapsed() >= sc.budgets.timeout - 1e-9) return finalize(false, "timeout");
        AttemptRecord att;
        att.index = static_cast<int>(rep.attempts.size());
        att.params = P;
        att.steps_before = ex.steps();
        const Feedback F = ex.verify(*plan, P);
        att.feedback = F;
        att.steps_after = ex.steps();
        rep.attempts.push_back(att);
        if (F.ok()) return finalize(true, "");
        if (F.note == "episode timeout") return finalize(false, "timeout");

        const auto stuck = is_physical(F) ? ex.stuck_segment(spec.evolution.steps) : std::nullopt;
        if (stuck && evo.epoch <= Y - 1) {
            // Local ASE: epochs k..Y-1 on re-simulations of the stuck segment.
            const EpisodeClosure closure = segment_closure(ex.world(), spec.controller, stuck->spec);
            FailureContext ctx;
            ctx.failure = to_string(F.status) + (F.note.empty() ? "" : ": " + F.note);
            ctx.pose = F.context.pose;
            ctx.min_distance = F.context.min_distance;
            evo.params = P;
            const std::size_t before = evo.history.size();
            const EvolutionOutcome out =
                run_ilad(evo, closure, {stuck->spec.goal.x, stuck->spec.goal.y, 0.0},
                         mode == EvolutionMode::ad_only ? nullptr : clients.advisor.get(), ctx,
                         spec.evolution.options, seq.next);
            seq.next += out.advisor_requests;
            LocalPhase phase;
            phase.start_epoch = out.start_epoch;
            phase.end_epoch = out.epochs_used;
            phase.status = to_string(out.status);
            phase.reason = out.reason;
            rep.local_phases.push_back(phase);
            rep.epochs_total += phase.end_epoch - phase.start_epoch;
            for (std::size_t i = before; i < out.trace.size(); ++i)
                rep.evolution.push_back({static_cast<int>(rep.local_phases.size()) - 1, out.trace[i]});
            evo = out.state;
            P = out.final_params;
            if (out.status == EvolutionOutcome::Status::success) ex.commit(out.last_episode, *stuck);
            continue;
        }

        if (static_cast<int>(rep.global_passes.size()) >= options.max_global_passes)
            return finalize(false, "global replanning budget exhausted");
        const bool ok = global_pass(&F, to_string(F.status));
        evo.epoch = 0;
        evo.history.clear();
        if (!ok) return finalize(false, "not plannable");
    }
}

} // namespace serp
