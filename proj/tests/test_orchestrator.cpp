// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "serp/metrics.hpp"
#include "serp/orchestrator.hpp"
#include "serp/report.hpp"

#include <filesystem>

using namespace serp;

namespace {

const std::filesystem::path kFixtures = SERP_FIXTURES;

ScenarioSpec phantom_spec()
{
    return load_scenario(kFixtures / "scenarios/phantom_sink.json");
}

SymbolicPlan plan_to(const SceneGraph& g, std::initializer_list<const char*> ids)
{
    SymbolicPlan p;
    for (const char* id : ids) p.steps.push_back({id, g.label(id), *g.node(id).position});
    return p;
}

VerifyOptions options_for(const ScenarioSpec& spec)
{
    VerifyOptions o;
    o.controller = spec.controller;
    o.detection = spec.detection;
    o.goal_tolerance = spec.scenario.goal_tolerance;
    o.attempt_time_limit = spec.scenario.budgets.attempt_time_limit;
    return o;
}

const EpisodeReport& phantom_report()
{
    static const EpisodeReport rep = [] {
        const auto spec = phantom_spec();
        auto clients = scenario_clients(spec, "mock");
        RunOptions o;
        o.seed = 7;
        return run_serp(spec, clients, o);
    }();
    return rep;
}

} // namespace

TEST_CASE("feedback classification")
{
    Feedback f;
    for (auto s : {FeedbackStatus::collision, FeedbackStatus::prolonged_stationary, FeedbackStatus::timeout_unreached}) {
        f.status = s;
        CHECK(is_physical(f));
    }
    f.status = FeedbackStatus::target_not_detected;
    CHECK_FALSE(is_physical(f));
    f.status = FeedbackStatus::success;
    CHECK_FALSE(is_physical(f));
}

TEST_CASE("verify_plan reaches a real object and misses a phantom")
{
    const auto spec = phantom_spec();
    HashEmbedder emb;
    const auto graph = load_graph(spec.resolve(spec.scenario.graph_file), &emb);
    GraphEdit phantom{GraphEdit::Kind::add_phantom, "object_0_6_32", "room_6", "sink_cabinet", {8.0, 2.0}};
    const auto corrupted = corrupt(graph, phantom, &emb);
    const PlannerParams params{1.3, 1.0, 12.0};
    const auto opts = options_for(spec);

    const auto ok = verify_plan(plan_to(corrupted, {"room_6", "object_0_6_52"}), spec.scenario.world, corrupted,
                                spec.scenario.start, params, opts);
    CHECK_MESSAGE(ok.ok(), ok.note);
    CHECK(distance(ok.context.pose.position(), Vec2{18.0, 2.0}) < 1.6);

    const auto miss = verify_plan(plan_to(corrupted, {"room_6", "object_0_6_32"}), spec.scenario.world, corrupted,
                                  spec.scenario.start, params, opts);
    CHECK(miss.status == FeedbackStatus::target_not_detected);
    CHECK(miss.context.failed_step == 1);
    CHECK(miss.context.failed_node == "object_0_6_32");
}

TEST_CASE("phantom episode replans to the real sink")
{
    const auto& rep = phantom_report();
    CHECK(rep.outcome == "success");
    REQUIRE(rep.global_passes.size() == 2);
    CHECK(rep.global_passes[0].trigger == "initial");
    CHECK(rep.global_passes[1].trigger == "target_not_detected");
    REQUIRE(rep.global_passes[1].plan.has_value());
    CHECK(rep.global_passes[1].plan->text() == "[goto(room_6[kitchen]), goto(object_0_6_52[sink])]");
    CHECK(rep.epochs_total == 0);
    CHECK(rep.local_phases.empty());
    CHECK(rep.goal_node == "object_0_6_52[sink]");
    CHECK(rep.goal_distance <= 1.5);
    CHECK(rep.path_length >= rep.shortest_path_length);
    CHECK(rep.tokens.tokens_sent < rep.tokens.baseline_tokens);
}

TEST_CASE("report audit and round trip")
{
    const auto& rep = phantom_report();
    const auto audit = audit_report(rep);
    CHECK_MESSAGE(audit.matches, std::string(audit.mismatches.empty() ? "" : audit.mismatches[0]));
    CHECK(audit.rgtr == rep.rgtr);

    const auto text = report_to_json_text(rep);
    const auto back = report_from_json_text(text);
    CHECK(report_to_json_text(back) == text);
    CHECK(text.find(kWallClockKey) != std::string::npos);
    const auto stripped = strip_wall_clock(text);
    CHECK(stripped.find(kWallClockKey) == std::string::npos);
    CHECK(stripped == report_to_json_text(rep, false));
}

TEST_CASE("episodes are deterministic")
{
    const auto spec = phantom_spec();
    auto clients = scenario_clients(spec, "mock");
    RunOptions o;
    o.seed = 7;
    const auto again = run_serp(spec, clients, o);
    CHECK(report_to_json_text(again, false) == report_to_json_text(phantom_report(), false));
}

TEST_CASE("initial parameters override retrieval")
{
    const auto spec = phantom_spec();
    auto clients = scenario_clients(spec, "mock");
    RunOptions o;
    o.initial_params = PlannerParams{2.0, 1.5, 10.0};
    const auto rep = run_serp(spec, clients, o);
    CHECK(rep.initial_params == PlannerParams{2.0, 1.5, 10.0});
    CHECK(phantom_report().initial_params == PlannerParams{1.3, 1.0, 12.0});
    CHECK(phantom_report().retrieval_status == "retrieved");

    auto clients2 = scenario_clients(spec, "mock");
    RunOptions r;
    r.remove_best_record = true;
    CHECK(run_serp(spec, clients2, r).initial_params == PlannerParams{2.0, 1.5, 10.0});
}
