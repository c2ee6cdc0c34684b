// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "serp/gcot_engine.hpp"

#include <filesystem>

using namespace serp;

namespace {

const std::filesystem::path kFixtures = SERP_FIXTURES;

struct Rig {
    HashEmbedder emb;
    SceneGraph graph;
    std::shared_ptr<MockScript> script = std::make_shared<MockScript>();
    std::shared_ptr<ExchangeLog> log = std::make_shared<ExchangeLog>();
    MockChatClient llm{script, log};
    RequestSequence seq;

    explicit Rig(const char* file = "graphs/home_40.json") : graph(load_graph(kFixtures / file, &emb)) {}
};

} // namespace

TEST_CASE("subtask parsing")
{
    CHECK(parse_subtasks("1. go to the kitchen\n- wash hands\n\n* dry off") ==
          std::vector<std::string>{"go to the kitchen", "wash hands", "dry off"});
    CHECK(parse_subtasks("[\"a\", \"b\"]") == std::vector<std::string>{"a", "b"});
    CHECK(parse_subtasks("   ").empty());
}

TEST_CASE("decompose falls back to the instruction")
{
    Rig rig;
    rig.script->add_sequence(RequestKind::decompose, "");
    CHECK(decompose("rest a bit", rig.llm, rig.seq) == std::vector<std::string>{"rest a bit"});
    CHECK_THROWS_WITH_AS(decompose("rest", rig.llm, rig.seq), "llm unavailable: script exhausted: decompose", Error);
}

TEST_CASE("selection and plan parsing")
{
    CHECK(parse_selection("SELECT: room_6, object_0_6_52[sink]") ==
          std::vector<std::string>{"room_6", "object_0_6_52"});
    CHECK(parse_selection("nothing here").empty());
    const auto p = parse_plan("PLAN: goto(room_6[kitchen]), goto(object_0_6_52[sink])");
    CHECK(p.plannable);
    CHECK(p.ids == std::vector<std::string>{"room_6", "object_0_6_52"});
    CHECK_FALSE(parse_plan("NOT_PLANNABLE").plannable);
    CHECK_FALSE(parse_plan("go to the kitchen").plannable);
}

TEST_CASE("retrieval ranks by cosine with ties by id")
{
    Rig rig;
    const auto top = retrieve_elements(rig.graph, "sink to wash hands", 3, rig.emb);
    REQUIRE(top.size() == 3);
    CHECK(top[0] == "object_0_6_52");
    for (const auto& id : top) CHECK(rig.graph.node(id).level >= NodeLevel::room);
    CHECK_THROWS_AS(retrieve_elements(rig.graph, "sink", 0, rig.emb), Error);
}

TEST_CASE("distill keeps the selection inside the pool and records graph tokens")
{
    Rig rig;
    rig.script->add_sequence(RequestKind::distill_select, "SELECT: object_0_6_52, not_a_node");
    TokenLedger ledger;
    ledger.full_graph_tokens = token_count(rig.graph);
    const auto d = distill(rig.graph, nullptr, {"wash hands at the sink"}, rig.llm, rig.emb, 3, rig.seq, ledger);
    CHECK(d.selected == std::vector<std::string>{"object_0_6_52"});
    CHECK_FALSE(d.warnings.empty());
    CHECK(d.distilled.graph.contains("room_6"));
    CHECK(ledger.graph_calls == 1);
    CHECK(ledger.graph_tokens_sent > 0);
    CHECK(ledger.graph_tokens_sent < ledger.full_graph_tokens);
    CHECK(ledger.baseline_tokens > ledger.tokens_sent);
}

TEST_CASE("prompt graph blocks are auditable")
{
    const std::string prompt = "TASK\nGRAPH:\n{\"id\": \"a\"}\nEND_GRAPH\nmore\nGRAPH:\nb c\nEND_GRAPH\n";
    const auto blocks = graph_blocks(prompt);
    REQUIRE(blocks.size() == 2);
    CHECK(blocks[1] == "b c");
    TokenLedger l;
    l.full_graph_tokens = 100;
    l.add_prompt(prompt);
    CHECK(l.graph_tokens_sent == 4);
    CHECK(l.graph_calls == 1);
    CHECK(l.baseline_tokens == l.tokens_sent - 4 + 100);
    l.add_prompt("no graph here");
    CHECK(l.graph_calls == 1);
}

TEST_CASE("plans outside the distilled graph are rejected")
{
    Rig rig;
    rig.script->add_sequence(RequestKind::synthesize, "PLAN: goto(object_0_5_40[bed])");
    TokenLedger ledger;
    const auto d = form_element_graph(rig.graph, {"object_0_6_52"});
    std::string reason;
    CHECK_FALSE(synthesize_plan(d, {"wash"}, rig.llm, rig.seq, ledger, nullptr, &reason).has_value());
    CHECK_FALSE(reason.empty());
}

TEST_CASE("loop doubles k until a plan is found")
{
    Rig rig;
    rig.script->add_sequence(RequestKind::decompose, "rest on the bed");
    rig.script->add_sequence(RequestKind::distill_select, "SELECT:");
    rig.script->add_sequence(RequestKind::distill_select, "SELECT: room_5, object_0_5_40");
    rig.script->add_sequence(RequestKind::synthesize, "NOT_PLANNABLE");
    rig.script->add_sequence(RequestKind::synthesize, "PLAN: goto(room_5[bedroom]), goto(object_0_5_40[bed])");
    const auto r = gcot_loop(rig.graph, "rest", nullptr, {3, 3}, rig.llm, rig.emb, rig.seq);
    REQUIRE(r.plan.has_value());
    CHECK(r.plan->text() == "[goto(room_5[bedroom]), goto(object_0_5_40[bed])]");
    REQUIRE(r.trace.size() == 2);
    CHECK(r.trace[0].k == 3);
    CHECK(r.trace[1].k == 6);
    CHECK_FALSE(r.trace[0].plannable);
    CHECK(r.tokens_sent() > 0);
    CHECK(r.tokens.graph_tokens_sent < r.tokens.graph_calls * token_count(rig.graph));
    // every request is logged in sequence order
    const auto ex = rig.log->entries();
    for (std::size_t i = 0; i < ex.size(); ++i) CHECK(ex[i].sequence_index == static_cast<int>(i));
}

TEST_CASE("loop gives up after its budget")
{
    Rig rig;
    rig.script->set_fallback(RequestKind::decompose, "rest");
    rig.script->set_fallback(RequestKind::distill_select, "SELECT: room_5");
    rig.script->set_fallback(RequestKind::synthesize, "NOT_PLANNABLE");
    const auto r = gcot_loop(rig.graph, "rest", nullptr, {2, 3}, rig.llm, rig.emb, rig.seq);
    CHECK_FALSE(r.plan.has_value());
    CHECK(r.iterations == 2);
}

TEST_CASE("feedback is rendered into the prompts")
{
    Feedback f;
    f.status = FeedbackStatus::target_not_detected;
    f.context.failed_step = 1;
    f.context.failed_node = "object_0_6_32";
    f.note = "object_0_6_32 not found at recorded location";
    const auto block = render_feedback(f);
    CHECK(block.find("target_not_detected") != std::string::npos);
    CHECK(block.find("object_0_6_32") != std::string::npos);
    CHECK(distill_prompt({"wash"}, &f, {}, "").find(block) != std::string::npos);
}
