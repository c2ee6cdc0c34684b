// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "serp/model_clients.hpp"
#include "serp/scene_graph.hpp"
#include "serp/sim_world.hpp"

#include <optional>
#include <string>
#include <vector>

namespace serp {

enum class FeedbackStatus { success, timeout_unreached, prolonged_stationary, target_not_detected, collision };
std::string to_string(FeedbackStatus status);

struct FeedbackContext {
    int failed_step = -1;      // index of the goto step that failed
    std::string failed_node;   // its target node id
    RobotState pose;
    double min_distance = 0.0;
    double elapsed = 0.0;      // simulated seconds
};

/// Outcome of verifying a plan by execution.
struct Feedback {
    FeedbackStatus status = FeedbackStatus::success;
    FeedbackContext context;
    std::string note;

    bool ok() const { return status == FeedbackStatus::success; }
};

/// Fixed-format block used inside prompts.
std::string render_feedback(const Feedback& feedback);

struct PlanStep {
    std::string node_id;
    std::string label;   // id[tag]
    Vec2 target;
};

struct SymbolicPlan {
    std::vector<PlanStep> steps;
    /// "[goto(room_6[kitchen]), goto(object_0_6_52[sink])]"
    std::string text() const;
};

/// Prompt-token accounting. Graph content travels between GRAPH: and
/// END_GRAPH markers so the log can be audited afterwards.
struct TokenLedger {
    std::size_t tokens_sent = 0;         // every prompt, in full
    std::size_t graph_tokens_sent = 0;   // graph blocks only
    std::size_t baseline_tokens = 0;     // same prompts with the full graph in every graph block
    int graph_calls = 0;
    std::size_t full_graph_tokens = 0;   // token_count of the long-term graph

    void add_prompt(const std::string& prompt);
    void merge(const TokenLedger& other);
};

/// Graph blocks of a prompt, in order.
std::vector<std::string> graph_blocks(const std::string& prompt);

/// Per-episode request numbering shared by every model call.
struct RequestSequence {
    int next = 0;
    int take() { return next++; }
};

std::string decompose_prompt(const std::string& instruction);
/// One subtask per line; bullets and numbering are stripped. A JSON list of
/// strings is also accepted.
std::vector<std::string> parse_subtasks(const std::string& response);
/// Empty parse falls back to the whole instruction. Transport failures
/// surface as Error("llm unavailable: ...").
std::vector<std::string> decompose(const std::string& instruction, ChatClient& llm, RequestSequence& seq,
                                   TokenLedger* ledger = nullptr);

/// Cosine top-k over room and object nodes, ties by id.
std::vector<std::string> retrieve_elements(const SceneGraph& graph, const std::string& subtask, int k,
                                           const Embedder& embedder);

struct ElementFeature {
    std::string id;
    NodeLevel level = NodeLevel::object;
    std::string tag;
    std::string parent;
    std::string room;       // enclosing room id (objects)
    std::string room_tag;
    std::optional<Vec2> position;
};

std::vector<ElementFeature> element_features(const SceneGraph& graph, const std::vector<std::string>& ids);
/// One canonical line per feature, JSON shaped, in the given order.
std::string serialize_features(const std::vector<ElementFeature>& features);

struct DistillResult {
    DistilledGraph distilled;
    std::vector<std::string> pool;       // candidates, first-seen order
    std::vector<std::string> selected;
    std::vector<std::string> warnings;
};

std::string distill_prompt(const std::vector<std::string>& subtasks, const Feedback* feedback,
                           const std::vector<ElementFeature>& features, const std::string& context);
/// Ids after "SELECT:" separated by commas or whitespace; "id[tag]" is accepted.
std::vector<std::string> parse_selection(const std::string& response);

DistillResult distill(const SceneGraph& graph, const Feedback* feedback, const std::vector<std::string>& subtasks,
                      ChatClient& llm, const Embedder& embedder, int k, RequestSequence& seq, TokenLedger& ledger,
                      int iteration = 0, const std::string& context = "");

std::string synthesize_prompt(const DistilledGraph& distilled, const std::string& subtask, const Feedback* feedback);

struct PlanParse {
    bool plannable = false;
    std::vector<std::string> ids;
    std::string reason;
};

/// NOT_PLANNABLE, or a PLAN: block of goto(id[tag]) steps. Anything else is
/// not plannable.
PlanParse parse_plan(const std::string& response);

/// One request per subtask, merged in subtask order. Returns nullopt when any
/// subtask is not plannable or names a node outside the distilled graph.
std::optional<SymbolicPlan> synthesize_plan(const DistilledGraph& distilled, const std::vector<std::string>& subtasks,
                                            ChatClient& llm, RequestSequence& seq, TokenLedger& ledger,
                                            const Feedback* feedback = nullptr, std::string* reason = nullptr);

struct GcotBudget {
    int iterations = 3;
    int k = 3;
};

struct GcotIteration {
    int k = 0;
    std::size_t pool_size = 0;
    std::vector<std::string> pool;
    std::vector<std::string> selected;
    bool plannable = false;
    std::string reason;
};

struct GcotResult {
    std::optional<SymbolicPlan> plan;
    DistilledGraph distilled;
    int iterations = 0;
    std::vector<std::string> subtasks;
    std::vector<GcotIteration> trace;
    std::vector<std::string> warnings;
    TokenLedger tokens;

    std::size_t tokens_sent() const { return tokens.tokens_sent; }
};

/// decompose, then distill and synthesize until a plan is found or the
/// iteration budget runs out; k doubles after every unplannable iteration.
GcotResult gcot_loop(const SceneGraph& graph, const std::string& instruction, const Feedback* feedback,
                     const GcotBudget& budget, ChatClient& llm, const Embedder& embedder, RequestSequence& seq);

} // namespace serp
