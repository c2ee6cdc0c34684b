// SPDX-License-Identifier: Apache-2.0

#include "serp/gcot_engine.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace serp {

using json = nlohmann::json;

namespace {

constexpr const char* kGraphOpen = "GRAPH:\n";
constexpr const char* kGraphClose = "\nEND_GRAPH";

std::string trim(const std::string& s)
{
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string strip_label(std::string id)
{
    const auto br = id.find('[');
    if (br != std::string::npos) id = id.substr(0, br);
    return trim(id);
}

std::string chat_or_throw(ChatClient& llm, const ModelRequest& req)
{
    try {
        return llm.chat(req);
    } catch (const Error& e) {
        const std::string what = e.what();
        if (what.rfind("llm unavailable: ", 0) == 0) throw;
        throw Error("llm unavailable: " + what);
    }
}

std::string subtask_lines(const std::vector<std::string>& subtasks)
{
    std::string out;
    for (std::size_t i = 0; i < subtasks.size(); ++i) out += std::to_string(i + 1) + ". " + subtasks[i] + "\n";
    return out;
}

} // namespace

std::string to_string(FeedbackStatus s)
{
    switch (s) {
    case FeedbackStatus::success: return "success";
    case FeedbackStatus::timeout_unreached: return "timeout_unreached";
    case FeedbackStatus::prolonged_stationary: return "prolonged_stationary";
    case FeedbackStatus::target_not_detected: return "target_not_detected";
    case FeedbackStatus::collision: return "collision";
    }
    return "unknown";
}

std::string render_feedback(const Feedback& f)
{
    std::string out = "status: " + to_string(f.status) + "\n";
    out += "failed_step: " + std::to_string(f.context.failed_step) + "\n";
    out += "failed_node: " + (f.context.failed_node.empty() ? std::string("none") : f.context.failed_node) + "\n";
    out += "pose: " + format_fixed(f.context.pose.x, 2) + " " + format_fixed(f.context.pose.y, 2) + " " +
           format_fixed(f.context.pose.theta, 2) + "\n";
    out += "min_distance: " + format_fixed(f.context.min_distance, 3) + "\n";
    out += "elapsed: " + format_fixed(f.context.elapsed, 1) + "\n";
    if (!f.note.empty()) out += "note: " + f.note + "\n";
    return out;
}

std::string SymbolicPlan::text() const
{
    std::string out = "[";
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (i) out += ", ";
        out += "goto(" + steps[i].label + ")";
    }
    return out + "]";
}

std::vector<std::string> graph_blocks(const std::string& prompt)
{
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto a = prompt.find(kGraphOpen, pos);
        if (a == std::string::npos) break;
        const auto start = a + std::char_traits<char>::length(kGraphOpen);
        const auto b = prompt.find(kGraphClose, start);
        if (b == std::string::npos) break;
        out.push_back(prompt.substr(start, b - start));
        pos = b + std::char_traits<char>::length(kGraphClose);
    }
    return out;
}

void TokenLedger::add_prompt(const std::string& prompt)
{
    const std::size_t total = count_tokens(prompt);
    tokens_sent += total;
    std::size_t graph = 0;
    const auto blocks = graph_blocks(prompt);
    for (const auto& b : blocks) graph += count_tokens(b);
    graph_tokens_sent += graph;
    graph_calls += blocks.empty() ? 0 : 1;
    baseline_tokens += total - graph + (blocks.empty() ? 0 : full_graph_tokens);
}

void TokenLedger::merge(const TokenLedger& o)
{
    tokens_sent += o.tokens_sent;
    graph_tokens_sent += o.graph_tokens_sent;
    baseline_tokens += o.baseline_tokens;
    graph_calls += o.graph_calls;
}

std::string decompose_prompt(const std::string& instruction)
{
    return "TASK: decompose\nINSTRUCTION: " + instruction +
           "\nRESPONSE: one atomic subtask per line, nothing else\n";
}

std::vector<std::string> parse_subtasks(const std::string& response)
{
    std::vector<std::string> out;
    const std::string t = trim(response);
    if (!t.empty() && t.front() == '[') {
        try {
            for (const auto& s : json::parse(t))
                if (s.is_string() && !trim(s.get<std::string>()).empty()) out.push_back(trim(s.get<std::string>()));
            return out;
        } catch (const json::exception&) {
            out.clear();
        }
    }
    std::istringstream in(response);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        std::size_t i = 0;
        while (i < line.size() && (line[i] == '-' || line[i] == '*' || std::isspace(static_cast<unsigned char>(line[i]))))
            ++i;
        std::size_t j = i;
        while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i && j < line.size() && (line[j] == '.' || line[j] == ')')) i = j + 1;
        line = trim(line.substr(i));
        if (line.size() >= 2 && line.front() == '"' && line.back() == '"') line = line.substr(1, line.size() - 2);
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

std::vector<std::string> decompose(const std::string& instruction, ChatClient& llm, RequestSequence& seq,
                                   TokenLedger* ledger)
{
    const std::string prompt = decompose_prompt(instruction);
    if (ledger) ledger->add_prompt(prompt);
    const std::string response = chat_or_throw(llm, {RequestKind::decompose, prompt, seq.take()});
    auto subtasks = parse_subtasks(response);
    if (subtasks.empty()) subtasks.push_back(instruction);
    return subtasks;
}

std::vector<std::string> retrieve_elements(const SceneGraph& graph, const std::string& subtask, int k,
                                           const Embedder& embedder)
{
    if (k < 1) throw Error("retrieve_elements: k must be >= 1");
    const std::vector<float> q = embedder.embed(subtask);
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& [id, n] : graph.nodes()) {
        if (n.level != NodeLevel::room && n.level != NodeLevel::object) continue;
        if (n.embedding.empty()) throw Error("embeddings missing");
        scored.push_back({cosine(q, n.embedding), id});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < scored.size() && static_cast<int>(i) < k; ++i) out.push_back(scored[i].second);
    return out;
}

std::vector<ElementFeature> element_features(const SceneGraph& graph, const std::vector<std::string>& ids)
{
    std::vector<ElementFeature> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        const SceneNode& n = graph.node(id);
        ElementFeature f;
        f.id = id;
        f.level = n.level;
        f.tag = n.tag;
        f.parent = n.parent;
        f.position = n.position;
        if (n.level == NodeLevel::object) {
            if (const auto room = graph.room_of(id)) {
                f.room = *room;
                f.room_tag = graph.node(*room).tag;
            }
        }
        out.push_back(std::move(f));
    }
    return out;
}

std::string serialize_features(const std::vector<ElementFeature>& features)
{
    std::string out;
    for (const auto& f : features) {
        out += "{\"id\":\"" + f.id + "\",\"level\":\"" + to_string(f.level) + "\",\"tag\":\"" + f.tag + "\"";
        if (f.level == NodeLevel::object && !f.room.empty())
            out += ",\"room\":\"" + f.room + "\",\"room_tag\":\"" + f.room_tag + "\"";
        else
            out += ",\"parent\":\"" + f.parent + "\"";
        if (f.position)
            out += ",\"position\":[" + format_fixed(f.position->x, 2) + "," + format_fixed(f.position->y, 2) + "]";
        out += "}\n";
    }
    if (!out.empty()) out.pop_back();
    return out;
}

std::string distill_prompt(const std::vector<std::string>& subtasks, const Feedback* feedback,
                           const std::vector<ElementFeature>& features, const std::string& context)
{
    std::string p = "TASK: distill_select\nSUBTASKS:\n" + subtask_lines(subtasks);
    if (feedback) p += "FEEDBACK:\n" + render_feedback(*feedback);
    if (!context.empty()) p += "CONTEXT:\n" + context + "\n";
    p += "CANDIDATES:\n";
    p += kGraphOpen + serialize_features(features) + kGraphClose + "\n";
    p += "RESPONSE: SELECT: <comma separated candidate ids needed for the subtasks>\n";
    return p;
}

std::vector<std::string> parse_selection(const std::string& response)
{
    std::vector<std::string> out;
    const auto at = response.find("SELECT:");
    if (at == std::string::npos) return out;
    std::string rest = response.substr(at + 7);
    const auto nl = rest.find('\n');
    if (nl != std::string::npos && !trim(rest.substr(0, nl)).empty()) rest = rest.substr(0, nl);
    std::string cur;
    int depth = 0;
    auto flush = [&] {
        const std::string id = strip_label(cur);
        if (!id.empty()) out.push_back(id);
        cur.clear();
    };
    for (char c : rest) {
        if (c == '[') ++depth;
        if (c == ']') depth = std::max(0, depth - 1);
        if (depth == 0 && (c == ',' || std::isspace(static_cast<unsigned char>(c)))) {
            flush();
        } else {
            cur += c;
        }
    }
    flush();
    return out;
}

DistillResult distill(const SceneGraph& graph, const Feedback* feedback, const std::vector<std::string>& subtasks,
                      ChatClient& llm, const Embedder& embedder, int k, RequestSequence& seq, TokenLedger& ledger,
                      int iteration, const std::string& context)
{
    DistillResult r;
    std::set<std::string> seen;
    for (const auto& st : subtasks)
        for (const auto& id : retrieve_elements(graph, st, k, embedder))
            if (seen.insert(id).second) r.pool.push_back(id);

    const std::string prompt = distill_prompt(subtasks, feedback, element_features(graph, r.pool), context);
    ledger.add_prompt(prompt);
    const std::string response = chat_or_throw(llm, {RequestKind::distill_select, prompt, seq.take()});
    for (const auto& id : parse_selection(response)) {
        if (!graph.contains(id)) {
            r.warnings.push_back("dropped unknown id " + id);
            continue;
        }
        if (!seen.contains(id)) {
            r.warnings.push_back("dropped non-candidate id " + id);
            continue;
        }
        if (std::find(r.selected.begin(), r.selected.end(), id) == r.selected.end()) r.selected.push_back(id);
    }
    r.distilled = form_element_graph(graph, r.selected, "G", iteration);
    return r;
}

std::string synthesize_prompt(const DistilledGraph& distilled, const std::string& subtask, const Feedback* feedback)
{
    std::string p = "TASK: synthesize\nSUBTASK: " + subtask + "\n";
    if (feedback) p += "FEEDBACK:\n" + render_feedback(*feedback);
    p += kGraphOpen + serialize(distilled.graph) + kGraphClose + "\n";
    p += "RESPONSE: PLAN: goto(<id>[<tag>]), ... using only nodes of the graph, or NOT_PLANNABLE\n";
    return p;
}

PlanParse parse_plan(const std::string& response)
{
    PlanParse out;
    if (response.find("NOT_PLANNABLE") != std::string::npos) {
        out.reason = "NOT_PLANNABLE";
        return out;
    }
    const auto at = response.find("PLAN:");
    if (at == std::string::npos) {
        out.reason = "no plan block";
        return out;
    }
    std::size_t pos = at;
    while (true) {
        const auto g = response.find("goto(", pos);
        if (g == std::string::npos) break;
        const auto start = g + 5;
        // The closing parenthesis is the first ')' after any bracketed tag.
        std::size_t end = start;
        int depth = 0;
        while (end < response.size() && !(response[end] == ')' && depth == 0)) {
            if (response[end] == '[') ++depth;
            if (response[end] == ']') depth = std::max(0, depth - 1);
            ++end;
        }
        if (end >= response.size()) break;
        const std::string id = strip_label(response.substr(start, end - start));
        if (!id.empty()) out.ids.push_back(id);
        pos = end + 1;
    }
    if (out.ids.empty()) {
        out.reason = "empty plan";
        return out;
    }
    out.plannable = true;
    return out;
}

std::optional<SymbolicPlan> synthesize_plan(const DistilledGraph& distilled, const std::vector<std::string>& subtasks,
                                            ChatClient& llm, RequestSequence& seq, TokenLedger& ledger,
                                            const Feedback* feedback, std::string* reason)
{
    SymbolicPlan plan;
    for (const auto& st : subtasks) {
        const std::string prompt = synthesize_prompt(distilled, st, feedback);
        ledger.add_prompt(prompt);
        const std::string response = chat_or_throw(llm, {RequestKind::synthesize, prompt, seq.take()});
        const PlanParse parsed = parse_plan(response);
        if (!parsed.plannable) {
            if (reason) *reason = "subtask '" + st + "': " + parsed.reason;
            return std::nullopt;
        }
        for (const auto& id : parsed.ids) {
            if (!distilled.graph.contains(id)) {
                if (reason) *reason = "subtask '" + st + "': node " + id + " not in the distilled graph";
                return std::nullopt;
            }
            const SceneNode& n = distilled.graph.node(id);
            if (!n.position) {
                if (reason) *reason = "node " + id + " has no position";
                return std::nullopt;
            }
            plan.steps.push_back({id, distilled.graph.label(id), *n.position});
        }
    }
    if (plan.steps.empty()) {
        if (reason) *reason = "empty plan";
        return std::nullopt;
    }
    return plan;
}

GcotResult gcot_loop(const SceneGraph& graph, const std::string& instruction, const Feedback* feedback,
                     const GcotBudget& budget, ChatClient& llm, const Embedder& embedder, RequestSequence& seq)
{
    if (budget.iterations < 1) throw Error("gcot budget must be >= 1");
    GcotResult res;
    res.tokens.full_graph_tokens = token_count(graph);
    res.subtasks = decompose(instruction, llm, seq, &res.tokens);
    int k = std::max(1, budget.k);
    std::string context;
    for (int it = 1; it <= budget.iterations; ++it) {
        res.iterations = it;
        DistillResult d = distill(graph, feedback, res.subtasks, llm, embedder, k, seq, res.tokens, it, context);
        res.warnings.insert(res.warnings.end(), d.warnings.begin(), d.warnings.end());
        res.distilled = d.distilled;
        GcotIteration rec;
        rec.k = k;
        rec.pool_size = d.pool.size();
        rec.pool = d.pool;
        rec.selected = d.selected;
        std::string reason;
        auto plan = synthesize_plan(d.distilled, res.subtasks, llm, seq, res.tokens, feedback, &reason);
        rec.plannable = plan.has_value();
        rec.reason = reason;
        res.trace.push_back(rec);
        if (plan) {
            res.plan = std::move(plan);
            return res;
        }
        std::string sel;
        for (const auto& s : d.selected) sel += (sel.empty() ? "" : ", ") + s;
        if (!context.empty()) context += "\n";
        context += "iteration " + std::to_string(it) + " with k=" + std::to_string(k) + " selected [" + sel +
                   "] was not plannable: " + reason;
        k *= 2;
    }
    return res;
}

} // namespace serp
