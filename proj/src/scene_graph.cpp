// SPDX-License-Identifier: Apache-2.0

#include "serp/scene_graph.hpp"

#include "serp/model_clients.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace serp {

using nlohmann::json;

std::string to_string(NodeLevel level)
{
    switch (level) {
    case NodeLevel::root: return "root";
    case NodeLevel::floor: return "floor";
    case NodeLevel::room: return "room";
    case NodeLevel::object: return "object";
    }
    return "object";
}

NodeLevel parse_level(const std::string& text)
{
    if (text == "root") return NodeLevel::root;
    if (text == "floor") return NodeLevel::floor;
    if (text == "room") return NodeLevel::room;
    if (text == "object") return NodeLevel::object;
    throw Error("unknown node level: " + text);
}

void SceneGraph::add_node(SceneNode node)
{
    if (node.id.empty()) throw Error("empty node id");
    if (contains(node.id)) throw Error("duplicate id: " + node.id);
    std::string id = node.id;
    nodes_.emplace(std::move(id), std::move(node));
}

const SceneNode& SceneGraph::node(const std::string& id) const
{
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw Error("unknown node: " + id);
    return it->second;
}

SceneNode& SceneGraph::node_mut(const std::string& id)
{
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw Error("unknown node: " + id);
    return it->second;
}

std::vector<std::string> SceneGraph::children(const std::string& id) const
{
    std::vector<std::string> out;
    for (const auto& [nid, n] : nodes_)
        if (n.parent == id) out.push_back(nid);
    return out;
}

std::vector<std::string> SceneGraph::ancestors(const std::string& id) const
{
    std::vector<std::string> chain;
    std::set<std::string> seen;
    std::string cur = id;
    while (!cur.empty()) {
        if (!seen.insert(cur).second) throw Error("cycle at node: " + cur);
        const SceneNode& n = node(cur);
        chain.push_back(cur);
        cur = n.parent;
    }
    return chain;
}

std::optional<std::string> SceneGraph::room_of(const std::string& id) const
{
    for (const auto& a : ancestors(id))
        if (node(a).level == NodeLevel::room) return a;
    return std::nullopt;
}

std::optional<std::string> SceneGraph::root_id() const
{
    for (const auto& [id, n] : nodes_)
        if (n.level == NodeLevel::root) return id;
    return std::nullopt;
}

std::string SceneGraph::label(const std::string& id) const { return id + "[" + node(id).tag + "]"; }

void SceneGraph::remove_node(const std::string& id)
{
    if (!contains(id)) throw Error("unknown node: " + id);
    for (const auto& c : children(id)) remove_node(c);
    nodes_.erase(id);
}

bool operator==(const SceneGraph& a, const SceneGraph& b)
{
    if (a.nodes_.size() != b.nodes_.size()) return false;
    for (auto ia = a.nodes_.begin(), ib = b.nodes_.begin(); ia != a.nodes_.end(); ++ia, ++ib) {
        const SceneNode& x = ia->second;
        const SceneNode& y = ib->second;
        if (x.id != y.id || x.level != y.level || x.tag != y.tag || x.parent != y.parent ||
            x.position != y.position || x.embedding != y.embedding || x.caption != y.caption)
            return false;
    }
    return true;
}

namespace {

void check_node(const SceneNode& n, std::vector<Violation>& out)
{
    if (n.level == NodeLevel::root) {
        if (!n.parent.empty()) out.push_back({"tree", n.id, "root has a parent"});
    } else if (n.parent.empty()) {
        out.push_back({"tree", n.id, "non-root node without parent"});
    }
    if ((n.level == NodeLevel::room || n.level == NodeLevel::object) && !n.position)
        out.push_back({"missing field", n.id, "position required"});
    if (!n.embedding.empty()) {
        double s = 0.0;
        for (float v : n.embedding) s += static_cast<double>(v) * v;
        if (std::abs(std::sqrt(s) - 1.0) > 1e-6) out.push_back({"embedding norm", n.id, "norm " + format_fixed(std::sqrt(s), 6)});
    }
}

} // namespace

std::vector<Violation> validate(const std::vector<SceneNode>& nodes)
{
    std::vector<Violation> out;
    std::map<std::string, const SceneNode*> by_id;
    for (const auto& n : nodes) {
        if (!by_id.emplace(n.id, &n).second) out.push_back({"id uniqueness", n.id, "duplicate id"});
    }
    int roots = 0;
    for (const auto& n : nodes) {
        if (n.level == NodeLevel::root) ++roots;
        check_node(n, out);
        if (n.parent.empty()) continue;
        auto it = by_id.find(n.parent);
        if (it == by_id.end()) {
            out.push_back({"tree", n.id, "unknown parent " + n.parent});
            continue;
        }
        if (static_cast<int>(it->second->level) + 1 != static_cast<int>(n.level))
            out.push_back({"level ordering", n.id,
                           to_string(n.level) + " under " + to_string(it->second->level)});
    }
    if (!nodes.empty() && roots != 1) out.push_back({"tree", "", std::to_string(roots) + " root nodes"});

    // Walk every parent chain; a chain longer than the node count is a cycle.
    for (const auto& n : nodes) {
        std::string cur = n.parent;
        std::size_t steps = 0;
        while (!cur.empty() && steps <= nodes.size()) {
            auto it = by_id.find(cur);
            if (it == by_id.end()) break;
            cur = it->second->parent;
            ++steps;
        }
        if (steps > nodes.size()) out.push_back({"tree", n.id, "cycle"});
    }
    return out;
}

std::vector<Violation> validate(const SceneGraph& graph)
{
    std::vector<SceneNode> nodes;
    nodes.reserve(graph.size());
    for (const auto& [id, n] : graph.nodes()) nodes.push_back(n);
    return validate(nodes);
}

namespace {

std::string quote(const std::string& s) { return json(s).dump(); }

std::string node_line(const SceneNode& n)
{
    std::string line = "{\"id\":" + quote(n.id) + ",\"level\":" + quote(to_string(n.level)) + ",\"tag\":" + quote(n.tag);
    if (!n.parent.empty()) line += ",\"parent\":" + quote(n.parent);
    if (n.position) line += ",\"position\":[" + format_fixed(n.position->x, 2) + "," + format_fixed(n.position->y, 2) + "]";
    line += "}";
    return line;
}

} // namespace

std::string serialize_nodes(const SceneGraph& graph, const std::vector<std::string>& ids)
{
    std::vector<std::string> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    if (sorted.empty()) return "{}";
    std::string out = "{\"nodes\":[\n";
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        out += node_line(graph.node(sorted[i]));
        out += i + 1 < sorted.size() ? ",\n" : "\n";
    }
    out += "]}";
    return out;
}

std::string serialize(const SceneGraph& graph)
{
    std::vector<std::string> ids;
    ids.reserve(graph.size());
    for (const auto& [id, n] : graph.nodes()) ids.push_back(id);
    return serialize_nodes(graph, ids);
}

std::size_t count_tokens(const std::string& text)
{
    static constexpr const char* delimiters = "{}[]:,\"";
    std::size_t count = 0;
    bool in_token = false;
    for (char c : text) {
        const bool sep = std::isspace(static_cast<unsigned char>(c)) || std::strchr(delimiters, c) != nullptr;
        if (sep) {
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            ++count;
        }
    }
    return count;
}

std::size_t token_count(const SceneGraph& graph) { return count_tokens(serialize(graph)); }

std::uint64_t graph_hash(const SceneGraph& graph)
{
    std::string bytes = serialize(graph);
    for (const auto& [id, n] : graph.nodes()) {
        bytes += '\n';
        bytes += n.caption;
        for (float v : n.embedding) {
            char buf[sizeof(float)];
            std::memcpy(buf, &v, sizeof(float));
            bytes.append(buf, sizeof(float));
        }
    }
    return fnv1a(bytes);
}

std::string to_string(GraphEdit::Kind kind)
{
    switch (kind) {
    case GraphEdit::Kind::add_phantom: return "add_phantom";
    case GraphEdit::Kind::move: return "move";
    case GraphEdit::Kind::remove: return "delete";
    }
    return "add_phantom";
}

GraphEdit::Kind parse_edit_kind(const std::string& text)
{
    if (text == "add_phantom") return GraphEdit::Kind::add_phantom;
    if (text == "move") return GraphEdit::Kind::move;
    if (text == "delete" || text == "remove") return GraphEdit::Kind::remove;
    throw Error("unknown graph edit: " + text);
}

SceneGraph corrupt(const SceneGraph& graph, const GraphEdit& edit, const Embedder* embedder)
{
    SceneGraph out = graph;
    switch (edit.kind) {
    case GraphEdit::Kind::add_phantom: {
        if (!graph.contains(edit.parent)) throw Error("unknown node: " + edit.parent);
        const NodeLevel parent_level = graph.node(edit.parent).level;
        if (parent_level == NodeLevel::object) throw Error("objects cannot contain nodes");
        SceneNode n;
        n.id = edit.id;
        n.level = static_cast<NodeLevel>(static_cast<int>(parent_level) + 1);
        n.tag = edit.tag;
        n.parent = edit.parent;
        n.position = edit.position;
        if (embedder) n.embedding = embedder->embed(n.tag);
        out.add_node(std::move(n));
        break;
    }
    case GraphEdit::Kind::move:
        out.node_mut(edit.id).position = edit.position;
        break;
    case GraphEdit::Kind::remove:
        out.remove_node(edit.id);
        break;
    }
    return out;
}

DistilledGraph form_element_graph(const SceneGraph& parent, const std::vector<std::string>& selected,
                                  std::string parent_id, int iteration)
{
    std::set<std::string> keep;
    for (const auto& id : selected) {
        if (!parent.contains(id)) throw Error("unknown node: " + id);
        for (const auto& a : parent.ancestors(id)) keep.insert(a);
    }
    DistilledGraph d;
    d.parent_id = std::move(parent_id);
    d.iteration = iteration;
    for (const auto& id : keep) d.graph.add_node(parent.node(id));
    return d;
}

namespace {

SceneNode node_from_json(const json& j)
{
    SceneNode n;
    n.id = j.at("id").get<std::string>();
    n.level = parse_level(j.at("level").get<std::string>());
    n.tag = j.value("tag", std::string{});
    n.parent = j.value("parent", std::string{});
    if (j.contains("position")) {
        const auto& p = j.at("position");
        if (!p.is_array() || p.size() != 2) throw Error("node " + n.id + ": position must be [x, y]");
        n.position = Vec2{p[0].get<double>(), p[1].get<double>()};
    }
    if (j.contains("embedding")) n.embedding = j.at("embedding").get<std::vector<float>>();
    n.caption = j.value("caption", std::string{});
    return n;
}

} // namespace

void embed_missing(SceneGraph& graph, const Embedder& embedder)
{
    std::vector<std::string> ids;
    for (const auto& [id, n] : graph.nodes())
        if ((n.level == NodeLevel::room || n.level == NodeLevel::object) && n.embedding.empty()) ids.push_back(id);
    for (const auto& id : ids) {
        SceneNode& n = graph.node_mut(id);
        n.embedding = embedder.embed(n.caption.empty() ? n.tag : n.caption);
    }
}

SceneGraph graph_from_json_text(const std::string& text, const Embedder* embedder)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("malformed graph: ") + e.what());
    }
    if (!doc.contains("nodes") || !doc.at("nodes").is_array()) throw Error("malformed graph: missing nodes array");
    std::vector<SceneNode> nodes;
    try {
        for (const auto& j : doc.at("nodes")) nodes.push_back(node_from_json(j));
    } catch (const json::exception& e) {
        throw Error(std::string("malformed graph: ") + e.what());
    }
    const auto violations = validate(nodes);
    if (!violations.empty()) {
        const auto& v = violations.front();
        throw Error("invalid graph: " + v.rule + " at " + v.node + " (" + v.detail + ")");
    }
    SceneGraph g;
    for (auto& n : nodes) g.add_node(std::move(n));
    if (embedder) embed_missing(g, *embedder);
    return g;
}

SceneGraph load_graph(const std::filesystem::path& path, const Embedder* embedder)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open graph file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return graph_from_json_text(ss.str(), embedder);
}

std::string graph_to_json_text(const SceneGraph& graph)
{
    json nodes = json::array();
    for (const auto& [id, n] : graph.nodes()) {
        json j;
        j["id"] = n.id;
        j["level"] = to_string(n.level);
        j["tag"] = n.tag;
        if (!n.parent.empty()) j["parent"] = n.parent;
        if (n.position) j["position"] = {n.position->x, n.position->y};
        if (!n.caption.empty()) j["caption"] = n.caption;
        if (!n.embedding.empty()) j["embedding"] = n.embedding;
        nodes.push_back(std::move(j));
    }
    return json{{"nodes", nodes}}.dump(2) + "\n";
}

} // namespace serp
