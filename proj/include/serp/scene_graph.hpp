// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "serp/common.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace serp {

class Embedder;

enum class NodeLevel { root = 0, floor = 1, room = 2, object = 3 };

std::string to_string(NodeLevel level);
NodeLevel parse_level(const std::string& text);

struct SceneNode {
    std::string id;
    NodeLevel level = NodeLevel::object;
    std::string tag;
    std::string parent;              // empty for the root
    std::optional<Vec2> position;    // absent for the root
    std::vector<float> embedding;    // unit norm for rooms and objects
    std::string caption;             // embedding source text; defaults to the tag
};

/// Hierarchical memory: root -> floor -> room -> object containment tree.
/// Nodes are keyed (and therefore serialized) in id order.
class SceneGraph {
public:
    SceneGraph() = default;

    void add_node(SceneNode node);
    bool contains(const std::string& id) const { return nodes_.count(id) != 0; }
    const SceneNode& node(const std::string& id) const;
    SceneNode& node_mut(const std::string& id);
    const std::map<std::string, SceneNode>& nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }

    std::vector<std::string> children(const std::string& id) const;
    /// Chain from the node up to the root, node first.
    std::vector<std::string> ancestors(const std::string& id) const;
    /// Nearest room ancestor (or the node itself when it is a room).
    std::optional<std::string> room_of(const std::string& id) const;
    std::optional<std::string> root_id() const;

    /// Display label "id[tag]", the notation used in plans.
    std::string label(const std::string& id) const;

    void remove_node(const std::string& id);

    friend bool operator==(const SceneGraph&, const SceneGraph&);

private:
    std::map<std::string, SceneNode> nodes_;
};

/// A task-specific subset of a parent graph.
struct DistilledGraph {
    SceneGraph graph;
    std::string parent_id;
    int iteration = 0;
};

struct Violation {
    std::string rule;   // "id uniqueness", "tree", "level ordering", "embedding norm", "missing field"
    std::string node;
    std::string detail;
};

/// Structural lint over a graph. Empty result means valid.
std::vector<Violation> validate(const SceneGraph& graph);
/// Same lint, applied to a raw node list so duplicate ids can be reported.
std::vector<Violation> validate(const std::vector<SceneNode>& nodes);

/// Canonical text form: JSON-shaped, one node per line, nodes ordered by id,
/// positions at two decimals, embeddings and captions omitted. This is the
/// exact byte stream that goes into prompts and into token_count.
std::string serialize(const SceneGraph& graph);
std::string serialize_nodes(const SceneGraph& graph, const std::vector<std::string>& ids);

/// Token rule: split on whitespace and the delimiters { } [ ] : , " and count
/// the non-empty pieces.
std::size_t count_tokens(const std::string& text);
std::size_t token_count(const SceneGraph& graph);

/// FNV-1a over the canonical serialization plus embeddings.
std::uint64_t graph_hash(const SceneGraph& graph);

struct GraphEdit {
    enum class Kind { add_phantom, move, remove };
    Kind kind = Kind::add_phantom;
    std::string id;
    std::string parent;    // add_phantom
    std::string tag;       // add_phantom
    Vec2 position;         // add_phantom, move
};

std::string to_string(GraphEdit::Kind kind);
GraphEdit::Kind parse_edit_kind(const std::string& text);

/// Returns an edited copy; the input is left untouched.
SceneGraph corrupt(const SceneGraph& graph, const GraphEdit& edit, const Embedder* embedder = nullptr);

/// Keeps the selected nodes plus every ancestor; containment edges between
/// kept nodes survive.
DistilledGraph form_element_graph(const SceneGraph& parent, const std::vector<std::string>& selected,
                                  std::string parent_id = "G", int iteration = 0);

/// Loads a graph file. Nodes without an embedding are embedded from their
/// caption (or tag) when an embedder is supplied.
SceneGraph load_graph(const std::filesystem::path& path, const Embedder* embedder);
SceneGraph graph_from_json_text(const std::string& text, const Embedder* embedder);
std::string graph_to_json_text(const SceneGraph& graph);

/// Fills in embeddings for room/object nodes that lack one.
void embed_missing(SceneGraph& graph, const Embedder& embedder);

} // namespace serp
