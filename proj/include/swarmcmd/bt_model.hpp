#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace swarmcmd::bt {

enum class NodeKind
{
    Sequence,
    Fallback,
    ActionLeaf,
    ConditionLeaf,
};

inline bool is_control(NodeKind kind)
{
    return kind == NodeKind::Sequence || kind == NodeKind::Fallback;
}

std::string_view to_string(NodeKind kind);

using Params = std::map<std::string, std::string>;

struct BtNode
{
    NodeKind kind = NodeKind::ActionLeaf;
    // Element tag. For control nodes this is "Sequence" or "Fallback".
    std::string name;
    Params params;
    std::vector<BtNode> children;

    bool operator==(const BtNode&) const = default;
};

BtNode sequence(std::vector<BtNode> children);
BtNode fallback(std::vector<BtNode> children);
BtNode action(std::string name, Params params = {});
BtNode condition(std::string name);

struct DeclaredNode
{
    NodeKind kind = NodeKind::ActionLeaf;
    std::string name;

    bool operator==(const DeclaredNode&) const = default;
};

struct BehaviorTree
{
    std::string tree_id = "MainTree";
    BtNode root_node;
    std::vector<DeclaredNode> declared_model;

    bool operator==(const BehaviorTree&) const = default;
};

/// Builds a tree whose declared model lists each distinct leaf once, in
/// first-use order.
BehaviorTree make_tree(BtNode root, std::string tree_id = "MainTree");

/// Visits every leaf under `node` in document order.
template <typename Fn>
void for_each_leaf(const BtNode& node, Fn&& fn)
{
    if (!is_control(node.kind))
    {
        fn(node);
        return;
    }
    for (const auto& child : node.children)
        for_each_leaf(child, fn);
}

// ---------------------------------------------------------------------------
// Whitelist
// ---------------------------------------------------------------------------

struct ParamSpec
{
    std::string key;
    // Empty means free-form (any non-empty value).
    std::vector<std::string> allowed;

    [[nodiscard]] bool free_form() const { return allowed.empty(); }
    bool operator==(const ParamSpec&) const = default;
};

struct LeafSpec
{
    std::string name;
    std::vector<ParamSpec> params;

    bool operator==(const LeafSpec&) const = default;
};

class WhitelistError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Closed set of executable leaves. Validation consults nothing else.
class NodeWhitelist
{
public:
    NodeWhitelist() = default;
    /// Throws WhitelistError when names overlap, repeat, are reserved, or are
    /// not valid XML names.
    NodeWhitelist(std::vector<LeafSpec> actions, std::vector<LeafSpec> conditions);

    [[nodiscard]] const std::vector<LeafSpec>& actions() const { return actions_; }
    [[nodiscard]] const std::vector<LeafSpec>& conditions() const { return conditions_; }
    [[nodiscard]] std::size_t size() const { return actions_.size() + conditions_.size(); }

    /// ActionLeaf or ConditionLeaf, or nullopt when the name is not listed.
    [[nodiscard]] std::optional<NodeKind> kind_of(std::string_view name) const;
    [[nodiscard]] const LeafSpec* find(std::string_view name) const;

    /// Empty when `params` satisfy the spec of `name`; otherwise one message
    /// per problem.
    [[nodiscard]] std::vector<std::string> check_params(std::string_view name,
                                                        const Params& params) const;

    /// One line per node, e.g. "ChangeColor(color: red|green|...)".
    [[nodiscard]] std::string describe_actions() const;
    [[nodiscard]] std::string describe_conditions() const;

    static NodeWhitelist from_json(const nlohmann::json& doc);
    static NodeWhitelist load(const std::string& path);
    [[nodiscard]] nlohmann::json to_json() const;

    bool operator==(const NodeWhitelist&) const = default;

private:
    std::vector<LeafSpec> actions_;
    std::vector<LeafSpec> conditions_;
};

const std::vector<std::string>& allowed_colors();

/// The artifact's fixed primitive vocabulary (13 entries).
const NodeWhitelist& default_whitelist();

// ---------------------------------------------------------------------------
// Gate
// ---------------------------------------------------------------------------

enum class FailureCategory
{
    NonXml = 1,
    MalformedXml = 2,
    IncompleteStructure = 3,
    UnsupportedNode = 4,
};

/// The five gate outcomes; numeric values double as CLI exit codes.
enum class Outcome
{
    Accepted = 0,
    NonXml = 1,
    MalformedXml = 2,
    IncompleteStructure = 3,
    UnsupportedNode = 4,
};

std::string_view to_string(FailureCategory category);
std::string_view to_string(Outcome outcome);
std::optional<FailureCategory> failure_category_from_string(std::string_view text);

enum class Verdict
{
    Accepted,
    Rejected,
};

struct Diagnostic
{
    // "line:col" and/or an element path such as /root/BehaviorTree/Sequence[0].
    std::string location;
    std::string message;

    bool operator==(const Diagnostic&) const = default;
};

struct ValidationReport
{
    Verdict verdict = Verdict::Rejected;
    std::optional<FailureCategory> category;
    std::vector<Diagnostic> diagnostics;
    std::optional<BehaviorTree> tree;

    [[nodiscard]] bool accepted() const { return verdict == Verdict::Accepted; }
    [[nodiscard]] Outcome outcome() const;

    bool operator==(const ValidationReport&) const = default;
};

/// Runs the full gate on raw model output. Never throws.
ValidationReport parse_document(std::string_view text,
                                const NodeWhitelist& whitelist = default_whitelist());

/// Same decision procedure as parse_document, outcome only.
Outcome classify_failure(std::string_view text,
                         const NodeWhitelist& whitelist = default_whitelist());

class SerializeError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Emits the canonical wire format. Throws SerializeError for trees that
/// would not pass the gate (unknown or undeclared leaves, bad params, empty
/// control nodes).
std::string serialize_tree(const BehaviorTree& tree,
                           const NodeWhitelist& whitelist = default_whitelist());

nlohmann::json to_json(const ValidationReport& report);

} // namespace swarmcmd::bt
