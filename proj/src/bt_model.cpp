#include "swarmcmd/bt_model.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "swarmcmd/xml.hpp"

namespace swarmcmd::bt {

std::string_view to_string(NodeKind kind)
{
    switch (kind)
    {
    case NodeKind::Sequence: return "Sequence";
    case NodeKind::Fallback: return "Fallback";
    case NodeKind::ActionLeaf: return "Action";
    case NodeKind::ConditionLeaf: return "Condition";
    }
    return "?";
}

BtNode sequence(std::vector<BtNode> children)
{
    return BtNode{NodeKind::Sequence, "Sequence", {}, std::move(children)};
}

BtNode fallback(std::vector<BtNode> children)
{
    return BtNode{NodeKind::Fallback, "Fallback", {}, std::move(children)};
}

BtNode action(std::string name, Params params)
{
    return BtNode{NodeKind::ActionLeaf, std::move(name), std::move(params), {}};
}

BtNode condition(std::string name)
{
    return BtNode{NodeKind::ConditionLeaf, std::move(name), {}, {}};
}

BehaviorTree make_tree(BtNode root, std::string tree_id)
{
    BehaviorTree tree;
    tree.tree_id = std::move(tree_id);
    for_each_leaf(root, [&](const BtNode& leaf) {
        const bool seen = std::any_of(tree.declared_model.begin(), tree.declared_model.end(),
                                      [&](const DeclaredNode& d) { return d.name == leaf.name; });
        if (!seen)
            tree.declared_model.push_back({leaf.kind, leaf.name});
    });
    tree.root_node = std::move(root);
    return tree;
}

// ---------------------------------------------------------------------------
// Whitelist
// ---------------------------------------------------------------------------

namespace {

const std::set<std::string, std::less<>>& reserved_names()
{
    static const std::set<std::string, std::less<>> names = {
        "Sequence", "Fallback",  "root",        "BehaviorTree", "TreeNodesModel",
        "Action",   "Condition", "input_port",  "output_port",  "inout_port"};
    return names;
}

} // namespace

NodeWhitelist::NodeWhitelist(std::vector<LeafSpec> actions, std::vector<LeafSpec> conditions)
    : actions_(std::move(actions)), conditions_(std::move(conditions))
{
    std::set<std::string, std::less<>> seen;
    auto admit = [&](const LeafSpec& spec) {
        if (!xml::is_valid_name(spec.name))
            throw WhitelistError("whitelist entry '" + spec.name + "' is not a valid XML name");
        if (reserved_names().count(spec.name) != 0)
            throw WhitelistError("whitelist entry '" + spec.name + "' uses a reserved name");
        if (!seen.insert(spec.name).second)
            throw WhitelistError("whitelist entry '" + spec.name + "' is listed more than once");
        std::set<std::string> keys;
        for (const auto& p : spec.params)
        {
            if (!xml::is_valid_name(p.key) || !keys.insert(p.key).second)
                throw WhitelistError("bad parameter '" + p.key + "' on '" + spec.name + "'");
            for (const auto& v : p.allowed)
            {
                if (v.empty())
                    throw WhitelistError("empty allowed value for '" + spec.name + "." + p.key + "'");
            }
        }
    };
    for (const auto& a : actions_)
        admit(a);
    for (const auto& c : conditions_)
        admit(c);
}

const LeafSpec* NodeWhitelist::find(std::string_view name) const
{
    for (const auto* list : {&actions_, &conditions_})
    {
        for (const auto& spec : *list)
        {
            if (spec.name == name)
                return &spec;
        }
    }
    return nullptr;
}

std::optional<NodeKind> NodeWhitelist::kind_of(std::string_view name) const
{
    for (const auto& spec : actions_)
    {
        if (spec.name == name)
            return NodeKind::ActionLeaf;
    }
    for (const auto& spec : conditions_)
    {
        if (spec.name == name)
            return NodeKind::ConditionLeaf;
    }
    return std::nullopt;
}

std::vector<std::string> NodeWhitelist::check_params(std::string_view name,
                                                     const Params& params) const
{
    std::vector<std::string> problems;
    const LeafSpec* spec = find(name);
    if (spec == nullptr)
    {
        problems.push_back("unsupported node '" + std::string(name) + "'");
        return problems;
    }
    for (const auto& [key, value] : params)
    {
        const auto it = std::find_if(spec->params.begin(), spec->params.end(),
                                     [&](const ParamSpec& p) { return p.key == key; });
        if (it == spec->params.end())
        {
            problems.push_back(std::string(name) + " does not accept parameter '" + key + "'");
            continue;
        }
        if (value.empty())
        {
            problems.push_back(std::string(name) + "." + key + " must not be empty");
            continue;
        }
        if (!it->free_form() &&
            std::find(it->allowed.begin(), it->allowed.end(), value) == it->allowed.end())
        {
            problems.push_back(std::string(name) + "." + key + " has illegal value '" + value +
                               "'");
        }
    }
    for (const auto& p : spec->params)
    {
        if (params.find(p.key) == params.end())
            problems.push_back(std::string(name) + " is missing required parameter '" + p.key +
                               "'");
    }
    return problems;
}

namespace {

std::string describe(const std::vector<LeafSpec>& specs)
{
    std::string out;
    for (const auto& spec : specs)
    {
        out += "- " + spec.name;
        if (!spec.params.empty())
        {
            out += "(";
            for (std::size_t i = 0; i < spec.params.size(); ++i)
            {
                const auto& p = spec.params[i];
                if (i > 0)
                    out += ", ";
                out += p.key + ": ";
                if (p.free_form())
                {
                    out += "<text>";
                }
                else
                {
                    for (std::size_t k = 0; k < p.allowed.size(); ++k)
                        out += (k > 0 ? "|" : "") + p.allowed[k];
                }
            }
            out += ")";
        }
        out += "\n";
    }
    return out;
}

std::vector<LeafSpec> specs_from_json(const nlohmann::json& list, const char* section)
{
    std::vector<LeafSpec> specs;
    if (!list.is_array())
        throw WhitelistError(std::string("whitelist '") + section + "' must be an array");
    for (const auto& entry : list)
    {
        if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string())
            throw WhitelistError(std::string("every '") + section + "' entry needs a string name");
        LeafSpec spec;
        spec.name = entry["name"].get<std::string>();
        if (entry.contains("params"))
        {
            const auto& params = entry["params"];
            if (!params.is_object())
                throw WhitelistError("params of '" + spec.name + "' must be an object");
            for (const auto& [key, value] : params.items())
            {
                ParamSpec p{key, {}};
                if (value.is_string() && value.get<std::string>() == "free")
                {
                    // free-form
                }
                else if (value.is_array() && !value.empty())
                {
                    for (const auto& v : value)
                    {
                        if (!v.is_string())
                            throw WhitelistError("allowed values must be strings");
                        p.allowed.push_back(v.get<std::string>());
                    }
                }
                else
                {
                    throw WhitelistError("param '" + key + "' of '" + spec.name +
                                         "' must be \"free\" or a non-empty list");
                }
                spec.params.push_back(std::move(p));
            }
        }
        specs.push_back(std::move(spec));
    }
    return specs;
}

nlohmann::json specs_to_json(const std::vector<LeafSpec>& specs)
{
    auto list = nlohmann::json::array();
    for (const auto& spec : specs)
    {
        nlohmann::json entry = {{"name", spec.name}};
        if (!spec.params.empty())
        {
            nlohmann::json params = nlohmann::json::object();
            for (const auto& p : spec.params)
            {
                if (p.free_form())
                    params[p.key] = "free";
                else
                    params[p.key] = p.allowed;
            }
            entry["params"] = std::move(params);
        }
        list.push_back(std::move(entry));
    }
    return list;
}

} // namespace

std::string NodeWhitelist::describe_actions() const { return describe(actions_); }
std::string NodeWhitelist::describe_conditions() const { return describe(conditions_); }

NodeWhitelist NodeWhitelist::from_json(const nlohmann::json& doc)
{
    if (!doc.is_object())
        throw WhitelistError("whitelist document must be a JSON object");
    auto actions = specs_from_json(doc.value("actions", nlohmann::json::array()), "actions");
    auto conditions =
        specs_from_json(doc.value("conditions", nlohmann::json::array()), "conditions");
    return NodeWhitelist(std::move(actions), std::move(conditions));
}

NodeWhitelist NodeWhitelist::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw WhitelistError("cannot open whitelist file '" + path + "'");
    try
    {
        return from_json(nlohmann::json::parse(in));
    }
    catch (const nlohmann::json::exception& e)
    {
        throw WhitelistError("whitelist file '" + path + "': " + e.what());
    }
}

nlohmann::json NodeWhitelist::to_json() const
{
    return {{"actions", specs_to_json(actions_)}, {"conditions", specs_to_json(conditions_)}};
}

const std::vector<std::string>& allowed_colors()
{
    static const std::vector<std::string> colors = {"red", "green", "blue", "yellow", "white"};
    return colors;
}

const NodeWhitelist& default_whitelist()
{
    static const NodeWhitelist whitelist(
        {
            {"Wander", {}},
            {"AvoidObstacle", {}},
            {"ChangeColor", {{"color", allowed_colors()}}},
            {"ApproachTarget", {}},
            {"FormLine", {}},
            {"AlignWithSwarm", {}},
            {"FreezeMovement", {}},
            {"FindGoal", {}},
        },
        {
            {"ObstacleDetected", {}},
            {"TargetDetected", {}},
            {"PathClear", {}},
            {"GoalFound", {}},
            {"TargetReached", {}},
        });
    return whitelist;
}

// ---------------------------------------------------------------------------
// Gate
// ---------------------------------------------------------------------------

std::string_view to_string(FailureCategory category)
{
    switch (category)
    {
    case FailureCategory::NonXml: return "NonXml";
    case FailureCategory::MalformedXml: return "MalformedXml";
    case FailureCategory::IncompleteStructure: return "IncompleteStructure";
    case FailureCategory::UnsupportedNode: return "UnsupportedNode";
    }
    return "?";
}

std::string_view to_string(Outcome outcome)
{
    if (outcome == Outcome::Accepted)
        return "Accepted";
    return to_string(static_cast<FailureCategory>(outcome));
}

std::optional<FailureCategory> failure_category_from_string(std::string_view text)
{
    for (auto c : {FailureCategory::NonXml, FailureCategory::MalformedXml,
                   FailureCategory::IncompleteStructure, FailureCategory::UnsupportedNode})
    {
        if (to_string(c) == text)
            return c;
    }
    return std::nullopt;
}

Outcome ValidationReport::outcome() const
{
    if (accepted() || !category)
        return Outcome::Accepted;
    return static_cast<Outcome>(*category);
}

namespace {

using Diagnostics = std::vector<Diagnostic>;

bool is_ascii_space(char c)
{
    return c == ' ' || c == '\t' || c == '\n' || c == '\r';
}

std::string_view trim(std::string_view text)
{
    if (text.substr(0, 3) == "\xEF\xBB\xBF")
        text.remove_prefix(3);
    while (!text.empty() && is_ascii_space(text.front()))
        text.remove_prefix(1);
    while (!text.empty() && is_ascii_space(text.back()))
        text.remove_suffix(1);
    return text;
}

// Surrounding prose, fences, or no markup at all.
std::optional<Diagnostic> non_xml(std::string_view trimmed)
{
    if (trimmed.empty())
        return Diagnostic{"1:1", "response is empty"};
    if (trimmed.front() != '<')
        return Diagnostic{"1:1", "response does not start with an XML tag (text before the document)"};
    if (trimmed.back() != '>')
        return Diagnostic{"end", "response does not end with an XML tag (text after the document)"};
    for (std::size_t i = 0; i + 1 < trimmed.size(); ++i)
    {
        if (trimmed[i] == '<' && xml::is_name_start(static_cast<unsigned char>(trimmed[i + 1])))
            return std::nullopt;
    }
    return Diagnostic{"1:1", "response contains no XML element"};
}

std::string where(const xml::Location& loc, const std::string& path)
{
    return xml::to_string(loc) + " " + path;
}

std::string child_path(const std::string& parent, const xml::Element& el, std::size_t index)
{
    return parent + "/" + el.name + "[" + std::to_string(index) + "]";
}

bool is_control_tag(std::string_view name)
{
    return name == "Sequence" || name == "Fallback";
}

struct Located
{
    const xml::Element* element;
    std::string path;
};

struct Layout
{
    const xml::Element* tree_element = nullptr;
    const xml::Element* model_element = nullptr;
    std::string tree_path;
    std::string model_path;
    // Every non-control element under the tree, in document order.
    std::vector<Located> leaves;
    // All control elements, in document order.
    std::vector<Located> controls;
    std::map<std::string, NodeKind, std::less<>> declared;
    std::vector<DeclaredNode> declared_list;
};

void walk_tree(const xml::Element& el, const std::string& path, Layout& layout, Diagnostics& out)
{
    if (is_control_tag(el.name))
    {
        layout.controls.push_back({&el, path});
        if (el.text)
            out.push_back({where(*el.text, path), "unexpected text inside <" + el.name + ">"});
        if (el.children.empty())
            out.push_back({where(el.loc, path), "<" + el.name + "> has no children"});
        for (std::size_t i = 0; i < el.children.size(); ++i)
            walk_tree(el.children[i], child_path(path, el.children[i], i), layout, out);
        return;
    }
    layout.leaves.push_back({&el, path});
    if (el.text)
        out.push_back({where(*el.text, path), "unexpected text inside <" + el.name + ">"});
}

void check_model(const xml::Element& model, const std::string& path, Layout& layout,
                 Diagnostics& out)
{
    if (model.text)
        out.push_back({where(*model.text, path), "unexpected text inside <TreeNodesModel>"});
    if (!model.attributes.empty())
    {
        out.push_back({where(model.attributes.front().loc, path),
                       "<TreeNodesModel> does not take attributes"});
    }
    for (std::size_t i = 0; i < model.children.size(); ++i)
    {
        const auto& entry = model.children[i];
        const std::string entry_path = child_path(path, entry, i);
        NodeKind kind = NodeKind::ActionLeaf;
        if (entry.name == "Action")
        {
            kind = NodeKind::ActionLeaf;
        }
        else if (entry.name == "Condition")
        {
            kind = NodeKind::ConditionLeaf;
        }
        else
        {
            out.push_back({where(entry.loc, entry_path),
                           "unexpected <" + entry.name + "> in <TreeNodesModel>"});
            continue;
        }
        const auto* id = entry.find_attribute("ID");
        if (id == nullptr || id->value.empty())
        {
            out.push_back({where(entry.loc, entry_path), "<" + entry.name + "> lacks an ID"});
            continue;
        }
        for (const auto& attr : entry.attributes)
        {
            if (attr.name != "ID")
            {
                out.push_back({where(attr.loc, entry_path),
                               "unexpected attribute '" + attr.name + "' on <" + entry.name + ">"});
            }
        }
        if (entry.text)
            out.push_back({where(*entry.text, entry_path), "unexpected text in declaration"});
        for (const auto& port : entry.children)
        {
            if (port.name != "input_port" && port.name != "output_port" &&
                port.name != "inout_port")
            {
                out.push_back({where(port.loc, entry_path),
                               "unexpected <" + port.name + "> inside a declaration"});
            }
        }
        const auto [it, inserted] = layout.declared.emplace(id->value, kind);
        if (!inserted && it->second != kind)
        {
            out.push_back({where(entry.loc, entry_path),
                           "'" + id->value + "' is declared both as Action and as Condition"});
        }
        layout.declared_list.push_back({kind, id->value});
    }
}

// Schema rules that need no knowledge of the whitelist.
Diagnostics check_structure(const xml::Element& root, Layout& layout)
{
    Diagnostics out;
    const std::string root_path = "/" + root.name;
    if (root.name != "root")
    {
        out.push_back({where(root.loc, root_path),
                       "document root is <" + root.name + ">, expected <root>"});
        return out;
    }
    if (root.text)
        out.push_back({where(*root.text, root_path), "unexpected text inside <root>"});
    for (const auto& attr : root.attributes)
    {
        if (attr.name != "main_tree_to_execute" && attr.name != "BTCPP_format")
            out.push_back({where(attr.loc, root_path), "unexpected attribute '" + attr.name + "' on <root>"});
    }

    std::size_t trees = 0;
    std::size_t models = 0;
    for (std::size_t i = 0; i < root.children.size(); ++i)
    {
        const auto& child = root.children[i];
        const std::string path = child_path(root_path, child, i);
        if (child.name == "BehaviorTree")
        {
            if (trees++ == 0)
            {
                layout.tree_element = &child;
                layout.tree_path = path;
            }
        }
        else if (child.name == "TreeNodesModel")
        {
            if (models++ == 0)
            {
                layout.model_element = &child;
                layout.model_path = path;
            }
        }
        else
        {
            out.push_back({where(child.loc, path), "unexpected <" + child.name + "> under <root>"});
        }
    }
    if (trees != 1)
    {
        out.push_back({where(root.loc, root_path),
                       "expected exactly one <BehaviorTree>, found " + std::to_string(trees)});
    }
    if (models != 1)
    {
        out.push_back({where(root.loc, root_path),
                       "expected exactly one <TreeNodesModel>, found " + std::to_string(models)});
    }
    if (layout.model_element != nullptr)
        check_model(*layout.model_element, layout.model_path, layout, out);

    if (layout.tree_element != nullptr)
    {
        const auto& tree = *layout.tree_element;
        const auto* id = tree.find_attribute("ID");
        for (const auto& attr : tree.attributes)
        {
            if (attr.name != "ID")
                out.push_back({where(attr.loc, layout.tree_path),
                               "unexpected attribute '" + attr.name + "' on <BehaviorTree>"});
        }
        if (id != nullptr && id->value.empty())
            out.push_back({where(id->loc, layout.tree_path), "<BehaviorTree> has an empty ID"});
        if (const auto* main = root.find_attribute("main_tree_to_execute"))
        {
            if (main->value.empty())
                out.push_back({where(main->loc, root_path), "main_tree_to_execute is empty"});
            else if (id != nullptr && !id->value.empty() && id->value != main->value)
                out.push_back({where(main->loc, root_path),
                               "main_tree_to_execute '" + main->value +
                                   "' does not name the BehaviorTree ID '" + id->value + "'"});
        }
        if (tree.text)
            out.push_back({where(*tree.text, layout.tree_path), "unexpected text inside <BehaviorTree>"});
        if (tree.children.size() != 1)
        {
            out.push_back({where(tree.loc, layout.tree_path),
                           "<BehaviorTree> must contain exactly one top-level node, found " +
                               std::to_string(tree.children.size())});
        }
        for (std::size_t i = 0; i < tree.children.size(); ++i)
            walk_tree(tree.children[i], child_path(layout.tree_path, tree.children[i], i), layout,
                      out);
    }

    if (layout.model_element != nullptr)
    {
        for (const auto& leaf : layout.leaves)
        {
            if (layout.declared.find(leaf.element->name) == layout.declared.end())
            {
                out.push_back({where(leaf.element->loc, leaf.path),
                               "<" + leaf.element->name + "> is not declared in <TreeNodesModel>"});
            }
        }
    }
    return out;
}

// Rules that consult the whitelist.
Diagnostics check_nodes(const Layout& layout, const NodeWhitelist& whitelist)
{
    Diagnostics out;
    for (const auto& control : layout.controls)
    {
        if (!control.element->attributes.empty())
        {
            out.push_back({where(control.element->attributes.front().loc, control.path),
                           "<" + control.element->name + "> does not accept attributes"});
        }
    }
    for (const auto& leaf : layout.leaves)
    {
        const auto& el = *leaf.element;
        const std::string at = where(el.loc, leaf.path);
        if (!el.children.empty())
        {
            out.push_back({at, "unsupported control node <" + el.name +
                                   ">: only Sequence and Fallback may have children"});
            continue;
        }
        const auto kind = whitelist.kind_of(el.name);
        if (!kind)
        {
            out.push_back({at, "unsupported node <" + el.name + ">"});
            continue;
        }
        Params params;
        for (const auto& attr : el.attributes)
            params.emplace(attr.name, attr.value);
        for (auto& problem : whitelist.check_params(el.name, params))
            out.push_back({at, std::move(problem)});
    }
    for (const auto& decl : layout.declared_list)
    {
        const auto kind = whitelist.kind_of(decl.name);
        if (!kind)
        {
            out.push_back({layout.model_path, "declared node '" + decl.name + "' is not supported"});
        }
        else if (*kind != decl.kind)
        {
            out.push_back({layout.model_path, "'" + decl.name + "' is declared as " +
                                                  std::string(to_string(decl.kind)) +
                                                  " but is a " + std::string(to_string(*kind))});
        }
    }
    return out;
}

BtNode build_node(const xml::Element& el, const NodeWhitelist& whitelist)
{
    BtNode node;
    node.name = el.name;
    if (el.name == "Sequence" || el.name == "Fallback")
    {
        node.kind = el.name == "Sequence" ? NodeKind::Sequence : NodeKind::Fallback;
        node.children.reserve(el.children.size());
        for (const auto& child : el.children)
            node.children.push_back(build_node(child, whitelist));
        return node;
    }
    node.kind = whitelist.kind_of(el.name).value_or(NodeKind::ActionLeaf);
    for (const auto& attr : el.attributes)
        node.params.emplace(attr.name, attr.value);
    return node;
}

ValidationReport reject(FailureCategory category, Diagnostics diagnostics)
{
    ValidationReport report;
    report.verdict = Verdict::Rejected;
    report.category = category;
    report.diagnostics = std::move(diagnostics);
    return report;
}

void emit_node(std::string& out, const BtNode& node, int depth)
{
    const std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
    if (is_control(node.kind))
    {
        const std::string tag(to_string(node.kind));
        out += indent + "<" + tag + ">\n";
        for (const auto& child : node.children)
            emit_node(out, child, depth + 1);
        out += indent + "</" + tag + ">\n";
        return;
    }
    out += indent + "<" + node.name;
    for (const auto& [key, value] : node.params)
        out += " " + key + "=\"" + xml::escape_attribute(value) + "\"";
    out += "/>\n";
}

std::string emit(const BehaviorTree& tree)
{
    const std::string id = xml::escape_attribute(tree.tree_id);
    std::string out = "<root main_tree_to_execute=\"" + id + "\">\n";
    out += "  <BehaviorTree ID=\"" + id + "\">\n";
    emit_node(out, tree.root_node, 2);
    out += "  </BehaviorTree>\n";
    out += "  <TreeNodesModel>\n";
    for (const auto& decl : tree.declared_model)
    {
        out += "    <" + std::string(to_string(decl.kind)) + " ID=\"" +
               xml::escape_attribute(decl.name) + "\"/>\n";
    }
    out += "  </TreeNodesModel>\n";
    out += "</root>\n";
    return out;
}

void check_serializable(const BtNode& node, const BehaviorTree& tree,
                        const NodeWhitelist& whitelist)
{
    if (is_control(node.kind))
    {
        if (node.name != to_string(node.kind))
            throw SerializeError("control node named '" + node.name + "' has kind " +
                                 std::string(to_string(node.kind)));
        if (node.children.empty())
            throw SerializeError(std::string(to_string(node.kind)) + " node has no children");
        if (!node.params.empty())
            throw SerializeError(std::string(to_string(node.kind)) + " node cannot carry params");
        for (const auto& child : node.children)
            check_serializable(child, tree, whitelist);
        return;
    }
    if (!node.children.empty())
        throw SerializeError("leaf '" + node.name + "' has children");
    const auto kind = whitelist.kind_of(node.name);
    if (!kind)
        throw SerializeError("leaf '" + node.name + "' is not in the whitelist");
    if (*kind != node.kind)
        throw SerializeError("leaf '" + node.name + "' has the wrong kind");
    const auto problems = whitelist.check_params(node.name, node.params);
    if (!problems.empty())
        throw SerializeError(problems.front());
    const bool declared =
        std::any_of(tree.declared_model.begin(), tree.declared_model.end(),
                    [&](const DeclaredNode& d) { return d.name == node.name && d.kind == node.kind; });
    if (!declared)
        throw SerializeError("leaf '" + node.name + "' is not declared in the tree model");
}

} // namespace

ValidationReport parse_document(std::string_view text, const NodeWhitelist& whitelist)
{
    const std::string_view trimmed = trim(text);
    if (auto diag = non_xml(trimmed))
        return reject(FailureCategory::NonXml, {std::move(*diag)});

    const auto parsed = xml::parse(trimmed);
    if (!parsed.ok())
    {
        return reject(FailureCategory::MalformedXml,
                      {{xml::to_string(parsed.error->loc), parsed.error->message}});
    }

    Layout layout;
    if (auto issues = check_structure(*parsed.root, layout); !issues.empty())
        return reject(FailureCategory::IncompleteStructure, std::move(issues));
    if (auto issues = check_nodes(layout, whitelist); !issues.empty())
        return reject(FailureCategory::UnsupportedNode, std::move(issues));

    BehaviorTree tree;
    if (const auto* id = layout.tree_element->find_attribute("ID"))
        tree.tree_id = id->value;
    else if (const auto* main = parsed.root->find_attribute("main_tree_to_execute"))
        tree.tree_id = main->value;
    tree.root_node = build_node(layout.tree_element->children.front(), whitelist);
    tree.declared_model = std::move(layout.declared_list);

    ValidationReport report;
    report.verdict = Verdict::Accepted;
    report.tree = std::move(tree);
    return report;
}

Outcome classify_failure(std::string_view text, const NodeWhitelist& whitelist)
{
    return parse_document(text, whitelist).outcome();
}

std::string serialize_tree(const BehaviorTree& tree, const NodeWhitelist& whitelist)
{
    if (tree.tree_id.empty())
        throw SerializeError("tree id must not be empty");
    for (const auto& decl : tree.declared_model)
    {
        if (is_control(decl.kind))
            throw SerializeError("declared model lists control node '" + decl.name + "'");
        const auto kind = whitelist.kind_of(decl.name);
        if (!kind || *kind != decl.kind)
            throw SerializeError("declared node '" + decl.name + "' is not supported as " +
                                 std::string(to_string(decl.kind)));
    }
    check_serializable(tree.root_node, tree, whitelist);
    return emit(tree);
}

nlohmann::json to_json(const ValidationReport& report)
{
    nlohmann::json diagnostics = nlohmann::json::array();
    for (const auto& d : report.diagnostics)
        diagnostics.push_back({{"location", d.location}, {"message", d.message}});
    return {
        {"verdict", report.accepted() ? "Accepted" : "Rejected"},
        {"category", report.category ? nlohmann::json(std::string(to_string(*report.category)))
                                     : nlohmann::json(nullptr)},
        {"diagnostics", std::move(diagnostics)},
        {"tree_xml", report.tree ? nlohmann::json(emit(*report.tree)) : nlohmann::json(nullptr)},
    };
}

} // namespace swarmcmd::bt
