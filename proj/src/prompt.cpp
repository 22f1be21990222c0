#include "swarmcmd/prompt.hpp"

#include <stdexcept>

namespace swarmcmd::nl {

const std::vector<ShotExample>& example_bank()
{
    using namespace bt;
    static const std::vector<ShotExample> bank = [] {
        std::vector<ShotExample> out;
        out.push_back({"If you detect an obstacle, avoid it and turn green; otherwise keep wandering.",
                       serialize_tree(make_tree(fallback(
                           {sequence({condition("ObstacleDetected"), action("AvoidObstacle"),
                                      action("ChangeColor", {{"color", "green"}})}),
                            action("Wander")})))});
        out.push_back({"When the path is clear, form a line and then turn blue.",
                       serialize_tree(make_tree(sequence(
                           {condition("PathClear"), action("FormLine"),
                            action("ChangeColor", {{"color", "blue"}})})))});
        return out;
    }();
    return bank;
}

std::string PromptSpec::render() const
{
    std::string out;
    out += "SYSTEM: " + system_instruction + "\n";
    out += "INSTRUCTIONS: " + instructions + "\n";
    out += allowed_nodes;
    out += "REQUIRED FORMAT: " + format_skeleton + "\n";
    for (std::size_t i = 0; i < examples.size(); ++i)
    {
        out += "EXAMPLE " + std::to_string(i + 1) + ":\n";
        out += "COMMAND: " + examples[i].instruction + "\n";
        out += "XML:\n" + examples[i].tree_xml;
        if (examples[i].tree_xml.empty() || examples[i].tree_xml.back() != '\n')
            out += "\n";
    }
    out += "USER COMMAND: " + user_command + "\n";
    out += "RESPONSE: XML only.";
    return out;
}

nlohmann::json PromptSpec::to_json() const
{
    nlohmann::json ex = nlohmann::json::array();
    for (const auto& e : examples)
        ex.push_back({{"instruction", e.instruction}, {"tree_xml", e.tree_xml}});
    return {{"system_instruction", system_instruction},
            {"instructions", instructions},
            {"allowed_nodes", allowed_nodes},
            {"format_skeleton", format_skeleton},
            {"shots", shots()},
            {"example_bank", std::string(kExampleBankVersion)},
            {"examples", ex},
            {"user_command", user_command},
            {"rendered", render()}};
}

PromptSpec build_prompt(const std::string& command, int shots, const bt::NodeWhitelist& whitelist)
{
    if (shots < 0 || shots > 2)
        throw std::invalid_argument("shots must be 0, 1 or 2");
    PromptSpec p;
    p.system_instruction = "Generate only a valid XML behavior tree.";
    p.instructions = "Use only the listed actions and conditions.";
    p.allowed_nodes = "ALLOWED ACTIONS:\n" + whitelist.describe_actions() +
                      "ALLOWED CONDITIONS:\n" + whitelist.describe_conditions() +
                      "CONTROL NODES: Sequence, Fallback\n";
    p.format_skeleton = "<root> ... <BehaviorTree> ... </BehaviorTree>\n"
                        "                 <TreeNodesModel> ... </TreeNodesModel> </root>";
    const auto& bank = example_bank();
    p.examples.assign(bank.begin(), bank.begin() + shots);
    p.user_command = command;
    return p;
}

} // namespace swarmcmd::nl
