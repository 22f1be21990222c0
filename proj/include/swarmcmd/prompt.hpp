#pragma once

// Constrained generation prompt: system line, allowed nodes, required XML
// skeleton, 0-2 worked examples, then the user command.

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmcmd/bt_model.hpp"

namespace swarmcmd::nl {

struct ShotExample
{
    std::string instruction;
    std::string tree_xml;

    bool operator==(const ShotExample&) const = default;
};

inline constexpr std::string_view kExampleBankVersion = "bank-v1";

/// Fixed, versioned example bank; examples are used in this order.
const std::vector<ShotExample>& example_bank();

struct PromptSpec
{
    std::string system_instruction;
    std::string instructions;
    std::string allowed_nodes;
    std::string format_skeleton;
    std::vector<ShotExample> examples;
    std::string user_command;

    [[nodiscard]] int shots() const { return static_cast<int>(examples.size()); }
    [[nodiscard]] std::string render() const;
    /// Includes the rendered prompt under "rendered".
    [[nodiscard]] nlohmann::json to_json() const;
    bool operator==(const PromptSpec&) const = default;
};

/// Throws std::invalid_argument unless shots is 0, 1 or 2.
PromptSpec build_prompt(const std::string& command, int shots,
                        const bt::NodeWhitelist& whitelist = bt::default_whitelist());

} // namespace swarmcmd::nl
