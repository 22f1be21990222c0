#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "swarmcmd/bt_model.hpp"
#include "swarmcmd/bt_runtime.hpp"
#include "swarmcmd/swarm_sim.hpp"

namespace swarmcmd::sim {

inline constexpr std::uint64_t kDefaultSeed = 42;
inline constexpr int kScenarioTickBudget = 2000;
inline constexpr int kScenarioCount = 5;

class ScenarioError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

struct SpawnBox
{
    Vec2 min;
    Vec2 max;

    bool operator==(const SpawnBox&) const = default;
};

/// Initial world description. Agent positions and headings are drawn from the
/// seeded world RNG inside `spawn`, in ascending id order.
struct ScenarioLayout
{
    double width = 500.0;
    double height = 500.0;
    int agent_count = 10;
    double agent_speed = 2.0;
    Color agent_color = Color::White;
    SpawnBox spawn;
    std::vector<Circle> obstacles;
    std::vector<Circle> targets;
    SimParams params;
    BoundaryMode boundary = BoundaryMode::ClampReflect;

    bool operator==(const ScenarioLayout&) const = default;
};

using SuccessPredicate = std::function<bool(const SwarmWorld&)>;

struct Scenario
{
    int id = 0;
    std::string description;
    ScenarioLayout layout;
    bt::BehaviorTree reference_tree;
    std::string predicate_name;
    SuccessPredicate success_predicate;
};

/// Built-in scenarios 1..5. Throws ScenarioError for any other id.
Scenario load_scenario(int id);

/// Looks up a named success predicate. Throws ScenarioError if unknown.
SuccessPredicate predicate_by_name(const std::string& name);

SwarmWorld make_world(const ScenarioLayout& layout, std::uint64_t seed);

/// Scenario definition file. The reference tree is stored next to it as an
/// XML file named by "reference_tree".
nlohmann::json scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(const nlohmann::json& doc, const std::string& reference_tree_xml);
/// Loads `<dir>/<name>.json` plus the tree file it names.
Scenario load_scenario_file(const std::string& json_path);

struct ScenarioOutcome
{
    bt::RunResult run;
    bool predicate_met = false;
    std::string final_hash;
    SwarmWorld final_world;

    [[nodiscard]] bool success() const
    {
        return run.outcome == bt::RunOutcome::Success && predicate_met;
    }
};

/// Executes `tree` in a fresh world for the scenario layout.
ScenarioOutcome run_scenario(const Scenario& scenario, const bt::BehaviorTree& tree,
                             std::uint64_t seed = kDefaultSeed,
                             int max_ticks = kScenarioTickBudget);

} // namespace swarmcmd::sim
