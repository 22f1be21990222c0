#include "swarmcmd/scenarios.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <sstream>

namespace swarmcmd::sim {

namespace {

bool all_agents(const SwarmWorld& world, const std::function<bool(const Agent&)>& fn)
{
    for (const auto& a : world.agents)
    {
        if (!fn(a))
            return false;
    }
    return true;
}

bool inside_a_target(const SwarmWorld& world, const Agent& agent)
{
    for (const auto& t : world.targets)
    {
        if (distance(agent.position, t.center) <= t.radius)
            return true;
    }
    return false;
}

const std::map<std::string, SuccessPredicate>& predicates()
{
    static const std::map<std::string, SuccessPredicate> table = {
        {"obstacle_avoided_green",
         [](const SwarmWorld& w) {
             return w.history.obstacle_detected && !w.history.obstacle_intersected &&
                    all_agents(w, [](const Agent& a) { return a.color == Color::Green; });
         }},
        {"target_approached_red",
         [](const SwarmWorld& w) {
             return w.history.target_detected && all_agents(w, [&](const Agent& a) {
                        return a.color == Color::Red && inside_a_target(w, a);
                    });
         }},
        {"line_formed",
         [](const SwarmWorld& w) {
             if (!w.history.path_clear_observed)
                 return false;
             const auto slots = line_slots(w);
             for (std::size_t i = 0; i < w.agents.size(); ++i)
             {
                 if (distance(w.agents[i].position, slots[i]) > kLineSlotTolerance)
                     return false;
             }
             return true;
         }},
        {"goal_found_red_aligned",
         [](const SwarmWorld& w) {
             return w.history.target_reached &&
                    all_agents(w, [](const Agent& a) { return a.color == Color::Red; }) &&
                    max_heading_spread(w) < kAlignmentTolerance;
         }},
        {"target_reached_frozen",
         [](const SwarmWorld& w) {
             return !w.agents.empty() && w.history.target_detected &&
                    all_agents(w, [&](const Agent& a) { return a.frozen && inside_a_target(w, a); });
         }},
    };
    return table;
}

ScenarioLayout base_layout(SpawnBox spawn)
{
    ScenarioLayout layout;
    layout.spawn = spawn;
    return layout;
}

using namespace swarmcmd::bt;

Scenario builtin(int id)
{
    Scenario s;
    s.id = id;
    switch (id)
    {
    case 1:
        s.description = "Detect an obstacle, avoid it, and change color to green.";
        s.layout = base_layout({{160.0, 220.0}, {190.0, 280.0}});
        s.layout.obstacles = {{{250.0, 250.0}, 30.0}};
        s.reference_tree = make_tree(fallback({
            sequence({condition("ObstacleDetected"), action("AvoidObstacle"),
                      action("ChangeColor", {{"color", "green"}})}),
            action("Wander"),
        }));
        s.predicate_name = "obstacle_avoided_green";
        break;
    case 2:
        s.description = "Wander until a target is detected, approach it, and signal achievement "
                        "by changing color to red.";
        s.layout = base_layout({{120.0, 120.0}, {170.0, 170.0}});
        s.layout.targets = {{{330.0, 330.0}, 20.0}};
        s.reference_tree = make_tree(sequence({
            fallback({condition("TargetDetected"), action("FindGoal")}),
            action("ApproachTarget"),
            action("ChangeColor", {{"color", "red"}}),
        }));
        s.predicate_name = "target_approached_red";
        break;
    case 3:
        s.description = "Check whether the path is clear and form a line at the center.";
        s.layout = base_layout({{180.0, 100.0}, {320.0, 160.0}});
        s.layout.obstacles = {{{60.0, 440.0}, 20.0}};
        s.reference_tree = make_tree(sequence({condition("PathClear"), action("FormLine")}));
        s.predicate_name = "line_formed";
        break;
    case 4:
        s.description = "Find the goal, signal success by changing color to red, and align "
                        "movement with other swarm agents.";
        s.layout = base_layout({{220.0, 120.0}, {280.0, 160.0}});
        s.layout.targets = {{{250.0, 400.0}, 25.0}};
        s.reference_tree = make_tree(sequence({
            action("FindGoal"),
            action("ChangeColor", {{"color", "red"}}),
            action("AlignWithSwarm"),
        }));
        s.predicate_name = "goal_found_red_aligned";
        break;
    case 5:
        s.description = "Detect the target and freeze movement after reaching it.";
        s.layout = base_layout({{230.0, 230.0}, {260.0, 260.0}});
        s.layout.targets = {{{300.0, 300.0}, 25.0}};
        s.reference_tree = make_tree(sequence({
            condition("TargetDetected"),
            action("ApproachTarget"),
            action("FreezeMovement"),
        }));
        s.predicate_name = "target_reached_frozen";
        break;
    default:
        throw ScenarioError("unknown scenario id " + std::to_string(id) + " (expected 1.." +
                            std::to_string(kScenarioCount) + ")");
    }
    s.success_predicate = predicate_by_name(s.predicate_name);
    return s;
}

nlohmann::json circles_to_json(const std::vector<Circle>& circles)
{
    auto out = nlohmann::json::array();
    for (const auto& c : circles)
        out.push_back({{"x", c.center.x}, {"y", c.center.y}, {"radius", c.radius}});
    return out;
}

std::vector<Circle> circles_from_json(const nlohmann::json& list)
{
    std::vector<Circle> out;
    for (const auto& c : list)
        out.push_back({{c.at("x").get<double>(), c.at("y").get<double>()},
                       c.at("radius").get<double>()});
    return out;
}

} // namespace

SuccessPredicate predicate_by_name(const std::string& name)
{
    const auto& table = predicates();
    const auto it = table.find(name);
    if (it == table.end())
        throw ScenarioError("unknown success predicate '" + name + "'");
    return it->second;
}

Scenario load_scenario(int id)
{
    return builtin(id);
}

SwarmWorld make_world(const ScenarioLayout& layout, std::uint64_t seed)
{
    layout.params.validate();
    if (!(layout.width > 0.0) || !(layout.height > 0.0) || layout.agent_count < 0 ||
        layout.agent_speed < 0.0)
        throw ScenarioError("invalid world layout");
    SwarmWorld world;
    world.width = layout.width;
    world.height = layout.height;
    world.obstacles = layout.obstacles;
    world.targets = layout.targets;
    world.params = layout.params;
    world.boundary = layout.boundary;
    world.rng = Rng(seed);
    for (int id = 0; id < layout.agent_count; ++id)
    {
        Agent agent;
        agent.id = id;
        agent.position.x = world.rng.uniform(layout.spawn.min.x, layout.spawn.max.x);
        agent.position.y = world.rng.uniform(layout.spawn.min.y, layout.spawn.max.y);
        agent.heading = wrap_angle(world.rng.uniform(-std::numbers::pi, std::numbers::pi));
        agent.speed = layout.agent_speed;
        agent.color = layout.agent_color;
        world.agents.push_back(agent);
    }
    return world;
}

nlohmann::json scenario_to_json(const Scenario& s)
{
    const auto& l = s.layout;
    return {
        {"id", s.id},
        {"description", s.description},
        {"world", {{"width", l.width}, {"height", l.height},
                   {"boundary", l.boundary == BoundaryMode::Wrap ? "wrap" : "clamp_reflect"}}},
        {"agents",
         {{"count", l.agent_count},
          {"speed", l.agent_speed},
          {"color", to_string(l.agent_color)},
          {"spawn",
           {{"x_min", l.spawn.min.x},
            {"x_max", l.spawn.max.x},
            {"y_min", l.spawn.min.y},
            {"y_max", l.spawn.max.y}}}}},
        {"obstacles", circles_to_json(l.obstacles)},
        {"targets", circles_to_json(l.targets)},
        {"params",
         {{"detection_radius", l.params.detection_radius},
          {"avoidance_gain", l.params.avoidance_gain},
          {"alignment_radius", l.params.alignment_radius},
          {"line_spacing", l.params.line_spacing},
          {"wander_turn_stddev", l.params.wander_turn_stddev},
          {"max_turn_per_tick", l.params.max_turn_per_tick}}},
        {"predicate", s.predicate_name},
        {"reference_tree", "scenario_" + std::to_string(s.id) + ".xml"},
    };
}

Scenario scenario_from_json(const nlohmann::json& doc, const std::string& reference_tree_xml)
{
    try
    {
        Scenario s;
        s.id = doc.at("id").get<int>();
        s.description = doc.at("description").get<std::string>();
        auto& l = s.layout;
        const auto& world = doc.at("world");
        l.width = world.at("width").get<double>();
        l.height = world.at("height").get<double>();
        const std::string boundary = world.value("boundary", "clamp_reflect");
        if (boundary != "wrap" && boundary != "clamp_reflect")
            throw ScenarioError("unknown boundary mode '" + boundary + "'");
        l.boundary = boundary == "wrap" ? BoundaryMode::Wrap : BoundaryMode::ClampReflect;
        const auto& agents = doc.at("agents");
        l.agent_count = agents.at("count").get<int>();
        l.agent_speed = agents.at("speed").get<double>();
        const auto color = color_from_string(agents.value("color", "white"));
        if (!color)
            throw ScenarioError("unknown agent color");
        l.agent_color = *color;
        const auto& spawn = agents.at("spawn");
        l.spawn = {{spawn.at("x_min").get<double>(), spawn.at("y_min").get<double>()},
                   {spawn.at("x_max").get<double>(), spawn.at("y_max").get<double>()}};
        l.obstacles = circles_from_json(doc.value("obstacles", nlohmann::json::array()));
        l.targets = circles_from_json(doc.value("targets", nlohmann::json::array()));
        if (doc.contains("params"))
        {
            const auto& p = doc["params"];
            l.params.detection_radius = p.value("detection_radius", l.params.detection_radius);
            l.params.avoidance_gain = p.value("avoidance_gain", l.params.avoidance_gain);
            l.params.alignment_radius = p.value("alignment_radius", l.params.alignment_radius);
            l.params.line_spacing = p.value("line_spacing", l.params.line_spacing);
            l.params.wander_turn_stddev =
                p.value("wander_turn_stddev", l.params.wander_turn_stddev);
            l.params.max_turn_per_tick = p.value("max_turn_per_tick", l.params.max_turn_per_tick);
        }
        l.params.validate();
        s.predicate_name = doc.at("predicate").get<std::string>();
        s.success_predicate = predicate_by_name(s.predicate_name);
        auto report = bt::parse_document(reference_tree_xml);
        if (!report.accepted())
        {
            throw ScenarioError("reference tree of scenario " + std::to_string(s.id) +
                                " is rejected: " + report.diagnostics.front().message);
        }
        s.reference_tree = std::move(*report.tree);
        return s;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ScenarioError(std::string("invalid scenario definition: ") + e.what());
    }
    catch (const std::invalid_argument& e)
    {
        throw ScenarioError(std::string("invalid scenario definition: ") + e.what());
    }
}

Scenario load_scenario_file(const std::string& json_path)
{
    std::ifstream in(json_path);
    if (!in)
        throw ScenarioError("cannot open scenario file '" + json_path + "'");
    nlohmann::json doc;
    try
    {
        doc = nlohmann::json::parse(in);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ScenarioError("scenario file '" + json_path + "': " + e.what());
    }
    const auto tree_path = std::filesystem::path(json_path).parent_path() /
                           doc.value("reference_tree", std::string());
    std::ifstream tree_in(tree_path);
    if (!tree_in)
        throw ScenarioError("cannot open reference tree '" + tree_path.string() + "'");
    std::stringstream xml;
    xml << tree_in.rdbuf();
    return scenario_from_json(doc, xml.str());
}

ScenarioOutcome run_scenario(const Scenario& scenario, const bt::BehaviorTree& tree,
                             std::uint64_t seed, int max_ticks)
{
    ScenarioOutcome outcome;
    outcome.final_world = make_world(scenario.layout, seed);
    bt::TreeExecutor executor(tree, std::make_shared<SwarmBinding>());
    outcome.run = bt::run_to_completion(executor, outcome.final_world, max_ticks);
    outcome.predicate_met = scenario.success_predicate(outcome.final_world);
    outcome.final_hash = hash_hex(state_hash(outcome.final_world));
    return outcome;
}

} // namespace swarmcmd::sim
