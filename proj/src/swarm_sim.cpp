#include "swarmcmd/swarm_sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace swarmcmd::sim {

using bt::TickStatus;

double length(Vec2 v)
{
    return std::hypot(v.x, v.y);
}

double distance(Vec2 a, Vec2 b)
{
    return length(a - b);
}

double wrap_angle(double radians)
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double a = std::fmod(radians, two_pi);
    if (a <= -std::numbers::pi)
        a += two_pi;
    else if (a > std::numbers::pi)
        a -= two_pi;
    return a;
}

std::string_view to_string(Color color)
{
    switch (color)
    {
    case Color::Red: return "red";
    case Color::Green: return "green";
    case Color::Blue: return "blue";
    case Color::Yellow: return "yellow";
    case Color::White: return "white";
    }
    return "?";
}

std::optional<Color> color_from_string(std::string_view name)
{
    for (auto c : {Color::Red, Color::Green, Color::Blue, Color::Yellow, Color::White})
    {
        if (to_string(c) == name)
            return c;
    }
    return std::nullopt;
}

void SimParams::validate() const
{
    const double fields[] = {detection_radius,   avoidance_gain,     alignment_radius,
                             line_spacing,       wander_turn_stddev, max_turn_per_tick};
    for (double f : fields)
    {
        if (!(f > 0.0) || !std::isfinite(f))
            throw std::invalid_argument("simulation parameters must be strictly positive");
    }
}

double Rng::uniform()
{
    ++draws_;
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::gaussian()
{
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

double surface_distance(Vec2 p, const Circle& c)
{
    return distance(p, c.center) - c.radius;
}

const Circle* nearest_by_center(Vec2 p, const std::vector<Circle>& circles)
{
    const Circle* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& c : circles)
    {
        const double d = distance(p, c.center);
        if (d < best_d)
        {
            best_d = d;
            best = &c;
        }
    }
    return best;
}

const Circle* nearest_by_surface(Vec2 p, const std::vector<Circle>& circles)
{
    const Circle* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& c : circles)
    {
        const double d = surface_distance(p, c);
        if (d < best_d)
        {
            best_d = d;
            best = &c;
        }
    }
    return best;
}

bool any_within(const SwarmWorld& world, const std::vector<Circle>& circles)
{
    for (const auto& agent : world.agents)
    {
        for (const auto& c : circles)
        {
            if (surface_distance(agent.position, c) <= world.params.detection_radius)
                return true;
        }
    }
    return false;
}

double segment_distance(Vec2 p, Vec2 a, Vec2 b)
{
    const Vec2 ab = b - a;
    const double len2 = ab.x * ab.x + ab.y * ab.y;
    double t = len2 > 0.0 ? ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return distance(p, a + ab * t);
}

void steer_to_targets(SwarmWorld& world)
{
    for (std::size_t i = 0; i < world.agents.size(); ++i)
    {
        const auto& agent = world.agents[i];
        if (agent.frozen)
            continue;
        const Circle* target = nearest_by_center(agent.position, world.targets);
        const Vec2 to = target->center - agent.position;
        world.steering[i].heading = std::atan2(to.y, to.x);
        world.steering[i].arrive_at = target->center;
    }
}

void ensure_steering(SwarmWorld& world)
{
    if (world.steering.size() != world.agents.size())
        world.steering.assign(world.agents.size(), Steering{});
}

void apply_boundary(SwarmWorld& world, Agent& agent)
{
    auto& p = agent.position;
    if (world.boundary == BoundaryMode::Wrap)
    {
        p.x = std::fmod(p.x, world.width);
        if (p.x < 0.0)
            p.x += world.width;
        p.y = std::fmod(p.y, world.height);
        if (p.y < 0.0)
            p.y += world.height;
        return;
    }
    if (p.x < 0.0 || p.x > world.width)
    {
        p.x = std::clamp(p.x, 0.0, world.width);
        agent.heading = wrap_angle(std::numbers::pi - agent.heading);
    }
    if (p.y < 0.0 || p.y > world.height)
    {
        p.y = std::clamp(p.y, 0.0, world.height);
        agent.heading = wrap_angle(-agent.heading);
    }
}

void record_history(SwarmWorld& world)
{
    auto& h = world.history;
    h.obstacle_detected = h.obstacle_detected || obstacle_detected(world) == TickStatus::Success;
    h.target_detected = h.target_detected || target_detected(world) == TickStatus::Success;
    h.target_reached = h.target_reached || target_reached(world) == TickStatus::Success;
    h.path_clear_observed = h.path_clear_observed || path_clear(world) == TickStatus::Success;
    for (const auto& agent : world.agents)
    {
        for (const auto& obstacle : world.obstacles)
        {
            if (distance(agent.position, obstacle.center) < obstacle.radius)
                h.obstacle_intersected = true;
        }
    }
}

} // namespace

std::optional<TickStatus> step(SwarmWorld& world, bt::TreeExecutor* executor)
{
    world.steering.assign(world.agents.size(), Steering{});
    if (world.tick == 0)
        record_history(world);

    std::optional<TickStatus> status;
    if (executor != nullptr)
        status = executor->tick(world);

    const double max_turn = world.params.max_turn_per_tick;
    for (std::size_t i = 0; i < world.agents.size(); ++i)
    {
        Agent& agent = world.agents[i];
        if (agent.frozen)
            continue;
        const Steering& steer = world.steering[i];
        if (steer.heading)
        {
            const double delta = std::clamp(wrap_angle(*steer.heading - agent.heading), -max_turn,
                                            max_turn);
            agent.heading = wrap_angle(agent.heading + delta);
        }
        double travel = agent.speed;
        if (steer.arrive_at)
        {
            const Vec2 to = *steer.arrive_at - agent.position;
            const double remaining = length(to);
            const double error = wrap_angle(std::atan2(to.y, to.x) - agent.heading);
            travel = std::min(travel, remaining) * std::max(0.0, std::cos(error));
        }
        agent.position =
            agent.position + Vec2{std::cos(agent.heading), std::sin(agent.heading)} * travel;
        apply_boundary(world, agent);
    }

    record_history(world);
    ++world.tick;
    return status;
}

std::uint64_t state_hash(const SwarmWorld& world)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t value, int bytes) {
        for (int b = 0; b < bytes; ++b)
        {
            h ^= (value >> (8 * b)) & 0xFF;
            h *= 0x100000001b3ULL;
        }
    };
    auto mix_double = [&](double d) { mix(std::bit_cast<std::uint64_t>(d), 8); };
    mix(static_cast<std::uint64_t>(world.tick), 8);
    mix(world.agents.size(), 8);
    for (const auto& a : world.agents)
    {
        mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(a.id)), 8);
        mix_double(a.position.x);
        mix_double(a.position.y);
        mix_double(a.heading);
        mix_double(a.speed);
        mix(static_cast<std::uint64_t>(a.color), 1);
        mix(a.frozen ? 1 : 0, 1);
    }
    return h;
}

std::string hash_hex(std::uint64_t hash)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

nlohmann::json snapshot(const SwarmWorld& world)
{
    auto agents = nlohmann::json::array();
    for (const auto& a : world.agents)
    {
        agents.push_back({{"id", a.id},
                          {"x", a.position.x},
                          {"y", a.position.y},
                          {"heading", a.heading},
                          {"color", to_string(a.color)},
                          {"frozen", a.frozen}});
    }
    auto circles = [](const std::vector<Circle>& list) {
        auto out = nlohmann::json::array();
        for (const auto& c : list)
            out.push_back({{"x", c.center.x}, {"y", c.center.y}, {"radius", c.radius}});
        return out;
    };
    return {{"tick", world.tick},
            {"width", world.width},
            {"height", world.height},
            {"agents", std::move(agents)},
            {"obstacles", circles(world.obstacles)},
            {"targets", circles(world.targets)}};
}

// ---------------------------------------------------------------------------
// Conditions
// ---------------------------------------------------------------------------

bool cone_intersects(const Agent& agent, const Circle& circle, double cone_length,
                     double half_angle)
{
    const Vec2 rel = circle.center - agent.position;
    const double d = length(rel);
    if (d <= circle.radius)
        return true;
    const double bearing = std::abs(wrap_angle(std::atan2(rel.y, rel.x) - agent.heading));
    if (bearing <= half_angle && d <= cone_length)
        return true;
    for (double side : {-half_angle, half_angle})
    {
        const double a = agent.heading + side;
        const Vec2 end = agent.position + Vec2{std::cos(a), std::sin(a)} * cone_length;
        if (segment_distance(circle.center, agent.position, end) <= circle.radius)
            return true;
    }
    return bearing <= half_angle && d - cone_length <= circle.radius;
}

TickStatus obstacle_detected(const SwarmWorld& world)
{
    return any_within(world, world.obstacles) ? TickStatus::Success : TickStatus::Failure;
}

TickStatus target_detected(const SwarmWorld& world)
{
    return any_within(world, world.targets) ? TickStatus::Success : TickStatus::Failure;
}

TickStatus goal_found(const SwarmWorld& world)
{
    return target_detected(world);
}

TickStatus path_clear(const SwarmWorld& world)
{
    for (const auto& agent : world.agents)
    {
        for (const auto& obstacle : world.obstacles)
        {
            if (cone_intersects(agent, obstacle, world.params.detection_radius))
                return TickStatus::Failure;
        }
    }
    return TickStatus::Success;
}

TickStatus target_reached(const SwarmWorld& world)
{
    if (world.targets.empty())
        return TickStatus::Failure;
    for (const auto& agent : world.agents)
    {
        if (agent.frozen)
            continue;
        const Circle* target = nearest_by_center(agent.position, world.targets);
        if (distance(agent.position, target->center) > target->radius)
            return TickStatus::Failure;
    }
    return TickStatus::Success;
}

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

TickStatus wander(SwarmWorld& world)
{
    ensure_steering(world);
    for (std::size_t i = 0; i < world.agents.size(); ++i)
    {
        const auto& agent = world.agents[i];
        if (agent.frozen)
            continue;
        world.steering[i].heading =
            agent.heading + world.params.wander_turn_stddev * world.rng.gaussian();
        world.steering[i].arrive_at.reset();
    }
    return TickStatus::Running;
}

TickStatus avoid_obstacle(SwarmWorld& world)
{
    ensure_steering(world);
    if (obstacle_detected(world) == TickStatus::Failure)
        return TickStatus::Success;
    const double push = 2.0 * world.params.avoidance_gain;
    for (std::size_t i = 0; i < world.agents.size(); ++i)
    {
        const auto& agent = world.agents[i];
        if (agent.frozen)
            continue;
        const Circle* obstacle = nearest_by_surface(agent.position, world.obstacles);
        if (surface_distance(agent.position, *obstacle) > world.params.detection_radius)
            continue;
        Vec2 normal = agent.position - obstacle->center;
        const double n = length(normal);
        normal = n > 0.0 ? normal * (1.0 / n) : Vec2{1.0, 0.0};
        Vec2 v = Vec2{std::cos(agent.heading), std::sin(agent.heading)} + normal * push;
        if (length(v) < 1e-9)
            v = normal;
        world.steering[i].heading = std::atan2(v.y, v.x);
        world.steering[i].arrive_at.reset();
    }
    return TickStatus::Running;
}

TickStatus approach_target(SwarmWorld& world)
{
    ensure_steering(world);
    if (world.targets.empty())
        return TickStatus::Failure;
    const TickStatus reached = target_reached(world);
    steer_to_targets(world);
    return reached == TickStatus::Success ? TickStatus::Success : TickStatus::Running;
}

TickStatus find_goal(SwarmWorld& world)
{
    ensure_steering(world);
    if (world.targets.empty())
        return TickStatus::Failure;
    if (target_reached(world) == TickStatus::Success)
    {
        steer_to_targets(world);
        return TickStatus::Success;
    }
    if (target_detected(world) == TickStatus::Success)
        steer_to_targets(world);
    else
        wander(world);
    return TickStatus::Running;
}

std::vector<Vec2> line_slots(const SwarmWorld& world)
{
    std::vector<std::size_t> order(world.agents.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return world.agents[a].id < world.agents[b].id;
    });
    const Vec2 c = world.center();
    const double n = static_cast<double>(order.size());
    std::vector<Vec2> slots(order.size());
    for (std::size_t rank = 0; rank < order.size(); ++rank)
    {
        const double offset = (static_cast<double>(rank) - (n - 1.0) / 2.0) *
                              world.params.line_spacing;
        slots[order[rank]] = Vec2{c.x + offset, c.y};
    }
    return slots;
}

TickStatus form_line(SwarmWorld& world)
{
    ensure_steering(world);
    const auto slots = line_slots(world);
    bool formed = true;
    for (std::size_t i = 0; i < world.agents.size(); ++i)
    {
        if (distance(world.agents[i].position, slots[i]) > kLineSlotTolerance)
            formed = false;
    }
    // Agents keep station on their slots on the tick the line completes.
    for (std::size_t i = 0; i < world.agents.size(); ++i)
    {
        const auto& agent = world.agents[i];
        if (agent.frozen)
            continue;
        const Vec2 to = slots[i] - agent.position;
        world.steering[i].heading = std::atan2(to.y, to.x);
        world.steering[i].arrive_at = slots[i];
    }
    return formed ? TickStatus::Success : TickStatus::Running;
}

double max_heading_spread(const SwarmWorld& world)
{
    double spread = 0.0;
    for (std::size_t i = 0; i < world.agents.size(); ++i)
    {
        for (std::size_t j = i + 1; j < world.agents.size(); ++j)
        {
            spread = std::max(
                spread, std::abs(wrap_angle(world.agents[i].heading - world.agents[j].heading)));
        }
    }
    return spread;
}

TickStatus align_with_swarm(SwarmWorld& world)
{
    ensure_steering(world);
    if (max_heading_spread(world) < kAlignmentTolerance)
        return TickStatus::Success;
    for (std::size_t i = 0; i < world.agents.size(); ++i)
    {
        const auto& agent = world.agents[i];
        if (agent.frozen)
            continue;
        double s = 0.0;
        double c = 0.0;
        for (const auto& other : world.agents)
        {
            if (distance(agent.position, other.position) <= world.params.alignment_radius)
            {
                s += std::sin(other.heading);
                c += std::cos(other.heading);
            }
        }
        if (std::hypot(s, c) > 1e-12)
            world.steering[i].heading = std::atan2(s, c);
        world.steering[i].arrive_at.reset();
    }
    return TickStatus::Running;
}

TickStatus change_color(SwarmWorld& world, std::string_view color)
{
    const auto parsed = color_from_string(color);
    if (!parsed)
        throw bt::RuntimeFault("ChangeColor: unsupported color '" + std::string(color) + "'");
    for (auto& agent : world.agents)
        agent.color = *parsed;
    return TickStatus::Success;
}

TickStatus freeze_movement(SwarmWorld& world)
{
    for (auto& agent : world.agents)
        agent.frozen = true;
    return TickStatus::Success;
}

// ---------------------------------------------------------------------------
// Binding
// ---------------------------------------------------------------------------

TickStatus SwarmBinding::tick_action(std::string_view name, const bt::Params& params,
                                     SwarmWorld& world)
{
    if (name == "Wander")
        return wander(world);
    if (name == "AvoidObstacle")
        return avoid_obstacle(world);
    if (name == "ApproachTarget")
        return approach_target(world);
    if (name == "FindGoal")
        return find_goal(world);
    if (name == "FormLine")
        return form_line(world);
    if (name == "AlignWithSwarm")
        return align_with_swarm(world);
    if (name == "FreezeMovement")
        return freeze_movement(world);
    if (name == "ChangeColor")
    {
        const auto it = params.find("color");
        if (it == params.end())
            throw bt::RuntimeFault("ChangeColor: missing color parameter");
        return change_color(world, it->second);
    }
    throw bt::RuntimeFault("no behavior bound to action '" + std::string(name) + "'");
}

TickStatus SwarmBinding::tick_condition(std::string_view name, const bt::Params&,
                                        SwarmWorld& world)
{
    if (name == "ObstacleDetected")
        return obstacle_detected(world);
    if (name == "TargetDetected")
        return target_detected(world);
    if (name == "PathClear")
        return path_clear(world);
    if (name == "GoalFound")
        return goal_found(world);
    if (name == "TargetReached")
        return target_reached(world);
    throw bt::RuntimeFault("no behavior bound to condition '" + std::string(name) + "'");
}

} // namespace swarmcmd::sim
