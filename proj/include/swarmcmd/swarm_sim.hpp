#pragma once

// Deterministic 2D swarm world, its primitive behaviors, and the binding that
// exposes them to behavior-tree leaves.
//
// One tree drives the whole swarm: every primitive acts on all agents. Steering
// requested by primitives during a tick is applied in step(): the heading turns
// toward the requested direction by at most max_turn_per_tick, then non-frozen
// agents move forward. Boundaries clamp the position and reflect the heading.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmcmd/bt_runtime.hpp"

namespace swarmcmd::sim {

struct Vec2
{
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    bool operator==(const Vec2&) const = default;
};

double length(Vec2 v);
double distance(Vec2 a, Vec2 b);
/// Wraps an angle to (-pi, pi].
double wrap_angle(double radians);

enum class Color
{
    Red,
    Green,
    Blue,
    Yellow,
    White,
};

std::string_view to_string(Color color);
std::optional<Color> color_from_string(std::string_view name);

struct Agent
{
    int id = 0;
    Vec2 position;
    double heading = 0.0;
    double speed = 2.0;
    Color color = Color::White;
    bool frozen = false;

    bool operator==(const Agent&) const = default;
};

struct Circle
{
    Vec2 center;
    double radius = 1.0;

    bool operator==(const Circle&) const = default;
};

struct SimParams
{
    double detection_radius = 50.0;
    double avoidance_gain = 1.0;
    double alignment_radius = 60.0;
    double line_spacing = 20.0;
    double wander_turn_stddev = 0.3;
    double max_turn_per_tick = 0.2;

    /// Throws std::invalid_argument unless every field is strictly positive.
    void validate() const;
    bool operator==(const SimParams&) const = default;
};

inline constexpr double kPathConeHalfAngle = 0.5235987755982988; // 30 degrees
inline constexpr double kLineSlotTolerance = 0.5;
inline constexpr double kAlignmentTolerance = 0.1;

enum class BoundaryMode
{
    ClampReflect,
    Wrap,
};

/// Seedable generator with a fixed, portable algorithm: mt19937_64 for raw
/// bits, 53-bit uniforms, Box-Muller (cosine branch, no caching) for normals.
class Rng
{
public:
    static constexpr std::string_view kAlgorithm = "mt19937_64/u53/box-muller";

    explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double gaussian();

    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    [[nodiscard]] std::uint64_t draws() const { return draws_; }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
    std::uint64_t draws_ = 0;
};

/// Facts accumulated across steps, consumed by scenario success predicates.
struct WorldHistory
{
    bool obstacle_detected = false;
    bool obstacle_intersected = false;
    bool target_detected = false;
    bool target_reached = false;
    bool path_clear_observed = false;

    bool operator==(const WorldHistory&) const = default;
};

/// Per-agent motion request for the current tick.
struct Steering
{
    std::optional<double> heading;
    // When set, forward motion slows on arrival: the step is capped by the
    // remaining distance and scaled by the cosine of the heading error.
    std::optional<Vec2> arrive_at;
};

struct SwarmWorld
{
    double width = 500.0;
    double height = 500.0;
    std::vector<Agent> agents;
    std::vector<Circle> obstacles;
    std::vector<Circle> targets;
    std::int64_t tick = 0;
    Rng rng;
    SimParams params;
    BoundaryMode boundary = BoundaryMode::ClampReflect;
    WorldHistory history;
    // Cleared at the start of every step; indexed like `agents`.
    std::vector<Steering> steering;

    [[nodiscard]] Vec2 center() const { return {width / 2.0, height / 2.0}; }
};

/// Advances the world by one tick. Ticks `executor` once when given (its
/// status is returned), applies steering and motion, handles boundaries and
/// increments `tick`.
std::optional<bt::TickStatus> step(SwarmWorld& world, bt::TreeExecutor* executor);

/// FNV-1a 64 over tick and every agent field (doubles by bit pattern).
std::uint64_t state_hash(const SwarmWorld& world);
std::string hash_hex(std::uint64_t hash);

/// {tick, width, height, agents:[{id,x,y,heading,color,frozen}], obstacles, targets}
nlohmann::json snapshot(const SwarmWorld& world);

// ---------------------------------------------------------------------------
// Primitives. All act on the whole swarm.
// ---------------------------------------------------------------------------

bt::TickStatus obstacle_detected(const SwarmWorld& world);
bt::TickStatus target_detected(const SwarmWorld& world);
bt::TickStatus goal_found(const SwarmWorld& world);
bt::TickStatus path_clear(const SwarmWorld& world);
bt::TickStatus target_reached(const SwarmWorld& world);

bt::TickStatus wander(SwarmWorld& world);
bt::TickStatus avoid_obstacle(SwarmWorld& world);
bt::TickStatus approach_target(SwarmWorld& world);
bt::TickStatus find_goal(SwarmWorld& world);
bt::TickStatus form_line(SwarmWorld& world);
bt::TickStatus align_with_swarm(SwarmWorld& world);
/// Throws bt::RuntimeFault for a color outside the allowed set.
bt::TickStatus change_color(SwarmWorld& world, std::string_view color);
bt::TickStatus freeze_movement(SwarmWorld& world);

/// Line slot of every agent, indexed like `world.agents` (slots are ordered
/// by agent id along the horizontal line through the world center).
std::vector<Vec2> line_slots(const SwarmWorld& world);
/// Largest circular difference between any two agent headings.
double max_heading_spread(const SwarmWorld& world);
/// Whether the circle intersects the agent's forward detection cone.
bool cone_intersects(const Agent& agent, const Circle& circle, double cone_length,
                     double half_angle = kPathConeHalfAngle);

/// Maps the default whitelist names onto the primitives above. Unknown names
/// raise bt::RuntimeFault.
class SwarmBinding : public bt::LeafBinding
{
public:
    bt::TickStatus tick_action(std::string_view name, const bt::Params& params,
                               SwarmWorld& world) override;
    bt::TickStatus tick_condition(std::string_view name, const bt::Params& params,
                                  SwarmWorld& world) override;
};

} // namespace swarmcmd::sim
