#include <cmath>

#include <gtest/gtest.h>

#include "swarmcmd/scenarios.hpp"
#include "swarmcmd/swarm_sim.hpp"

using namespace swarmcmd;
using namespace swarmcmd::sim;
using bt::TickStatus;

namespace {

SwarmWorld one_agent(Vec2 pos, double heading = 0.0, double speed = 1.0)
{
    SwarmWorld w;
    w.width = 100;
    w.height = 100;
    Agent a;
    a.position = pos;
    a.heading = heading;
    a.speed = speed;
    w.agents.push_back(a);
    return w;
}

} // namespace

TEST(Sim, KinematicsIdentity)
{
    SwarmWorld w = one_agent({0, 0});
    step(w, nullptr);
    EXPECT_NEAR(w.agents[0].position.x, 1.0, 1e-12);
    EXPECT_NEAR(w.agents[0].position.y, 0.0, 1e-12);
    EXPECT_EQ(w.tick, 1);
}

TEST(Sim, FrozenAgentsDoNotMove)
{
    SwarmWorld w = make_world(load_scenario(1).layout, 42);
    EXPECT_EQ(freeze_movement(w), TickStatus::Success);
    const auto before = w.agents;
    bt::TreeExecutor exec(bt::make_tree(bt::action("Wander")), std::make_shared<SwarmBinding>());
    for (int i = 0; i < 20; ++i)
        step(w, &exec);
    for (std::size_t i = 0; i < before.size(); ++i)
        EXPECT_EQ(w.agents[i].position, before[i].position);
    EXPECT_EQ(w.tick, 20);
}

TEST(Sim, ObstacleDetectionGeometry)
{
    SwarmWorld w = one_agent({0, 0});
    w.params.detection_radius = 10;
    w.obstacles.push_back({{5, 0}, 1});
    EXPECT_EQ(obstacle_detected(w), TickStatus::Success);
    w.obstacles[0].center = {20, 0};
    EXPECT_EQ(obstacle_detected(w), TickStatus::Failure);
}

TEST(Sim, PathClear)
{
    SwarmWorld w = one_agent({10, 50});
    EXPECT_EQ(path_clear(w), TickStatus::Success);
    w.obstacles.push_back({{40, 50}, 5}); // dead ahead, within 50
    EXPECT_EQ(path_clear(w), TickStatus::Failure);
    w.agents[0].heading = M_PI; // facing away
    EXPECT_EQ(path_clear(w), TickStatus::Success);
}

TEST(Sim, TargetReachedOnCenter)
{
    SwarmWorld w = one_agent({30, 30});
    EXPECT_EQ(target_reached(w), TickStatus::Failure);
    w.targets.push_back({{30, 30}, 5});
    EXPECT_EQ(target_reached(w), TickStatus::Success);
    EXPECT_EQ(target_detected(w), TickStatus::Success);
}

TEST(Sim, ChangeColorAndFreeze)
{
    SwarmWorld w = make_world(load_scenario(1).layout, 1);
    EXPECT_EQ(change_color(w, "green"), TickStatus::Success);
    for (const auto& a : w.agents)
        EXPECT_EQ(a.color, Color::Green);
    EXPECT_THROW(change_color(w, "purple"), bt::RuntimeFault);
    EXPECT_EQ(freeze_movement(w), TickStatus::Success);
    for (const auto& a : w.agents)
        EXPECT_TRUE(a.frozen);
}

TEST(Sim, AlignmentThreshold)
{
    SwarmWorld w = one_agent({50, 50}, 0.0);
    Agent b = w.agents[0];
    b.id = 1;
    b.position = {55, 50};
    b.heading = 0.05;
    w.agents.push_back(b);
    EXPECT_EQ(align_with_swarm(w), TickStatus::Success);
    w.agents[1].heading = 0.5;
    EXPECT_EQ(align_with_swarm(w), TickStatus::Running);
}

TEST(Sim, LineSlotsFormula)
{
    SwarmWorld w;
    w.width = 100;
    w.height = 100;
    w.params.line_spacing = 10;
    // Ids deliberately out of storage order.
    for (int id : {2, 0, 1})
    {
        Agent a;
        a.id = id;
        w.agents.push_back(a);
    }
    const auto slots = line_slots(w);
    ASSERT_EQ(slots.size(), 3u);
    EXPECT_DOUBLE_EQ(slots[1].x, 40); // id 0
    EXPECT_DOUBLE_EQ(slots[2].x, 50); // id 1
    EXPECT_DOUBLE_EQ(slots[0].x, 60); // id 2
    for (const auto& s : slots)
        EXPECT_DOUBLE_EQ(s.y, 50);
}

TEST(Sim, WanderDrawsFromWorldRng)
{
    SwarmWorld a = make_world(load_scenario(1).layout, 42);
    SwarmWorld b = make_world(load_scenario(1).layout, 42);
    SwarmWorld c = make_world(load_scenario(1).layout, 43);
    bt::TreeExecutor ea(bt::make_tree(bt::action("Wander")), std::make_shared<SwarmBinding>());
    bt::TreeExecutor eb(bt::make_tree(bt::action("Wander")), std::make_shared<SwarmBinding>());
    bt::TreeExecutor ec(bt::make_tree(bt::action("Wander")), std::make_shared<SwarmBinding>());
    for (int i = 0; i < 100; ++i)
    {
        step(a, &ea);
        step(b, &eb);
        step(c, &ec);
    }
    EXPECT_EQ(state_hash(a), state_hash(b));
    EXPECT_NE(state_hash(a), state_hash(c));
    EXPECT_EQ(hash_hex(state_hash(a)), "a36181d526b51445");
}

TEST(Sim, InvariantsUnderRandomTrees)
{
    const char* actions[] = {"Wander", "AvoidObstacle", "ApproachTarget", "FindGoal",
                             "FormLine", "AlignWithSwarm"};
    for (int s = 1; s <= kScenarioCount; ++s)
    {
        for (const char* name : actions)
        {
            const auto sc = load_scenario(s);
            SwarmWorld w = make_world(sc.layout, 7);
            const std::size_t n = w.agents.size();
            bt::TreeExecutor exec(bt::make_tree(bt::action(name)), std::make_shared<SwarmBinding>());
            for (int t = 0; t < 300; ++t)
            {
                const auto before = w.agents;
                const auto tick = w.tick;
                step(w, &exec);
                ASSERT_EQ(w.tick, tick + 1);
                ASSERT_EQ(w.agents.size(), n);
                for (std::size_t i = 0; i < n; ++i)
                {
                    const auto& a = w.agents[i];
                    ASSERT_GE(a.position.x, 0.0);
                    ASSERT_LE(a.position.x, w.width);
                    ASSERT_GE(a.position.y, 0.0);
                    ASSERT_LE(a.position.y, w.height);
                    ASSERT_GE(a.speed, 0.0);
                    // Never further than one speed-step per tick.
                    ASSERT_LE(distance(a.position, before[i].position), a.speed + 1e-9);
                }
            }
        }
    }
}

TEST(Sim, SnapshotShape)
{
    const SwarmWorld w = make_world(load_scenario(2).layout, 42);
    const auto j = snapshot(w);
    EXPECT_EQ(j.at("tick"), 0);
    ASSERT_EQ(j.at("agents").size(), w.agents.size());
    for (const char* k : {"id", "x", "y", "heading", "color", "frozen"})
        EXPECT_TRUE(j.at("agents")[0].contains(k)) << k;
    EXPECT_EQ(j.at("targets").size(), 1u);
}

TEST(Sim, RngIsPortable)
{
    Rng r(42);
    // First raw draw of mt19937_64(42) scaled to 53 bits.
    std::mt19937_64 ref(42);
    EXPECT_DOUBLE_EQ(r.uniform(), static_cast<double>(ref() >> 11) * 0x1.0p-53);
    EXPECT_EQ(Rng::kAlgorithm, "mt19937_64/u53/box-muller");
}

TEST(Sim, ParamsMustBePositive)
{
    SimParams p;
    EXPECT_NO_THROW(p.validate());
    p.line_spacing = 0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
}
