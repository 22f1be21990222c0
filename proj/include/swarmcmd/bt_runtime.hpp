#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "swarmcmd/bt_model.hpp"

namespace swarmcmd::sim {
struct SwarmWorld;
}

namespace swarmcmd::bt {

enum class TickStatus
{
    Success,
    Failure,
    Running,
};

std::string_view to_string(TickStatus status);

/// Raised when execution cannot continue: a leaf with no binding, a
/// condition reporting Running, or an illegal parameter reaching a primitive.
class RuntimeFault : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Connects leaf names to behavior implementations.
class LeafBinding
{
public:
    virtual ~LeafBinding() = default;

    virtual TickStatus tick_action(std::string_view name, const Params& params,
                                   sim::SwarmWorld& world) = 0;
    /// Must return Success or Failure.
    virtual TickStatus tick_condition(std::string_view name, const Params& params,
                                      sim::SwarmWorld& world) = 0;
};

/// Ticks one validated tree with memoryful Sequence/Fallback semantics: a
/// control node that returned Running resumes at the same child on the next
/// tick, and forgets that position once it resolves.
class TreeExecutor
{
public:
    TreeExecutor(BehaviorTree tree, std::shared_ptr<LeafBinding> binding);

    TreeExecutor(const TreeExecutor&) = delete;
    TreeExecutor& operator=(const TreeExecutor&) = delete;
    TreeExecutor(TreeExecutor&&) noexcept = default;
    TreeExecutor& operator=(TreeExecutor&&) noexcept = default;

    TickStatus tick(sim::SwarmWorld& world);

    /// Clears every resume index.
    void halt();

    [[nodiscard]] const BehaviorTree& tree() const { return tree_; }
    [[nodiscard]] std::size_t node_count() const { return nodes_.size(); }
    /// Resume index of the node at pre-order position `node`.
    [[nodiscard]] std::optional<std::size_t> resume_index(std::size_t node) const;

private:
    struct Flat
    {
        NodeKind kind = NodeKind::ActionLeaf;
        std::string name;
        Params params;
        std::vector<std::size_t> children;
    };

    std::size_t flatten(const BtNode& node);
    TickStatus tick_node(std::size_t index, sim::SwarmWorld& world);

    BehaviorTree tree_;
    std::shared_ptr<LeafBinding> binding_;
    std::vector<Flat> nodes_;
    std::vector<std::optional<std::size_t>> memory_;
};

enum class RunOutcome
{
    Success,
    Failure,
    Timeout,
};

std::string_view to_string(RunOutcome outcome);

struct RunResult
{
    RunOutcome outcome = RunOutcome::Timeout;
    int ticks_used = 0;

    bool operator==(const RunResult&) const = default;
};

/// Steps the world (one tick per step) until the tree resolves or
/// `max_ticks` steps have been taken. Propagates RuntimeFault.
RunResult run_to_completion(TreeExecutor& executor, sim::SwarmWorld& world, int max_ticks);

} // namespace swarmcmd::bt
