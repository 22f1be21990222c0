#include "swarmcmd/bt_runtime.hpp"

#include <utility>

#include "swarmcmd/swarm_sim.hpp"

namespace swarmcmd::bt {

std::string_view to_string(TickStatus status)
{
    switch (status)
    {
    case TickStatus::Success: return "Success";
    case TickStatus::Failure: return "Failure";
    case TickStatus::Running: return "Running";
    }
    return "?";
}

std::string_view to_string(RunOutcome outcome)
{
    switch (outcome)
    {
    case RunOutcome::Success: return "Success";
    case RunOutcome::Failure: return "Failure";
    case RunOutcome::Timeout: return "Timeout";
    }
    return "?";
}

TreeExecutor::TreeExecutor(BehaviorTree tree, std::shared_ptr<LeafBinding> binding)
    : tree_(std::move(tree)), binding_(std::move(binding))
{
    if (!binding_)
        throw std::invalid_argument("TreeExecutor needs a leaf binding");
    flatten(tree_.root_node);
    memory_.assign(nodes_.size(), std::nullopt);
}

std::size_t TreeExecutor::flatten(const BtNode& node)
{
    const std::size_t index = nodes_.size();
    nodes_.push_back(Flat{node.kind, node.name, node.params, {}});
    std::vector<std::size_t> children;
    children.reserve(node.children.size());
    for (const auto& child : node.children)
        children.push_back(flatten(child));
    nodes_[index].children = std::move(children);
    return index;
}

void TreeExecutor::halt()
{
    memory_.assign(nodes_.size(), std::nullopt);
}

std::optional<std::size_t> TreeExecutor::resume_index(std::size_t node) const
{
    return node < memory_.size() ? memory_[node] : std::nullopt;
}

TickStatus TreeExecutor::tick(sim::SwarmWorld& world)
{
    return tick_node(0, world);
}

TickStatus TreeExecutor::tick_node(std::size_t index, sim::SwarmWorld& world)
{
    const Flat& flat = nodes_[index];
    switch (flat.kind)
    {
    case NodeKind::ActionLeaf:
        return binding_->tick_action(flat.name, flat.params, world);

    case NodeKind::ConditionLeaf: {
        const TickStatus status = binding_->tick_condition(flat.name, flat.params, world);
        if (status == TickStatus::Running)
            throw RuntimeFault("condition '" + flat.name + "' returned Running");
        return status;
    }

    case NodeKind::Sequence:
    case NodeKind::Fallback: {
        // Sequence stops on Failure, Fallback stops on Success.
        const TickStatus stop =
            flat.kind == NodeKind::Sequence ? TickStatus::Failure : TickStatus::Success;
        const TickStatus exhausted =
            flat.kind == NodeKind::Sequence ? TickStatus::Success : TickStatus::Failure;
        for (std::size_t i = memory_[index].value_or(0); i < flat.children.size(); ++i)
        {
            const TickStatus status = tick_node(flat.children[i], world);
            if (status == TickStatus::Running)
            {
                memory_[index] = i;
                return TickStatus::Running;
            }
            if (status == stop)
            {
                memory_[index].reset();
                return stop;
            }
        }
        memory_[index].reset();
        return exhausted;
    }
    }
    throw RuntimeFault("unknown node kind");
}

RunResult run_to_completion(TreeExecutor& executor, sim::SwarmWorld& world, int max_ticks)
{
    if (max_ticks < 1)
        throw std::invalid_argument("max_ticks must be at least 1");
    for (int used = 1; used <= max_ticks; ++used)
    {
        const auto status = sim::step(world, &executor);
        if (status == TickStatus::Success)
            return {RunOutcome::Success, used};
        if (status == TickStatus::Failure)
            return {RunOutcome::Failure, used};
    }
    return {RunOutcome::Timeout, max_ticks};
}

} // namespace swarmcmd::bt
