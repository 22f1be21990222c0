#pragma once

// Command pipeline: normalize -> safety -> prompt -> generate -> validate ->
// execute, with one audit trace per command. A Session owns a simulated
// world, at most one running tree, and its trace history.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmcmd/bt_model.hpp"
#include "swarmcmd/bt_runtime.hpp"
#include "swarmcmd/endpoints.hpp"
#include "swarmcmd/prompt.hpp"
#include "swarmcmd/safety.hpp"
#include "swarmcmd/scenarios.hpp"
#include "swarmcmd/swarm_sim.hpp"

namespace swarmcmd::nl {

/// What happens when an accepted tree arrives while another one runs.
enum class ExecMode
{
    Preempt, // halt the running tree (its trace ends Stopped)
    Queue,   // run after the current one finishes
};

struct PipelineConfig
{
    EndpointConfig llm = endpoint_for("mock://reference");
    std::optional<EndpointConfig> translator;
    std::optional<EndpointConfig> safety;
    std::optional<std::string> blocklist_path;
    std::optional<std::string> whitelist_path;
    std::string audit_dir = "audit"; // empty disables the audit file
    ExecMode mode = ExecMode::Preempt;
    int default_shots = 2;
    int max_ticks = sim::kScenarioTickBudget; // per executed tree
    std::size_t trace_ring = 256;

    /// Reads the pipeline keys of a config document. Unknown top-level keys
    /// other than "service" are rejected. Throws std::invalid_argument.
    static PipelineConfig from_json(const nlohmann::json& doc);
    static PipelineConfig load(const std::string& path);
    [[nodiscard]] nlohmann::json to_json() const;

    /// SWARMCOMMAND_LLM_URL, SWARMCOMMAND_TRANSLATOR_URL and
    /// SWARMCOMMAND_SAFETY_URL replace the matching base_url. An empty
    /// translator or safety value removes that endpoint.
    void apply_env_overrides();
};

enum class Modality
{
    Text,
    AudioReference,
};

struct CommandInput
{
    std::string session_id;
    Modality modality = Modality::Text;
    std::optional<std::string> raw_text;
    std::optional<std::string> audio_ref;
    std::optional<std::string> language_hint; // BCP-47
    std::string timestamp;                    // ISO 8601 UTC; filled when empty
    std::optional<int> shots;

    [[nodiscard]] nlohmann::json to_json() const;
};

/// English passes through trimmed; other languages and audio go to the
/// translator. Throws StageError("translation", ...) when that is impossible.
std::string normalize_input(const CommandInput& input, TextEndpoint* translator);

/// Language hint "en" or "en-*", or no hint and pure ASCII text.
bool is_english(const CommandInput& input);

enum class ExecutionStatus
{
    NotExecuted,
    Running,
    Succeeded,
    Failed,
    Stopped,
    Timeout,
};

std::string_view to_string(ExecutionStatus status);

struct ExecutionEvent
{
    ExecutionStatus status = ExecutionStatus::NotExecuted;
    std::int64_t tick = 0;
    std::string note;
};

struct StageFailure
{
    std::string stage;
    std::string message;
    int attempts = 0;
    bool unavailable = false;
};

struct PipelineTrace
{
    std::string trace_id;
    CommandInput command_input;
    std::optional<std::string> normalized_text;
    std::optional<SafetyVerdict> safety_verdict;
    std::optional<PromptSpec> prompt_spec;
    std::optional<std::string> raw_model_output;
    std::optional<bt::ValidationReport> validation_report;
    ExecutionStatus execution_status = ExecutionStatus::NotExecuted;
    std::vector<ExecutionEvent> execution_events;
    std::map<std::string, double> latencies_ms;
    std::optional<StageFailure> stage_error;

    [[nodiscard]] nlohmann::json to_json() const;
    /// True when a required external endpoint was down.
    [[nodiscard]] bool endpoint_unavailable() const;
};

/// Shared, immutable pipeline dependencies built from a config.
struct PipelineServices
{
    PipelineConfig config;
    bt::NodeWhitelist whitelist;
    std::shared_ptr<TextEndpoint> llm;
    std::shared_ptr<TextEndpoint> translator;
    SafetyGate safety;

    static std::shared_ptr<const PipelineServices> create(const PipelineConfig& config);
};

/// Called as each stage completes: (trace_id, stage, payload). Stages are
/// input, translation, safety, prompt, generation, validation, execution.
using StageObserver =
    std::function<void(const std::string&, const std::string&, const nlohmann::json&)>;

class Session
{
public:
    /// Throws sim::ScenarioError for unknown scenarios and std::runtime_error
    /// when the audit directory cannot be created.
    Session(std::string id, int scenario_id, std::uint64_t seed,
            std::shared_ptr<const PipelineServices> services);

    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    [[nodiscard]] const std::string& id() const { return id_; }
    [[nodiscard]] int scenario_id() const { return scenario_.id; }
    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    [[nodiscard]] const sim::Scenario& scenario() const { return scenario_; }
    [[nodiscard]] std::string audit_path() const;

    void set_observer(StageObserver observer);

    /// Runs the whole pipeline for one command. Always returns a trace and
    /// always persists it. Commands on one session are serialized.
    PipelineTrace handle_command(CommandInput input);

    /// Halts the running tree (trace ends Stopped), cancels queued trees,
    /// freezes all agents and advances one motionless tick. Returns false,
    /// changing nothing, when idle.
    bool stop();

    struct StepResult
    {
        bool advanced = false;
        std::optional<PipelineTrace> finished; // trace that reached a terminal status
    };

    /// One simulation tick when a tree is active; no-op otherwise.
    StepResult step();
    [[nodiscard]] bool active() const;
    /// Steps until idle or `max_steps` ticks. Returns ticks taken.
    int run_until_idle(int max_steps);

    [[nodiscard]] nlohmann::json snapshot() const;
    [[nodiscard]] std::int64_t tick() const;
    [[nodiscard]] std::vector<PipelineTrace> traces() const;
    [[nodiscard]] std::optional<PipelineTrace> find_trace(const std::string& trace_id) const;

    /// Runs `fn(const sim::SwarmWorld&)` under the session lock.
    template <class Fn>
    auto with_world(Fn&& fn) const
    {
        std::lock_guard lock(state_mutex_);
        return fn(world_);
    }

private:
    struct Active
    {
        bt::TreeExecutor executor;
        PipelineTrace trace;
        std::int64_t start_tick = 0;
    };

    void emit(const std::string& trace_id, const std::string& stage, const nlohmann::json& payload);
    PipelineTrace finish_rejected(PipelineTrace trace);
    // Callers hold state_mutex_.
    void start_locked(Active active);
    PipelineTrace end_locked(ExecutionStatus status, const std::string& note);
    void record_locked(const PipelineTrace& trace);
    void audit_locked(const PipelineTrace& trace);

    std::string id_;
    sim::Scenario scenario_;
    std::uint64_t seed_;
    std::shared_ptr<const PipelineServices> services_;
    std::shared_ptr<sim::SwarmBinding> binding_;

    std::mutex command_mutex_;
    mutable std::mutex state_mutex_;
    sim::SwarmWorld world_;
    std::optional<Active> active_;
    std::deque<Active> queue_;
    std::deque<PipelineTrace> traces_;
    std::vector<int> frozen_by_stop_;
    std::uint64_t trace_counter_ = 0;

    std::mutex observer_mutex_;
    StageObserver observer_;
};

} // namespace swarmcmd::nl
