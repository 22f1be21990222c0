#include "swarmcmd/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>

namespace swarmcmd::nl {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

PipelineConfig PipelineConfig::from_json(const nlohmann::json& doc)
{
    if (!doc.is_object())
        throw std::invalid_argument("config must be a JSON object");
    static const std::set<std::string> known{
        "llm",      "translator",    "safety",    "blocklist_path", "whitelist_path", "audit_dir",
        "mode",     "default_shots", "max_ticks", "trace_ring",     "service"};
    for (const auto& [key, _] : doc.items())
    {
        if (known.count(key) == 0)
            throw std::invalid_argument("unknown config key '" + key + "'");
    }

    PipelineConfig c;
    auto endpoint = [&](const char* key) -> std::optional<EndpointConfig> {
        const auto it = doc.find(key);
        if (it == doc.end() || it->is_null())
            return std::nullopt;
        return EndpointConfig::from_json(*it);
    };
    if (auto llm = endpoint("llm"))
        c.llm = *llm;
    c.translator = endpoint("translator");
    c.safety = endpoint("safety");
    try
    {
        auto opt_string = [&](const char* key) -> std::optional<std::string> {
            const auto it = doc.find(key);
            if (it == doc.end() || it->is_null())
                return std::nullopt;
            return it->get<std::string>();
        };
        c.blocklist_path = opt_string("blocklist_path");
        c.whitelist_path = opt_string("whitelist_path");
        c.audit_dir = doc.value("audit_dir", c.audit_dir);
        const std::string mode = doc.value("mode", std::string("preempt"));
        if (mode == "preempt")
            c.mode = ExecMode::Preempt;
        else if (mode == "queue")
            c.mode = ExecMode::Queue;
        else
            throw std::invalid_argument("mode must be \"preempt\" or \"queue\"");
        c.default_shots = doc.value("default_shots", c.default_shots);
        c.max_ticks = doc.value("max_ticks", c.max_ticks);
        c.trace_ring = doc.value("trace_ring", c.trace_ring);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    if (c.default_shots < 0 || c.default_shots > 2)
        throw std::invalid_argument("default_shots must be 0, 1 or 2");
    if (c.max_ticks < 1)
        throw std::invalid_argument("max_ticks must be at least 1");
    if (c.trace_ring < 1)
        throw std::invalid_argument("trace_ring must be at least 1");
    return c;
}

PipelineConfig PipelineConfig::load(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::invalid_argument("cannot open config '" + path + "'");
    try
    {
        return from_json(nlohmann::json::parse(in));
    }
    catch (const nlohmann::json::parse_error& e)
    {
        throw std::invalid_argument("config '" + path + "': " + e.what());
    }
}

nlohmann::json PipelineConfig::to_json() const
{
    auto opt = [](const auto& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
    return {{"llm", llm.to_json()},
            {"translator", translator ? translator->to_json() : nlohmann::json()},
            {"safety", safety ? safety->to_json() : nlohmann::json()},
            {"blocklist_path", opt(blocklist_path)},
            {"whitelist_path", opt(whitelist_path)},
            {"audit_dir", audit_dir},
            {"mode", mode == ExecMode::Preempt ? "preempt" : "queue"},
            {"default_shots", default_shots},
            {"max_ticks", max_ticks},
            {"trace_ring", trace_ring}};
}

void PipelineConfig::apply_env_overrides()
{
    if (const char* v = std::getenv("SWARMCOMMAND_LLM_URL"); v != nullptr && *v != '\0')
        llm.base_url = v;
    auto optional_endpoint = [](const char* name, std::optional<EndpointConfig>& target) {
        const char* v = std::getenv(name);
        if (v == nullptr)
            return;
        if (*v == '\0')
        {
            target.reset();
            return;
        }
        if (!target)
            target = EndpointConfig{};
        target->base_url = v;
    };
    optional_endpoint("SWARMCOMMAND_TRANSLATOR_URL", translator);
    optional_endpoint("SWARMCOMMAND_SAFETY_URL", safety);
}

// ---------------------------------------------------------------------------
// Input
// ---------------------------------------------------------------------------

namespace {

std::string now_iso8601()
{
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r\n\f\v");
    if (first == std::string::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r\n\f\v");
    return s.substr(first, last - first + 1);
}

double elapsed_ms(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
}

nlohmann::json opt_json(const std::optional<std::string>& v)
{
    return v ? nlohmann::json(*v) : nlohmann::json();
}

} // namespace

nlohmann::json CommandInput::to_json() const
{
    return {{"session_id", session_id},
            {"modality", modality == Modality::Text ? "text" : "audio-reference"},
            {"raw_text", opt_json(raw_text)},
            {"audio_ref", opt_json(audio_ref)},
            {"language_hint", opt_json(language_hint)},
            {"timestamp", timestamp},
            {"shots", shots ? nlohmann::json(*shots) : nlohmann::json()}};
}

bool is_english(const CommandInput& input)
{
    if (input.modality != Modality::Text)
        return false;
    if (input.language_hint)
    {
        std::string hint;
        for (char c : *input.language_hint)
            hint.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        return hint == "en" || hint.rfind("en-", 0) == 0 || hint.rfind("en_", 0) == 0;
    }
    for (char c : input.raw_text.value_or(""))
    {
        if (static_cast<unsigned char>(c) >= 0x80)
            return false;
    }
    return true;
}

std::string normalize_input(const CommandInput& input, TextEndpoint* translator)
{
    if (input.modality == Modality::Text && !input.raw_text)
        throw StageError("translation", "text command without raw_text", 0, false);
    if (input.modality == Modality::AudioReference && !input.audio_ref)
        throw StageError("translation", "audio command without audio_ref", 0, false);

    if (is_english(input))
    {
        std::string text = trim(*input.raw_text);
        if (text.empty())
            throw StageError("translation", "empty command", 0, false);
        return text;
    }
    if (translator == nullptr)
        throw StageError("translation", "translation unavailable", 0, true);

    EndpointRequest request;
    request.extra["target_language"] = "en";
    if (input.language_hint)
        request.extra["source_language"] = *input.language_hint;
    if (input.modality == Modality::AudioReference)
    {
        request.extra["modality"] = "audio";
        request.text = *input.audio_ref;
    }
    else
    {
        request.extra["modality"] = "text";
        request.text = *input.raw_text;
    }
    std::string out = trim(translator->complete(request, "translation").text);
    if (out.empty())
        throw StageError("translation", "translator returned empty text", 1, false);
    return out;
}

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

std::string_view to_string(ExecutionStatus status)
{
    switch (status)
    {
    case ExecutionStatus::NotExecuted: return "NotExecuted";
    case ExecutionStatus::Running: return "Running";
    case ExecutionStatus::Succeeded: return "Succeeded";
    case ExecutionStatus::Failed: return "Failed";
    case ExecutionStatus::Stopped: return "Stopped";
    case ExecutionStatus::Timeout: return "Timeout";
    }
    return "?";
}

nlohmann::json PipelineTrace::to_json() const
{
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : execution_events)
        events.push_back({{"status", to_string(e.status)}, {"tick", e.tick}, {"note", e.note}});
    nlohmann::json doc{
        {"trace_id", trace_id},
        {"command_input", command_input.to_json()},
        {"normalized_text", opt_json(normalized_text)},
        {"safety_verdict", safety_verdict ? safety_verdict->to_json() : nlohmann::json()},
        {"prompt_spec", prompt_spec ? prompt_spec->to_json() : nlohmann::json()},
        {"raw_model_output", opt_json(raw_model_output)},
        {"validation_report", validation_report ? bt::to_json(*validation_report) : nlohmann::json()},
        {"execution_status", to_string(execution_status)},
        {"execution_events", events},
        {"latencies_ms", latencies_ms},
    };
    if (stage_error)
        doc["stage_error"] = {{"stage", stage_error->stage},
                              {"message", stage_error->message},
                              {"attempts", stage_error->attempts},
                              {"unavailable", stage_error->unavailable}};
    else
        doc["stage_error"] = nullptr;
    return doc;
}

bool PipelineTrace::endpoint_unavailable() const
{
    return stage_error && stage_error->unavailable;
}

std::shared_ptr<const PipelineServices> PipelineServices::create(const PipelineConfig& config)
{
    auto whitelist = config.whitelist_path ? bt::NodeWhitelist::load(*config.whitelist_path)
                                           : bt::default_whitelist();
    auto blocklist = config.blocklist_path ? Blocklist::load(*config.blocklist_path)
                                           : default_blocklist();
    auto classifier = config.safety ? make_endpoint(*config.safety) : nullptr;
    return std::make_shared<const PipelineServices>(PipelineServices{
        config, std::move(whitelist), make_endpoint(config.llm),
        config.translator ? make_endpoint(*config.translator) : nullptr,
        SafetyGate(std::move(blocklist), std::move(classifier))});
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

Session::Session(std::string id, int scenario_id, std::uint64_t seed,
                 std::shared_ptr<const PipelineServices> services)
    : id_(std::move(id)), scenario_(sim::load_scenario(scenario_id)), seed_(seed),
      services_(std::move(services)), binding_(std::make_shared<sim::SwarmBinding>())
{
    if (!services_)
        throw std::invalid_argument("session needs pipeline services");
    world_ = sim::make_world(scenario_.layout, seed_);
    if (!services_->config.audit_dir.empty())
    {
        std::error_code ec;
        std::filesystem::create_directories(services_->config.audit_dir, ec);
        if (ec)
            throw std::runtime_error("cannot create audit directory '" +
                                     services_->config.audit_dir + "': " + ec.message());
    }
}

std::string Session::audit_path() const
{
    if (services_->config.audit_dir.empty())
        return {};
    return (std::filesystem::path(services_->config.audit_dir) / (id_ + ".jsonl")).string();
}

void Session::set_observer(StageObserver observer)
{
    std::lock_guard lock(observer_mutex_);
    observer_ = std::move(observer);
}

void Session::emit(const std::string& trace_id, const std::string& stage,
                   const nlohmann::json& payload)
{
    StageObserver observer;
    {
        std::lock_guard lock(observer_mutex_);
        observer = observer_;
    }
    if (observer)
        observer(trace_id, stage, payload);
}

void Session::audit_locked(const PipelineTrace& trace)
{
    const std::string path = audit_path();
    if (path.empty())
        return;
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << trace.to_json().dump() << "\n";
}

void Session::record_locked(const PipelineTrace& trace)
{
    for (auto& t : traces_)
    {
        if (t.trace_id == trace.trace_id)
        {
            t = trace;
            audit_locked(trace);
            return;
        }
    }
    traces_.push_back(trace);
    while (traces_.size() > services_->config.trace_ring)
        traces_.pop_front();
    audit_locked(trace);
}

PipelineTrace Session::finish_rejected(PipelineTrace trace)
{
    {
        std::lock_guard lock(state_mutex_);
        trace.execution_status = ExecutionStatus::NotExecuted;
        trace.execution_events.push_back({ExecutionStatus::NotExecuted, world_.tick, "not executed"});
        record_locked(trace);
    }
    emit(trace.trace_id, "execution",
         {{"execution_status", "NotExecuted"}, {"tick", trace.execution_events.back().tick}});
    return trace;
}

void Session::start_locked(Active active)
{
    // A stop freezes the swarm; the next accepted tree releases those agents.
    for (int id : frozen_by_stop_)
    {
        for (auto& a : world_.agents)
        {
            if (a.id == id)
                a.frozen = false;
        }
    }
    frozen_by_stop_.clear();
    active.start_tick = world_.tick;
    active.trace.execution_status = ExecutionStatus::Running;
    active.trace.execution_events.push_back({ExecutionStatus::Running, world_.tick, "installed"});
    record_locked(active.trace);
    active_.emplace(std::move(active));
}

PipelineTrace Session::end_locked(ExecutionStatus status, const std::string& note)
{
    active_->executor.halt();
    PipelineTrace trace = std::move(active_->trace);
    active_.reset();
    trace.execution_status = status;
    trace.execution_events.push_back({status, world_.tick, note});
    record_locked(trace);
    return trace;
}

PipelineTrace Session::handle_command(CommandInput input)
{
    std::lock_guard command_lock(command_mutex_);
    const auto& config = services_->config;

    PipelineTrace trace;
    {
        std::lock_guard lock(state_mutex_);
        char buf[32];
        std::snprintf(buf, sizeof buf, "-t%04llu", static_cast<unsigned long long>(++trace_counter_));
        trace.trace_id = id_ + buf;
    }
    input.session_id = id_;
    if (input.timestamp.empty())
        input.timestamp = now_iso8601();
    trace.command_input = input;
    emit(trace.trace_id, "input", input.to_json());

    auto fail_stage = [&](const StageError& e) {
        trace.stage_error = StageFailure{e.stage(), e.what(), e.attempts(), e.unavailable()};
        emit(trace.trace_id, e.stage(), {{"error", e.to_json()}});
    };

    // Translation / normalization.
    auto t0 = std::chrono::steady_clock::now();
    try
    {
        trace.normalized_text = normalize_input(input, services_->translator.get());
    }
    catch (const StageError& e)
    {
        trace.latencies_ms["translation"] = elapsed_ms(t0);
        fail_stage(e);
        return finish_rejected(std::move(trace));
    }
    trace.latencies_ms["translation"] = elapsed_ms(t0);
    emit(trace.trace_id, "translation", {{"normalized_text", *trace.normalized_text}});

    // Safety.
    t0 = std::chrono::steady_clock::now();
    std::optional<StageError> safety_error;
    trace.safety_verdict = services_->safety.check(*trace.normalized_text, &safety_error);
    trace.latencies_ms["safety"] = elapsed_ms(t0);
    if (safety_error)
        trace.stage_error = StageFailure{safety_error->stage(), safety_error->what(),
                                         safety_error->attempts(), safety_error->unavailable()};
    emit(trace.trace_id, "safety", trace.safety_verdict->to_json());
    if (!trace.safety_verdict->allowed())
        return finish_rejected(std::move(trace));

    // Prompt.
    t0 = std::chrono::steady_clock::now();
    try
    {
        trace.prompt_spec = build_prompt(*trace.normalized_text, input.shots.value_or(config.default_shots),
                                         services_->whitelist);
    }
    catch (const std::invalid_argument& e)
    {
        trace.latencies_ms["prompt"] = elapsed_ms(t0);
        fail_stage(StageError("prompt", e.what(), 0, false));
        return finish_rejected(std::move(trace));
    }
    trace.latencies_ms["prompt"] = elapsed_ms(t0);
    emit(trace.trace_id, "prompt", trace.prompt_spec->to_json());

    // Generation.
    t0 = std::chrono::steady_clock::now();
    try
    {
        EndpointRequest request;
        request.messages.push_back({"user", trace.prompt_spec->render()});
        const Completion c = services_->llm->complete(request, "generation");
        trace.raw_model_output = c.text;
        trace.latencies_ms["generation"] = elapsed_ms(t0);
        emit(trace.trace_id, "generation",
             {{"raw_model_output", c.text}, {"attempts", c.attempts}});
    }
    catch (const StageError& e)
    {
        trace.latencies_ms["generation"] = elapsed_ms(t0);
        fail_stage(e);
        return finish_rejected(std::move(trace));
    }

    // Validation.
    t0 = std::chrono::steady_clock::now();
    trace.validation_report = bt::parse_document(*trace.raw_model_output, services_->whitelist);
    trace.latencies_ms["validation"] = elapsed_ms(t0);
    emit(trace.trace_id, "validation", bt::to_json(*trace.validation_report));
    if (!trace.validation_report->accepted())
        return finish_rejected(std::move(trace));

    // Execution.
    PipelineTrace result;
    std::optional<PipelineTrace> preempted;
    {
        std::lock_guard lock(state_mutex_);
        Active next{bt::TreeExecutor(*trace.validation_report->tree, binding_), std::move(trace), 0};
        if (active_ && config.mode == ExecMode::Queue)
        {
            next.trace.execution_events.push_back({ExecutionStatus::NotExecuted, world_.tick, "queued"});
            record_locked(next.trace);
            result = next.trace;
            queue_.push_back(std::move(next));
        }
        else
        {
            if (active_)
            {
                preempted = end_locked(ExecutionStatus::Stopped, "preempted by " + next.trace.trace_id);
            }
            start_locked(std::move(next));
            result = active_->trace;
        }
    }
    if (preempted)
        emit(preempted->trace_id, "execution",
             {{"execution_status", "Stopped"}, {"note", "preempted"}});
    emit(result.trace_id, "execution",
         {{"execution_status", to_string(result.execution_status)},
          {"tick", result.execution_events.back().tick},
          {"note", result.execution_events.back().note}});
    return result;
}

bool Session::stop()
{
    std::vector<PipelineTrace> ended;
    {
        std::lock_guard lock(state_mutex_);
        if (!active_ && queue_.empty())
            return false;
        while (!queue_.empty())
        {
            Active q = std::move(queue_.front());
            queue_.pop_front();
            q.trace.execution_status = ExecutionStatus::Stopped;
            q.trace.execution_events.push_back({ExecutionStatus::Stopped, world_.tick, "cancelled by stop"});
            record_locked(q.trace);
            ended.push_back(q.trace);
        }
        if (active_)
        {
            ended.push_back(end_locked(ExecutionStatus::Stopped, "emergency stop"));
        }
        for (auto& a : world_.agents)
        {
            if (!a.frozen)
            {
                a.frozen = true;
                frozen_by_stop_.push_back(a.id);
            }
        }
        // One tick with no tree: frozen agents hold still and the halted
        // state becomes observable as a new snapshot.
        sim::step(world_, nullptr);
    }
    for (const auto& t : ended)
        emit(t.trace_id, "execution", {{"execution_status", "Stopped"}});
    return true;
}

Session::StepResult Session::step()
{
    StepResult result;
    std::optional<PipelineTrace> started;
    {
        std::lock_guard lock(state_mutex_);
        if (!active_)
            return result;
        std::optional<bt::TickStatus> status;
        std::string fault;
        try
        {
            status = sim::step(world_, &active_->executor);
        }
        catch (const bt::RuntimeFault& e)
        {
            fault = e.what();
        }
        result.advanced = fault.empty();

        std::optional<ExecutionStatus> terminal;
        std::string note;
        if (!fault.empty())
        {
            terminal = ExecutionStatus::Failed;
            note = "runtime fault: " + fault;
        }
        else if (status == bt::TickStatus::Success)
        {
            terminal = ExecutionStatus::Succeeded;
            note = "tree returned Success";
        }
        else if (status == bt::TickStatus::Failure)
        {
            terminal = ExecutionStatus::Failed;
            note = "tree returned Failure";
        }
        else if (world_.tick - active_->start_tick >= services_->config.max_ticks)
        {
            terminal = ExecutionStatus::Timeout;
            note = "tick budget exhausted";
        }
        if (terminal)
        {
            result.finished = end_locked(*terminal, note);
            if (!queue_.empty())
            {
                Active next = std::move(queue_.front());
                queue_.pop_front();
                start_locked(std::move(next));
                started = active_->trace;
            }
        }
    }
    if (result.finished)
        emit(result.finished->trace_id, "execution",
             {{"execution_status", to_string(result.finished->execution_status)},
              {"tick", result.finished->execution_events.back().tick},
              {"note", result.finished->execution_events.back().note}});
    if (started)
        emit(started->trace_id, "execution",
             {{"execution_status", "Running"}, {"tick", started->execution_events.back().tick}});
    return result;
}

bool Session::active() const
{
    std::lock_guard lock(state_mutex_);
    return active_.has_value();
}

int Session::run_until_idle(int max_steps)
{
    int steps = 0;
    while (steps < max_steps)
    {
        const StepResult r = step();
        if (!r.advanced && !r.finished)
            break;
        ++steps;
    }
    return steps;
}

nlohmann::json Session::snapshot() const
{
    std::lock_guard lock(state_mutex_);
    return sim::snapshot(world_);
}

std::int64_t Session::tick() const
{
    std::lock_guard lock(state_mutex_);
    return world_.tick;
}

std::vector<PipelineTrace> Session::traces() const
{
    std::lock_guard lock(state_mutex_);
    return {traces_.begin(), traces_.end()};
}

std::optional<PipelineTrace> Session::find_trace(const std::string& trace_id) const
{
    std::lock_guard lock(state_mutex_);
    for (const auto& t : traces_)
    {
        if (t.trace_id == trace_id)
            return t;
    }
    return std::nullopt;
}

} // namespace swarmcmd::nl
