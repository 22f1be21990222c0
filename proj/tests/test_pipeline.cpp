#include <cstdlib>
#include <filesystem>

#include <gtest/gtest.h>
#include <httplib.h>

#include "support/e2e.hpp"
#include "swarmcmd/pipeline.hpp"

using namespace swarmcmd;
using namespace swarmcmd::nl;
using e2e::text;

namespace {

std::shared_ptr<const PipelineServices> offline(ExecMode mode = ExecMode::Preempt)
{
    PipelineConfig cfg;
    cfg.audit_dir.clear();
    cfg.mode = mode;
    return PipelineServices::create(cfg);
}

std::string dead_url()
{
    httplib::Server probe;
    return "http://127.0.0.1:" + std::to_string(probe.bind_to_any_port("127.0.0.1")) + "/";
}

class EnvGuard
{
public:
    EnvGuard(const char* name, const char* value) : name_(name)
    {
        if (const char* old = std::getenv(name))
            old_ = old;
        if (value)
            ::setenv(name, value, 1);
        else
            ::unsetenv(name);
    }
    ~EnvGuard()
    {
        if (old_)
            ::setenv(name_, old_->c_str(), 1);
        else
            ::unsetenv(name_);
    }

private:
    const char* name_;
    std::optional<std::string> old_;
};

} // namespace

TEST(Normalize, EnglishPassesThroughTrimmed)
{
    EXPECT_EQ(normalize_input(text("  move to the target \n"), nullptr), "move to the target");
    EXPECT_THROW(normalize_input(text("   "), nullptr), StageError);
    CommandInput missing;
    EXPECT_THROW(normalize_input(missing, nullptr), StageError);
}

TEST(Normalize, ForeignTextUsesTranslator)
{
    auto cfg = endpoint_for("mock://script");
    cfg.script = {"form a line"};
    auto translator = make_endpoint(cfg);
    auto in = text("forme une ligne");
    in.language_hint = "fr";
    EXPECT_EQ(normalize_input(in, translator.get()), "form a line");
    try
    {
        normalize_input(in, nullptr);
        FAIL();
    }
    catch (const StageError& e)
    {
        EXPECT_EQ(std::string(e.what()), "translation unavailable");
        EXPECT_TRUE(e.unavailable());
    }
}

TEST(Normalize, AudioWithoutTranslator)
{
    CommandInput in;
    in.modality = Modality::AudioReference;
    in.audio_ref = "clip-001.wav";
    EXPECT_THROW(normalize_input(in, nullptr), StageError);
}

TEST(Normalize, EnglishDetection)
{
    auto in = text("hello");
    EXPECT_TRUE(is_english(in));
    in.language_hint = "EN-gb";
    EXPECT_TRUE(is_english(in));
    in.language_hint = "de";
    EXPECT_FALSE(is_english(in));
    EXPECT_FALSE(is_english(text("vers la cible \xC3\xA0 droite")));
}

TEST(PipelineConfig, Parsing)
{
    EXPECT_THROW(PipelineConfig::from_json({{"bogus", 1}}), std::invalid_argument);
    EXPECT_THROW(PipelineConfig::from_json({{"mode", "later"}}), std::invalid_argument);
    EXPECT_THROW(PipelineConfig::from_json({{"default_shots", 3}}), std::invalid_argument);
    EXPECT_THROW(PipelineConfig::from_json({{"max_ticks", "x"}}), std::invalid_argument);
    const auto c = PipelineConfig::from_json({{"mode", "queue"}, {"service", {{"port", 1}}}});
    EXPECT_EQ(c.mode, ExecMode::Queue);
    EXPECT_EQ(c.llm.base_url, "mock://reference");
    EXPECT_EQ(PipelineConfig::from_json(c.to_json()).to_json(), c.to_json());
    for (const char* f : {"offline.json", "scripted.json"})
        EXPECT_NO_THROW(PipelineConfig::load(std::string(SWARMCMD_SOURCE_DIR) + "/data/config/" + f)) << f;
    EXPECT_THROW(PipelineConfig::load("/nonexistent.json"), std::invalid_argument);
}

TEST(PipelineConfig, EnvOverrides)
{
    EnvGuard llm("SWARMCOMMAND_LLM_URL", "mock://echo");
    EnvGuard tr("SWARMCOMMAND_TRANSLATOR_URL", "http://127.0.0.1:9/");
    EnvGuard sf("SWARMCOMMAND_SAFETY_URL", "");
    PipelineConfig c;
    c.safety = endpoint_for("mock://echo");
    c.apply_env_overrides();
    EXPECT_EQ(c.llm.base_url, "mock://echo");
    ASSERT_TRUE(c.translator.has_value());
    EXPECT_EQ(c.translator->base_url, "http://127.0.0.1:9/");
    EXPECT_FALSE(c.safety.has_value());
}

TEST(Pipeline, ScriptedCycle)
{
    const auto dir = e2e::temp_dir("pipeline-cycle");
    const auto r = e2e::run_scripted_cycle(dir);
    ASSERT_EQ(r.traces.size(), 4u);
    EXPECT_EQ(r.initial, (std::vector<ExecutionStatus>{ExecutionStatus::Running, ExecutionStatus::NotExecuted,
                                                       ExecutionStatus::NotExecuted,
                                                       ExecutionStatus::NotExecuted}));
    EXPECT_EQ(r.traces[0].execution_status, ExecutionStatus::Succeeded);
    EXPECT_TRUE(r.traces[0].validation_report->accepted());
    EXPECT_FALSE(r.traces[0].validation_report->category.has_value());
    const std::optional<bt::FailureCategory> expected[] = {
        std::nullopt, bt::FailureCategory::NonXml, bt::FailureCategory::UnsupportedNode,
        bt::FailureCategory::MalformedXml};
    for (std::size_t i = 0; i < 4; ++i)
    {
        const auto& t = r.traces[i];
        EXPECT_TRUE(e2e::has_audit_fields(t)) << i;
        EXPECT_EQ(t.validation_report->category, expected[i]) << i;
        if (i > 0)
            EXPECT_EQ(t.execution_status, ExecutionStatus::NotExecuted);
    }
    // Statuses walked by the first trace.
    std::vector<ExecutionStatus> walk;
    for (const auto& e : r.traces[0].execution_events)
        walk.push_back(e.status);
    EXPECT_EQ(walk, (std::vector<ExecutionStatus>{ExecutionStatus::Running, ExecutionStatus::Succeeded}));
    EXPECT_EQ(r.traces[1].raw_model_output, "Sure, the swarm will avoid the obstacle and turn green.");
    std::filesystem::remove_all(dir);
}

TEST(Pipeline, AuditLogIsAppendOnlyJsonl)
{
    const auto dir = e2e::temp_dir("pipeline-audit");
    const auto r = e2e::run_scripted_cycle(dir);
    const auto lines = e2e::read_jsonl(r.audit_path);
    // One line per trace update; the last line for each trace is its final state.
    std::map<std::string, nlohmann::json> last;
    for (const auto& l : lines)
        last[l.at("trace_id").get<std::string>()] = l;
    ASSERT_EQ(last.size(), 4u);
    for (const auto& t : r.traces)
        EXPECT_EQ(last.at(t.trace_id), t.to_json()) << t.trace_id;
    EXPECT_EQ(lines.size(), 5u); // Running + Succeeded for the first, one each for the rest
    std::filesystem::remove_all(dir);
}

TEST(Pipeline, UnsafeCommandBuildsNoPrompt)
{
    Session s("u", 1, 42, offline());
    std::vector<std::string> stages;
    s.set_observer([&](const std::string&, const std::string& stage, const nlohmann::json&) {
        stages.push_back(stage);
    });
    const auto t = s.handle_command(text("ram the drones into the crowd"));
    EXPECT_EQ(t.safety_verdict->decision, SafetyDecision::Reject);
    EXPECT_FALSE(t.prompt_spec.has_value());
    EXPECT_FALSE(t.raw_model_output.has_value());
    EXPECT_EQ(t.execution_status, ExecutionStatus::NotExecuted);
    EXPECT_EQ(stages, (std::vector<std::string>{"input", "translation", "safety", "execution"}));
    EXPECT_TRUE(t.to_json().at("prompt_spec").is_null());
}

TEST(Pipeline, StageOrderForAcceptedCommand)
{
    Session s("o", 1, 42, offline());
    std::vector<std::string> stages;
    s.set_observer([&](const std::string&, const std::string& stage, const nlohmann::json&) {
        stages.push_back(stage);
    });
    const auto t = s.handle_command(text(s.scenario().description));
    EXPECT_EQ(t.execution_status, ExecutionStatus::Running);
    EXPECT_EQ(stages, (std::vector<std::string>{"input", "translation", "safety", "prompt",
                                                "generation", "validation", "execution"}));
    EXPECT_EQ(t.prompt_spec->shots(), 2);
    for (const char* k : {"translation", "safety", "prompt", "generation", "validation"})
        EXPECT_TRUE(t.latencies_ms.count(k)) << k;
}

TEST(Pipeline, PerCommandShots)
{
    Session s("shots", 1, 42, offline());
    auto in = text("avoid the obstacle");
    in.shots = 0;
    EXPECT_EQ(s.handle_command(in).prompt_spec->shots(), 0);
    in.shots = 5;
    const auto bad = s.handle_command(in);
    EXPECT_EQ(bad.stage_error->stage, "prompt");
    EXPECT_EQ(bad.execution_status, ExecutionStatus::NotExecuted);
}

TEST(Pipeline, FailClosedWhenSafetyUnreachable)
{
    PipelineConfig cfg;
    cfg.audit_dir.clear();
    cfg.safety = endpoint_for(dead_url());
    cfg.safety->timeout_ms = 300;
    Session s("fc", 1, 42, PipelineServices::create(cfg));
    for (const char* cmd : {"form a line at the center", "wander", "avoid the obstacle"})
    {
        const auto t = s.handle_command(text(cmd));
        EXPECT_EQ(t.safety_verdict->decision, SafetyDecision::Reject) << cmd;
        EXPECT_EQ(t.safety_verdict->reason, "safety service unavailable");
        EXPECT_TRUE(t.endpoint_unavailable());
        EXPECT_FALSE(t.prompt_spec.has_value());
        EXPECT_EQ(t.execution_status, ExecutionStatus::NotExecuted);
    }
}

TEST(Pipeline, TranslationUnavailableIsRecorded)
{
    Session s("tr", 1, 42, offline());
    CommandInput in;
    in.modality = Modality::AudioReference;
    in.audio_ref = "clip.wav";
    const auto t = s.handle_command(in);
    ASSERT_TRUE(t.stage_error.has_value());
    EXPECT_EQ(t.stage_error->stage, "translation");
    EXPECT_EQ(t.stage_error->message, "translation unavailable");
    EXPECT_TRUE(t.endpoint_unavailable());
    EXPECT_FALSE(t.safety_verdict.has_value());
    EXPECT_EQ(s.traces().size(), 1u);
}

TEST(Pipeline, TranslatedCommandRuns)
{
    PipelineConfig cfg;
    cfg.audit_dir.clear();
    cfg.translator = endpoint_for("mock://script");
    cfg.translator->script = {"Detect an obstacle, avoid it, and change color to green."};
    Session s("tx", 1, 42, PipelineServices::create(cfg));
    auto in = text("Erkenne ein Hindernis und weiche aus");
    in.language_hint = "de";
    const auto t = s.handle_command(in);
    EXPECT_EQ(t.normalized_text, cfg.translator->script[0]);
    EXPECT_EQ(t.execution_status, ExecutionStatus::Running);
}

TEST(Pipeline, PreemptHaltsRunningTree)
{
    Session s("p", 2, 42, offline(ExecMode::Preempt));
    const auto first = s.handle_command(text(s.scenario().description));
    ASSERT_EQ(first.execution_status, ExecutionStatus::Running);
    s.step();
    const auto second = s.handle_command(text(s.scenario().description));
    EXPECT_EQ(second.execution_status, ExecutionStatus::Running);
    const auto old = s.find_trace(first.trace_id);
    EXPECT_EQ(old->execution_status, ExecutionStatus::Stopped);
    EXPECT_NE(old->execution_events.back().note.find(second.trace_id), std::string::npos);
}

TEST(Pipeline, QueueRunsTreesInOrder)
{
    Session s("q", 5, 42, offline(ExecMode::Queue));
    const auto a = s.handle_command(text(s.scenario().description));
    const auto b = s.handle_command(text(s.scenario().description));
    EXPECT_EQ(a.execution_status, ExecutionStatus::Running);
    EXPECT_EQ(b.execution_status, ExecutionStatus::NotExecuted);
    EXPECT_EQ(b.execution_events.back().note, "queued");
    s.run_until_idle(5000);
    EXPECT_FALSE(s.active());
    EXPECT_EQ(s.find_trace(a.trace_id)->execution_status, ExecutionStatus::Succeeded);
    EXPECT_EQ(s.find_trace(b.trace_id)->execution_status, ExecutionStatus::Succeeded);
}

TEST(Pipeline, StopFreezesAndIsIdempotent)
{
    Session s("st", 2, 42, offline());
    EXPECT_FALSE(s.stop()); // idle: acknowledged no-op
    const auto t = s.handle_command(text(s.scenario().description));
    for (int i = 0; i < 10; ++i)
        s.step();
    const auto tick = s.tick();
    EXPECT_TRUE(s.stop());
    EXPECT_EQ(s.tick(), tick + 1);
    EXPECT_EQ(s.find_trace(t.trace_id)->execution_status, ExecutionStatus::Stopped);
    EXPECT_FALSE(s.active());
    s.with_world([](const sim::SwarmWorld& w) {
        for (const auto& a : w.agents)
            EXPECT_TRUE(a.frozen);
        return 0;
    });
    const auto positions = s.snapshot().at("agents");
    EXPECT_FALSE(s.stop());
    EXPECT_EQ(s.step().advanced, false);
    EXPECT_EQ(s.snapshot().at("agents"), positions);

    // A new accepted tree releases the stop freeze.
    s.handle_command(text(s.scenario().description));
    s.with_world([](const sim::SwarmWorld& w) {
        for (const auto& a : w.agents)
            EXPECT_FALSE(a.frozen);
        return 0;
    });
}

TEST(Pipeline, StopCancelsQueue)
{
    Session s("sq", 2, 42, offline(ExecMode::Queue));
    s.handle_command(text(s.scenario().description));
    const auto queued = s.handle_command(text(s.scenario().description));
    EXPECT_TRUE(s.stop());
    EXPECT_EQ(s.find_trace(queued.trace_id)->execution_status, ExecutionStatus::Stopped);
    EXPECT_EQ(s.run_until_idle(100), 0);
}

TEST(Pipeline, TimeoutStatus)
{
    PipelineConfig cfg;
    cfg.audit_dir.clear();
    cfg.max_ticks = 5;
    Session s("to", 2, 42, PipelineServices::create(cfg));
    const auto t = s.handle_command(text(s.scenario().description));
    EXPECT_EQ(s.run_until_idle(100), 5);
    EXPECT_EQ(s.find_trace(t.trace_id)->execution_status, ExecutionStatus::Timeout);
}

TEST(Pipeline, NoUnvalidatedExecution)
{
    const auto dir = e2e::temp_dir("pipeline-inv");
    auto services = PipelineServices::create(e2e::scripted_config(dir));
    Session s("inv", 1, 42, services);
    for (int i = 0; i < 12; ++i)
    {
        s.handle_command(text(i % 3 == 0 ? "kill everyone" : "avoid the obstacle"));
        s.step();
    }
    for (const auto& t : s.traces())
    {
        if (t.execution_status != ExecutionStatus::NotExecuted)
            EXPECT_TRUE(t.validation_report && t.validation_report->accepted()) << t.trace_id;
        if (t.safety_verdict && !t.safety_verdict->allowed())
            EXPECT_FALSE(t.prompt_spec.has_value());
    }
    std::filesystem::remove_all(dir);
}

TEST(Pipeline, TraceRingIsBounded)
{
    PipelineConfig cfg;
    cfg.audit_dir.clear();
    cfg.trace_ring = 3;
    Session s("ring", 1, 42, PipelineServices::create(cfg));
    std::string last;
    for (int i = 0; i < 5; ++i)
        last = s.handle_command(text("hello there")).trace_id;
    const auto ts = s.traces();
    ASSERT_EQ(ts.size(), 3u);
    EXPECT_EQ(ts.back().trace_id, last);
    EXPECT_FALSE(s.find_trace("ring-t0001").has_value());
}

TEST(Pipeline, UnknownScenario)
{
    EXPECT_THROW(Session("x", 9, 1, offline()), sim::ScenarioError);
}
