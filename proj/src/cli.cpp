#include "swarmcmd/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "swarmcmd/api_service.hpp"
#include "swarmcmd/datagen.hpp"
#include "swarmcmd/eval.hpp"
#include "swarmcmd/pipeline.hpp"
#include "swarmcmd/scenarios.hpp"

namespace swarmcmd::cli {

namespace {

namespace fs = std::filesystem;

// Carries an exit code out of a subcommand.
struct Exit
{
    int code;
    std::string message;
};

std::string read_file(const std::string& path)
{
    if (path == "-")
    {
        std::ostringstream ss;
        ss << std::cin.rdbuf();
        return ss.str();
    }
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Exit{kUsage, "cannot read '" + path + "'"};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json load_config_doc(std::string path)
{
    if (path.empty())
        if (const char* env = std::getenv("SWARMCOMMAND_CONFIG"); env && *env)
            path = env;
    if (path.empty())
        return nlohmann::json::object();
    const std::string text = read_file(path);
    auto doc = nlohmann::json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw Exit{kDataError, "config '" + path + "' is not a JSON object"};
    // Data file paths are relative to the config file.
    const fs::path dir = fs::path(path).parent_path();
    for (const char* key : {"blocklist_path", "whitelist_path"})
    {
        const auto it = doc.find(key);
        if (it != doc.end() && it->is_string() && fs::path(it->get<std::string>()).is_relative())
            *it = (dir / it->get<std::string>()).lexically_normal().string();
    }
    return doc;
}

nl::PipelineConfig pipeline_config(const nlohmann::json& doc)
{
    try
    {
        auto c = nl::PipelineConfig::from_json(doc);
        c.apply_env_overrides();
        return c;
    }
    catch (const std::invalid_argument& e)
    {
        throw Exit{kDataError, e.what()};
    }
}

bt::NodeWhitelist whitelist_for(const std::string& override_path, const nlohmann::json& doc)
{
    std::string path = override_path;
    if (path.empty())
        if (const auto it = doc.find("whitelist_path"); it != doc.end() && it->is_string())
            path = it->get<std::string>();
    if (path.empty())
        return bt::default_whitelist();
    if (!fs::exists(path))
        throw Exit{kUsage, "cannot read '" + path + "'"};
    try
    {
        return bt::NodeWhitelist::load(path);
    }
    catch (const std::exception& e)
    {
        throw Exit{kDataError, e.what()};
    }
}

void print_report(std::ostream& out, const bt::ValidationReport& report)
{
    out << to_string(report.outcome()) << '\n';
    for (const auto& d : report.diagnostics)
        out << "  " << (d.location.empty() ? "-" : d.location) << ": " << d.message << '\n';
}

sim::Scenario scenario_for(const std::string& spec)
{
    try
    {
        std::size_t used = 0;
        const int id = std::stoi(spec, &used);
        if (used == spec.size())
            return sim::load_scenario(id);
    }
    catch (const std::invalid_argument&)
    {
    }
    catch (const std::out_of_range&)
    {
    }
    catch (const sim::ScenarioError& e)
    {
        throw Exit{kUsage, e.what()};
    }
    if (!fs::exists(spec))
        throw Exit{kUsage, "no scenario '" + spec + "' (expected 1-" +
                               std::to_string(sim::kScenarioCount) + " or a scenario file)"};
    try
    {
        return sim::load_scenario_file(spec);
    }
    catch (const std::exception& e)
    {
        throw Exit{kDataError, e.what()};
    }
}

void write_output(const std::string& path, const std::string& content, bool force)
{
    if (!force && fs::exists(path))
        throw Exit{kCantCreate, "'" + path + "' exists; pass --force to overwrite"};
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << content;
    if (!f)
        throw Exit{kCantCreate, "cannot write '" + path + "'"};
}

// ---------------------------------------------------------------------------

struct ValidateArgs
{
    std::string file;
    std::string whitelist;
    bool json = false;
};

int cmd_validate(const ValidateArgs& a, const nlohmann::json& config, std::ostream& out)
{
    const auto whitelist = whitelist_for(a.whitelist, config);
    const auto report = bt::parse_document(read_file(a.file), whitelist);
    if (a.json)
        out << bt::to_json(report).dump(2) << '\n';
    else
        print_report(out, report);
    return static_cast<int>(report.outcome());
}

struct RunArgs
{
    std::string scenario;
    std::string tree;
    std::string from_llm;
    std::uint64_t seed = sim::kDefaultSeed;
    int ticks = sim::kScenarioTickBudget;
    bool headless = false;
    std::string snapshot_out;
    bool force = false;
    std::string whitelist;
    int shots = -1;
};

int finish_run(std::ostream& out, const RunArgs& a, const sim::Scenario& scenario,
               std::string_view outcome, int ticks, bool predicate_met,
               const sim::SwarmWorld& world)
{
    out << "scenario " << scenario.id << ": " << scenario.predicate_name << " "
        << (predicate_met ? "met" : "not met") << '\n'
        << "outcome: " << outcome << '\n'
        << "ticks: " << ticks << '\n'
        << "hash: " << sim::hash_hex(sim::state_hash(world)) << '\n';
    if (!a.snapshot_out.empty())
        write_output(a.snapshot_out, sim::snapshot(world).dump(2) + "\n", a.force);
    if (outcome == "Timeout")
        return kTimeout;
    return outcome == "Success" && predicate_met ? kOk : kScenarioFailed;
}

int cmd_run_llm(const RunArgs& a, const nlohmann::json& doc, const sim::Scenario& scenario,
                std::ostream& out, std::ostream& err)
{
    auto config = pipeline_config(doc);
    if (!a.whitelist.empty())
        config.whitelist_path = a.whitelist;
    config.max_ticks = a.ticks;
    std::shared_ptr<const nl::PipelineServices> services;
    try
    {
        services = nl::PipelineServices::create(config);
    }
    catch (const std::exception& e)
    {
        throw Exit{kDataError, e.what()};
    }
    nl::Session session("cli", scenario.id, a.seed, services);
    nl::CommandInput input;
    input.raw_text = a.from_llm;
    if (a.shots >= 0)
        input.shots = a.shots;
    const auto trace = session.handle_command(std::move(input));

    if (trace.endpoint_unavailable())
    {
        err << "endpoint unavailable: " << trace.stage_error->stage << ": "
            << trace.stage_error->message << '\n';
        return kUnavailable;
    }
    if (trace.safety_verdict && !trace.safety_verdict->allowed())
    {
        err << "rejected: " << trace.safety_verdict->reason << '\n';
        return kRejected;
    }
    if (trace.stage_error)
    {
        err << trace.stage_error->stage << " failed: " << trace.stage_error->message << '\n';
        return kUnavailable;
    }
    if (!trace.validation_report || !trace.validation_report->accepted())
    {
        if (trace.raw_model_output)
            err << "model output rejected by the gate:\n";
        if (trace.validation_report)
        {
            print_report(err, *trace.validation_report);
            return static_cast<int>(trace.validation_report->outcome());
        }
        return kInternal;
    }
    if (!a.headless)
        out << bt::serialize_tree(*trace.validation_report->tree, services->whitelist) << '\n';

    session.run_until_idle(a.ticks);
    const auto final_trace = session.find_trace(trace.trace_id);
    std::string_view outcome = "Failure";
    int ticks = 0;
    if (final_trace && !final_trace->execution_events.empty())
    {
        switch (final_trace->execution_status)
        {
        case nl::ExecutionStatus::Succeeded: outcome = "Success"; break;
        case nl::ExecutionStatus::Timeout: outcome = "Timeout"; break;
        case nl::ExecutionStatus::Running: outcome = "Timeout"; break;
        default: break;
        }
        ticks = static_cast<int>(final_trace->execution_events.back().tick -
                                 final_trace->execution_events.front().tick);
    }
    return session.with_world([&](const sim::SwarmWorld& world) {
        return finish_run(out, a, scenario, outcome, ticks, scenario.success_predicate(world),
                          world);
    });
}

int cmd_run(const RunArgs& a, const nlohmann::json& doc, std::ostream& out, std::ostream& err)
{
    if (a.ticks < 1)
        throw Exit{kUsage, "--ticks must be at least 1"};
    const auto scenario = scenario_for(a.scenario);
    if (!a.from_llm.empty())
        return cmd_run_llm(a, doc, scenario, out, err);

    bt::BehaviorTree tree = scenario.reference_tree;
    if (!a.tree.empty() && a.tree != "reference")
    {
        const auto whitelist = whitelist_for(a.whitelist, doc);
        const auto report = bt::parse_document(read_file(a.tree), whitelist);
        if (!report.accepted())
        {
            err << a.tree << ": ";
            print_report(err, report);
            return static_cast<int>(report.outcome());
        }
        tree = *report.tree;
    }
    if (!a.headless)
        out << bt::serialize_tree(tree, whitelist_for(a.whitelist, doc)) << '\n';
    const auto result = sim::run_scenario(scenario, tree, a.seed, a.ticks);
    return finish_run(out, a, scenario, bt::to_string(result.run.outcome), result.run.ticks_used,
                      result.predicate_met, result.final_world);
}

struct EvalArgs
{
    std::string corpus;
    std::string group_by = "model,shots";
    std::string format = "table";
    std::string whitelist;
};

// A report summary is a JSON document with a "groups" array (or the bare
// array); anything else is read as a JSON-lines corpus.
std::optional<nlohmann::json> summary_document(const std::string& text)
{
    auto doc = nlohmann::json::parse(text, nullptr, false);
    if (doc.is_discarded())
        return std::nullopt;
    if ((doc.is_object() && doc.contains("groups")) || doc.is_array())
        return doc;
    return std::nullopt;
}

int cmd_eval(const EvalArgs& a, const nlohmann::json& doc, std::ostream& out)
{
    const auto format = eval::report_format_from_string(a.format);
    if (!format)
        throw Exit{kUsage, "--format must be table, json or csv"};
    const std::string text = read_file(a.corpus);
    std::vector<eval::MetricsReport> reports;
    try
    {
        if (auto summary = summary_document(text))
        {
            reports = eval::reports_from_json(*summary);
        }
        else
        {
            const auto group_by = eval::parse_group_by(a.group_by);
            const auto whitelist = whitelist_for(a.whitelist, doc);
            std::istringstream in(text);
            const auto records = eval::parse_corpus(in, whitelist);
            reports = eval::aggregate(eval::score_corpus(records, whitelist), group_by);
        }
    }
    catch (const eval::EvalError& e)
    {
        throw Exit{kDataError, a.corpus + ": " + e.what()};
    }
    catch (const std::invalid_argument& e)
    {
        throw Exit{kUsage, e.what()};
    }
    out << eval::render_report(reports, *format);
    return kOk;
}

struct DatagenArgs
{
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string out;
    bool force = false;
    std::string bank;
};

int cmd_datagen(const DatagenArgs& a, const nlohmann::json& doc, std::ostream& out)
{
    if (a.n < 1)
        throw Exit{kUsage, "--n must be at least 1"};
    const auto whitelist = whitelist_for("", doc);
    datagen::TemplateBank bank;
    try
    {
        bank = a.bank.empty() ? datagen::default_bank() : datagen::TemplateBank::load(a.bank);
        bank.validate(whitelist);
    }
    catch (const datagen::DatagenError& e)
    {
        if (!a.bank.empty() && !fs::exists(a.bank))
            throw Exit{kUsage, "cannot read '" + a.bank + "'"};
        throw Exit{kDataError, e.what()};
    }
    const auto corpus = datagen::generate_corpus(a.n, a.seed, bank, whitelist);
    std::ostringstream ss;
    datagen::write_jsonl(ss, corpus);
    write_output(a.out, ss.str(), a.force);
    out << "wrote " << corpus.size() << " records to " << a.out << '\n';
    return kOk;
}

struct ServeArgs
{
    int port = -1;
    std::string bind;
};

int cmd_serve(const ServeArgs& a, const nlohmann::json& doc, std::ostream& out)
{
    api::ServiceConfig service;
    std::shared_ptr<const nl::PipelineServices> services;
    try
    {
        service = api::ServiceConfig::from_json(doc);
        services = nl::PipelineServices::create(pipeline_config(doc));
    }
    catch (const Exit&)
    {
        throw;
    }
    catch (const std::exception& e)
    {
        throw Exit{kDataError, e.what()};
    }
    if (a.port >= 0)
        service.port = static_cast<std::uint16_t>(a.port);
    if (!a.bind.empty())
        service.bind = a.bind;
    api::ApiService server(service, services);
    try
    {
        server.start();
    }
    catch (const std::runtime_error& e)
    {
        throw Exit{kUnavailable, e.what()};
    }
    out << "listening on " << server.address() << std::endl;
    server.wait();
    return kOk;
}

} // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Natural-language commands to validated behavior trees for a simulated swarm",
                 "swarmcommand"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config (default: $SWARMCOMMAND_CONFIG)");

    ValidateArgs va;
    auto* validate = app.add_subcommand("validate", "Run the gate on an XML file ('-' for stdin)");
    validate->add_option("file", va.file)->required();
    validate->add_option("--whitelist", va.whitelist, "Whitelist JSON");
    validate->add_flag("--json", va.json, "Print the report as JSON");

    RunArgs ra;
    auto* run = app.add_subcommand("run", "Execute a tree in a scenario");
    run->add_option("--scenario", ra.scenario, "Scenario id 1-5 or scenario JSON file")->required();
    auto* tree_opt = run->add_option("--tree", ra.tree, "Tree XML file, or 'reference' (default)");
    run->add_option("--from-llm", ra.from_llm, "Command sent through the full pipeline")
        ->excludes(tree_opt);
    run->add_option("--seed", ra.seed, "World seed");
    run->add_option("--ticks", ra.ticks, "Tick budget");
    run->add_flag("--headless", ra.headless, "Print only the outcome lines");
    run->add_option("--snapshot-out", ra.snapshot_out, "Write the final world snapshot here");
    run->add_flag("--force", ra.force, "Overwrite --snapshot-out");
    run->add_option("--whitelist", ra.whitelist, "Whitelist JSON");
    run->add_option("--shots", ra.shots, "Few-shot examples for --from-llm (0-2)")
        ->check(CLI::Range(0, 2));

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "Score a corpus or render a report summary");
    ev->add_option("--corpus", ea.corpus, "JSON-lines corpus or report JSON")->required();
    ev->add_option("--group-by", ea.group_by, "model,shots | model | shots | none");
    ev->add_option("--format", ea.format, "table | json | csv");
    ev->add_option("--whitelist", ea.whitelist, "Whitelist JSON");

    DatagenArgs da;
    auto* dg = app.add_subcommand("datagen", "Generate a synthetic instruction/tree corpus");
    dg->add_option("--n", da.n, "Record count")->required();
    dg->add_option("--seed", da.seed, "Generator seed")->required();
    dg->add_option("--out", da.out, "Output JSON-lines file")->required();
    dg->add_flag("--force", da.force, "Overwrite --out");
    dg->add_option("--bank", da.bank, "Template bank JSON");

    ServeArgs sa;
    auto* serve = app.add_subcommand("serve", "Start the HTTP/WebSocket service");
    serve->add_option("--port", sa.port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
    serve->add_option("--bind", sa.bind, "Bind address");

    for (auto* sub : {validate, run, ev, dg, serve})
        sub->fallthrough();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try
    {
        const auto doc = load_config_doc(config_path);
        if (*validate)
            return cmd_validate(va, doc, out);
        if (*run)
            return cmd_run(ra, doc, out, err);
        if (*ev)
            return cmd_eval(ea, doc, out);
        if (*dg)
            return cmd_datagen(da, doc, out);
        if (*serve)
            return cmd_serve(sa, doc, out);
        return kUsage;
    }
    catch (const Exit& e)
    {
        err << "error: " << e.message << '\n';
        return e.code;
    }
    catch (const std::exception& e)
    {
        err << "internal error: " << e.what() << '\n';
        return kInternal;
    }
}

} // namespace swarmcmd::cli
