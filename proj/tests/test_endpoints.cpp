#include <atomic>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "swarmcmd/endpoints.hpp"
#include "swarmcmd/prompt.hpp"
#include "swarmcmd/scenarios.hpp"

using namespace swarmcmd;
using namespace swarmcmd::nl;

namespace {

// Local HTTP stub; handler picked per test.
class StubServer
{
public:
    explicit StubServer(httplib::Server::Handler handler)
    {
        server_.Post("/v1/complete", [this, handler](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            last_body = req.body;
            handler(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer()
    {
        server_.stop();
        thread_.join();
    }
    [[nodiscard]] std::string url() const
    {
        return "http://127.0.0.1:" + std::to_string(port_) + "/v1/complete";
    }

    std::atomic<int> hits{0};
    std::string last_body;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

int unused_port()
{
    httplib::Server probe;
    const int port = probe.bind_to_any_port("127.0.0.1");
    return port; // socket closes with `probe`
}

} // namespace

TEST(Endpoints, ConfigJson)
{
    const auto c = EndpointConfig::from_json(
        {{"base_url", "http://x:1/"}, {"model", "m"}, {"retries", 2}, {"timeout_ms", 50}});
    EXPECT_EQ(c.model, "m");
    EXPECT_EQ(c.retries, 2);
    EXPECT_EQ(c.temperature, 0.0);
    EXPECT_EQ(EndpointConfig::from_json(c.to_json()), c);
    EXPECT_THROW(EndpointConfig::from_json({{"base_url", ""}}), std::invalid_argument);
    EXPECT_THROW(EndpointConfig::from_json({{"base_url", "http://x"}, {"retries", -1}}),
                 std::invalid_argument);
    EXPECT_THROW(EndpointConfig::from_json({{"base_url", 5}}), std::invalid_argument);
    EXPECT_THROW(EndpointConfig::from_json(nlohmann::json::array()), std::invalid_argument);
}

TEST(Endpoints, MakeEndpointSchemes)
{
    EXPECT_NO_THROW(make_endpoint(endpoint_for("mock://reference")));
    EXPECT_NO_THROW(make_endpoint(endpoint_for("mock://echo")));
    EXPECT_NO_THROW(make_endpoint(endpoint_for("http://localhost:8000/v1")));
    EXPECT_THROW(make_endpoint(endpoint_for("mock://nope")), std::invalid_argument);
    EXPECT_THROW(make_endpoint(endpoint_for("https://example.com")), std::invalid_argument);
    EXPECT_THROW(make_endpoint(endpoint_for("http://host:99999")), std::invalid_argument);
    EXPECT_THROW(make_endpoint(endpoint_for("mock://script")), std::invalid_argument); // empty script
}

TEST(Endpoints, ScriptCycles)
{
    auto cfg = endpoint_for("mock://script");
    cfg.script = {"a", "b"};
    auto ep = make_endpoint(cfg);
    EndpointRequest req;
    EXPECT_EQ(ep->complete(req, "generation").text, "a");
    EXPECT_EQ(ep->complete(req, "generation").text, "b");
    EXPECT_EQ(ep->complete(req, "generation").text, "a");
}

TEST(Endpoints, ProseIsReturnedVerbatim)
{
    auto cfg = endpoint_for("mock://script");
    cfg.script = {"Sure! Here is your tree:\n<root/>"};
    EXPECT_EQ(make_endpoint(cfg)->complete({}, "generation").text, cfg.script[0]);
}

TEST(Endpoints, EchoReturnsUserCommand)
{
    auto ep = make_endpoint(endpoint_for("mock://echo"));
    EndpointRequest req;
    req.messages = {{"user", build_prompt("go home", 0).render()}};
    EXPECT_EQ(ep->complete(req, "translation").text, "go home");
    EndpointRequest plain;
    plain.text = "bonjour";
    EXPECT_EQ(ep->complete(plain, "translation").text, "bonjour");
}

TEST(Endpoints, ReferenceMockPicksScenarioTree)
{
    auto ep = make_endpoint(endpoint_for("mock://reference"));
    for (int id = 1; id <= sim::kScenarioCount; ++id)
    {
        const auto sc = sim::load_scenario(id);
        EndpointRequest req;
        req.messages = {{"user", build_prompt(sc.description, 2).render()}};
        EXPECT_EQ(ep->complete(req, "generation").text, bt::serialize_tree(sc.reference_tree)) << id;
    }
    EndpointRequest prose;
    prose.text = "zzz qqq";
    EXPECT_FALSE(bt::parse_document(ep->complete(prose, "generation").text).accepted());
}

TEST(Endpoints, RequestBody)
{
    auto cfg = endpoint_for("http://x");
    cfg.model = "m";
    EndpointRequest chat;
    chat.messages = {{"system", "s"}, {"user", "u"}};
    chat.extra = {{"stop", "x"}};
    const auto b = request_body(cfg, chat);
    EXPECT_EQ(b.at("model"), "m");
    EXPECT_EQ(b.at("temperature"), 0.0);
    EXPECT_EQ(b.at("max_tokens"), 1024);
    EXPECT_EQ(b.at("messages").size(), 2u);
    EXPECT_EQ(b.at("messages")[1].at("content"), "u");
    EXPECT_EQ(b.at("stop"), "x");
    EXPECT_FALSE(b.contains("text"));
    EndpointRequest text;
    text.text = "hola";
    EXPECT_EQ(request_body(cfg, text).at("text"), "hola");
}

TEST(Endpoints, ExtractText)
{
    EXPECT_EQ(extract_text({{"text", "a"}}), "a");
    EXPECT_EQ(extract_text({{"choices", {{{"message", {{"content", "b"}}}}}}}), "b");
    EXPECT_EQ(extract_text({{"choices", {{{"text", "c"}}}}}), "c");
    EXPECT_FALSE(extract_text({{"choices", nlohmann::json::array()}}).has_value());
    EXPECT_FALSE(extract_text({{"text", 3}}).has_value());
    EXPECT_FALSE(extract_text("text").has_value());
}

TEST(Endpoints, UserCommandOf)
{
    EXPECT_EQ(user_command_of("a\nUSER COMMAND:  stop now \nRESPONSE: XML only."), "stop now");
    EXPECT_EQ(user_command_of("no marker"), "no marker");
    EXPECT_EQ(user_command_of("USER COMMAND: x\nUSER COMMAND: y"), "y");
}

TEST(Endpoints, HttpSuccess)
{
    StubServer server([](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"choices":[{"message":{"content":"<root/>"}}]})", "application/json");
    });
    auto cfg = endpoint_for(server.url());
    cfg.model = "tiny";
    auto ep = make_endpoint(cfg);
    EndpointRequest req;
    req.messages = {{"user", "hi"}};
    const auto c = ep->complete(req, "generation");
    EXPECT_EQ(c.text, "<root/>");
    EXPECT_EQ(c.attempts, 1);
    const auto body = nlohmann::json::parse(server.last_body);
    EXPECT_EQ(body.at("model"), "tiny");
    EXPECT_EQ(body.at("temperature"), 0.0);
}

TEST(Endpoints, HttpNon2xxIsNotRetried)
{
    StubServer server([](const httplib::Request&, httplib::Response& res) {
        res.status = 500;
        res.set_content("boom", "text/plain");
    });
    auto cfg = endpoint_for(server.url());
    cfg.retries = 3;
    auto ep = make_endpoint(cfg);
    try
    {
        ep->complete({}, "generation");
        FAIL() << "expected StageError";
    }
    catch (const StageError& e)
    {
        EXPECT_EQ(e.stage(), "generation");
        EXPECT_FALSE(e.unavailable());
        EXPECT_EQ(e.attempts(), 1);
        EXPECT_NE(std::string(e.what()).find("500"), std::string::npos);
    }
    EXPECT_EQ(server.hits.load(), 1);
}

TEST(Endpoints, HttpBadBodies)
{
    StubServer server([](const httplib::Request& req, httplib::Response& res) {
        res.set_content(req.body.find("json") != std::string::npos ? "not json" : R"({"x":1})",
                        "application/json");
    });
    auto ep = make_endpoint(endpoint_for(server.url()));
    EndpointRequest a;
    a.text = "json";
    EXPECT_THROW(ep->complete(a, "generation"), StageError);
    EndpointRequest b;
    b.text = "shape";
    EXPECT_THROW(ep->complete(b, "generation"), StageError);
}

TEST(Endpoints, UnreachableRetriesThenFails)
{
    auto cfg = endpoint_for("http://127.0.0.1:" + std::to_string(unused_port()) + "/v1");
    cfg.retries = 2;
    cfg.timeout_ms = 500;
    auto ep = make_endpoint(cfg);
    try
    {
        ep->complete({}, "safety");
        FAIL() << "expected StageError";
    }
    catch (const StageError& e)
    {
        EXPECT_EQ(e.attempts(), 3);
        EXPECT_TRUE(e.unavailable());
        EXPECT_EQ(e.stage(), "safety");
        EXPECT_EQ(e.to_json().at("attempts"), 3);
    }
}
