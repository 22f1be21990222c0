#include "swarmcmd/endpoints.hpp"

#include <mutex>
#include <regex>
#include <set>

#include <httplib.h>

#include "swarmcmd/bt_model.hpp"
#include "swarmcmd/safety.hpp"
#include "swarmcmd/scenarios.hpp"

namespace swarmcmd::nl {

EndpointConfig EndpointConfig::from_json(const nlohmann::json& doc)
{
    if (!doc.is_object())
        throw std::invalid_argument("endpoint config must be an object");
    EndpointConfig c;
    try
    {
        c.base_url = doc.at("base_url").get<std::string>();
        c.model = doc.value("model", c.model);
        c.max_tokens = doc.value("max_tokens", c.max_tokens);
        c.temperature = doc.value("temperature", c.temperature);
        c.timeout_ms = doc.value("timeout_ms", c.timeout_ms);
        c.retries = doc.value("retries", c.retries);
        c.script = doc.value("script", c.script);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw std::invalid_argument(std::string("endpoint config: ") + e.what());
    }
    if (c.base_url.empty())
        throw std::invalid_argument("endpoint config: base_url is empty");
    if (c.max_tokens < 1 || c.timeout_ms < 1 || c.retries < 0 || c.temperature < 0.0)
        throw std::invalid_argument("endpoint config: value out of range");
    return c;
}

EndpointConfig endpoint_for(std::string base_url)
{
    EndpointConfig c;
    c.base_url = std::move(base_url);
    return c;
}

nlohmann::json EndpointConfig::to_json() const
{
    nlohmann::json doc{{"base_url", base_url},     {"model", model},
                       {"max_tokens", max_tokens}, {"temperature", temperature},
                       {"timeout_ms", timeout_ms}, {"retries", retries}};
    if (!script.empty())
        doc["script"] = script;
    return doc;
}

nlohmann::json StageError::to_json() const
{
    return {{"stage", stage_}, {"message", what()}, {"attempts", attempts_},
            {"unavailable", unavailable_}};
}

nlohmann::json request_body(const EndpointConfig& config, const EndpointRequest& request)
{
    nlohmann::json body = request.extra.is_object() ? request.extra : nlohmann::json::object();
    body["model"] = config.model;
    body["max_tokens"] = config.max_tokens;
    body["temperature"] = config.temperature;
    if (!request.messages.empty())
    {
        nlohmann::json msgs = nlohmann::json::array();
        for (const auto& m : request.messages)
            msgs.push_back({{"role", m.role}, {"content", m.content}});
        body["messages"] = msgs;
    }
    else
    {
        body["text"] = request.text;
    }
    return body;
}

std::optional<std::string> extract_text(const nlohmann::json& response)
{
    if (!response.is_object())
        return std::nullopt;
    if (const auto it = response.find("text"); it != response.end() && it->is_string())
        return it->get<std::string>();
    const auto choices = response.find("choices");
    if (choices == response.end() || !choices->is_array() || choices->empty())
        return std::nullopt;
    const auto& first = (*choices)[0];
    if (!first.is_object())
        return std::nullopt;
    if (const auto msg = first.find("message"); msg != first.end() && msg->is_object())
    {
        if (const auto content = msg->find("content");
            content != msg->end() && content->is_string())
            return content->get<std::string>();
    }
    if (const auto text = first.find("text"); text != first.end() && text->is_string())
        return text->get<std::string>();
    return std::nullopt;
}

std::string user_command_of(const std::string& prompt)
{
    static const std::string marker = "USER COMMAND:";
    const auto pos = prompt.rfind(marker);
    if (pos == std::string::npos)
        return prompt;
    const auto start = pos + marker.size();
    const auto end = prompt.find('\n', start);
    std::string line = prompt.substr(start, end == std::string::npos ? std::string::npos : end - start);
    const auto first = line.find_first_not_of(" \t");
    const auto last = line.find_last_not_of(" \t\r");
    return first == std::string::npos ? std::string() : line.substr(first, last - first + 1);
}

namespace {

std::string input_text(const EndpointRequest& request)
{
    if (request.messages.empty())
        return request.text;
    return request.messages.back().content;
}

class HttpEndpoint final : public TextEndpoint
{
public:
    explicit HttpEndpoint(EndpointConfig config) : config_(std::move(config))
    {
        static const std::regex url(R"(^http://([^/:]+)(:([0-9]{1,5}))?(/.*)?$)");
        std::smatch m;
        if (!std::regex_match(config_.base_url, m, url))
            throw std::invalid_argument("unsupported endpoint url '" + config_.base_url +
                                        "' (expected http://host[:port][/path] or mock://...)");
        host_ = m[1].str();
        port_ = m[3].matched ? std::stoi(m[3].str()) : 80;
        path_ = m[4].matched ? m[4].str() : "/";
        if (port_ < 1 || port_ > 65535)
            throw std::invalid_argument("endpoint port out of range in '" + config_.base_url + "'");
    }

    Completion complete(const EndpointRequest& request, const std::string& stage) override
    {
        const std::string body = request_body(config_, request).dump();
        const int attempts_allowed = config_.retries + 1;
        std::string last_error;
        for (int attempt = 1; attempt <= attempts_allowed; ++attempt)
        {
            httplib::Client client(host_, port_);
            const auto sec = config_.timeout_ms / 1000;
            const auto usec = (config_.timeout_ms % 1000) * 1000;
            client.set_connection_timeout(sec, usec);
            client.set_read_timeout(sec, usec);
            client.set_write_timeout(sec, usec);
            const auto res = client.Post(path_, body, "application/json");
            if (!res)
            {
                last_error = httplib::to_string(res.error());
                continue; // transport failure: retry
            }
            if (res->status < 200 || res->status >= 300)
                throw StageError(stage,
                                 config_.base_url + " returned HTTP " + std::to_string(res->status),
                                 attempt, false);
            nlohmann::json doc;
            try
            {
                doc = nlohmann::json::parse(res->body);
            }
            catch (const nlohmann::json::parse_error&)
            {
                throw StageError(stage, config_.base_url + " returned a non-JSON body", attempt,
                                 false);
            }
            auto text = extract_text(doc);
            if (!text)
                throw StageError(stage, config_.base_url + " response has no text field", attempt,
                                 false);
            return {std::move(*text), attempt};
        }
        throw StageError(stage,
                         config_.base_url + " unreachable after " +
                             std::to_string(attempts_allowed) + " attempt(s): " + last_error,
                         attempts_allowed, true);
    }

private:
    EndpointConfig config_;
    std::string host_;
    int port_ = 80;
    std::string path_;
};

class ScriptEndpoint final : public TextEndpoint
{
public:
    explicit ScriptEndpoint(std::vector<std::string> script) : script_(std::move(script))
    {
        if (script_.empty())
            throw std::invalid_argument("mock://script needs a non-empty \"script\" list");
    }

    Completion complete(const EndpointRequest&, const std::string&) override
    {
        std::lock_guard lock(mutex_);
        const std::string& out = script_[next_ % script_.size()];
        ++next_;
        return {out, 1};
    }

private:
    std::mutex mutex_;
    std::vector<std::string> script_;
    std::size_t next_ = 0;
};

class EchoEndpoint final : public TextEndpoint
{
public:
    Completion complete(const EndpointRequest& request, const std::string&) override
    {
        return {user_command_of(input_text(request)), 1};
    }
};

// Answers with the reference tree of the built-in scenario whose description
// shares the most content words with the command; prose when none overlaps.
class ReferenceEndpoint final : public TextEndpoint
{
public:
    ReferenceEndpoint()
    {
        for (int id = 1; id <= sim::kScenarioCount; ++id)
        {
            const auto s = sim::load_scenario(id);
            const auto words = content_words(s.description);
            entries_.push_back({std::set<std::string>(words.begin(), words.end()),
                                bt::serialize_tree(s.reference_tree)});
        }
    }

    Completion complete(const EndpointRequest& request, const std::string&) override
    {
        const auto words = content_words(user_command_of(input_text(request)));
        const std::set<std::string> command(words.begin(), words.end());
        std::size_t best = 0;
        const Entry* pick = nullptr;
        for (const auto& e : entries_)
        {
            std::size_t overlap = 0;
            for (const auto& w : command)
                overlap += e.words.count(w);
            if (overlap > best)
            {
                best = overlap;
                pick = &e;
            }
        }
        if (pick == nullptr)
            return {"I could not map that command to any known swarm behavior.", 1};
        return {pick->xml, 1};
    }

private:
    struct Entry
    {
        std::set<std::string> words;
        std::string xml;
    };
    std::vector<Entry> entries_;
};

} // namespace

std::shared_ptr<TextEndpoint> make_endpoint(const EndpointConfig& config)
{
    const std::string& url = config.base_url;
    if (url == "mock://reference")
        return std::make_shared<ReferenceEndpoint>();
    if (url == "mock://script")
        return std::make_shared<ScriptEndpoint>(config.script);
    if (url == "mock://echo")
        return std::make_shared<EchoEndpoint>();
    if (url.rfind("mock://", 0) == 0)
        throw std::invalid_argument("unknown mock endpoint '" + url + "'");
    return std::make_shared<HttpEndpoint>(config);
}

} // namespace swarmcmd::nl
