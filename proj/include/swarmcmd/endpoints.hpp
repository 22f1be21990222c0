#pragma once

// Pluggable text endpoints for the language model, translator and safety
// classifier. All share one JSON contract:
//   request  {model, messages | text, max_tokens, temperature, ...}
//   response {"text": "..."} or {"choices":[{"message":{"content":"..."}}]}
// base_url selects the transport: http://host[:port][/path], or one of the
// offline mocks mock://reference, mock://script, mock://echo.

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace swarmcmd::nl {

struct EndpointConfig
{
    std::string base_url;
    std::string model = "default";
    int max_tokens = 1024;
    double temperature = 0.0;
    int timeout_ms = 30000;
    int retries = 0;
    // Responses cycled by mock://script.
    std::vector<std::string> script;

    /// Throws std::invalid_argument on wrong types or out-of-range values.
    static EndpointConfig from_json(const nlohmann::json& doc);
    [[nodiscard]] nlohmann::json to_json() const;
    bool operator==(const EndpointConfig&) const = default;
};

/// Config with defaults for everything but the URL.
EndpointConfig endpoint_for(std::string base_url);

/// Failure of one pipeline stage. `unavailable` marks transport trouble
/// (unreachable, timeout) as opposed to a bad or non-2xx response.
class StageError : public std::runtime_error
{
public:
    StageError(std::string stage, const std::string& message, int attempts, bool unavailable)
        : std::runtime_error(message), stage_(std::move(stage)), attempts_(attempts),
          unavailable_(unavailable)
    {
    }

    [[nodiscard]] const std::string& stage() const { return stage_; }
    [[nodiscard]] int attempts() const { return attempts_; }
    [[nodiscard]] bool unavailable() const { return unavailable_; }
    [[nodiscard]] nlohmann::json to_json() const;

private:
    std::string stage_;
    int attempts_;
    bool unavailable_;
};

struct ChatMessage
{
    std::string role;
    std::string content;
};

struct EndpointRequest
{
    std::vector<ChatMessage> messages; // used when non-empty
    std::string text;                  // otherwise
    // Extra top-level fields merged into the request body.
    nlohmann::json extra = nlohmann::json::object();
};

struct Completion
{
    std::string text;
    int attempts = 1;
};

class TextEndpoint
{
public:
    virtual ~TextEndpoint() = default;
    /// Throws StageError tagged with `stage`.
    virtual Completion complete(const EndpointRequest& request, const std::string& stage) = 0;
};

/// Builds the endpoint named by config.base_url. Throws std::invalid_argument
/// for unsupported schemes.
std::shared_ptr<TextEndpoint> make_endpoint(const EndpointConfig& config);

/// Request body sent over HTTP.
nlohmann::json request_body(const EndpointConfig& config, const EndpointRequest& request);

/// Pulls the completion text out of a response document; nullopt when the
/// shape is not recognized.
std::optional<std::string> extract_text(const nlohmann::json& response);

/// The last "USER COMMAND:" line of a rendered prompt, or the whole text.
std::string user_command_of(const std::string& prompt);

} // namespace swarmcmd::nl
