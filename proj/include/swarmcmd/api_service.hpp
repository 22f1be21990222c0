#pragma once

// HTTP + WebSocket service over pipeline sessions.
//
//   POST   /sessions                 {scenario_id, seed?}        -> 201 {session_id, ...}
//   GET    /sessions                                              -> 200 [session summaries]
//   POST   /sessions/{id}/command    {text | audio_ref, language?, shots?}
//                                                                 -> 200 trace, 503 trace when an
//                                                                    external endpoint is down
//   POST   /sessions/{id}/stop                                    -> 200 {stopped, tick}
//   GET    /sessions/{id}/trace                                   -> 200 [traces]
//   GET    /sessions/{id}/state                                   -> 200 snapshot
//   DELETE /sessions/{id}                                         -> 200
//   GET    /health                                                -> 200
//   WS     /sessions/{id}/stream   snapshots {"type":"snapshot",...} and
//                                  {"type":"trace_stage", trace_id, stage, payload}
//
// Unknown sessions are 404, malformed bodies 422.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "swarmcmd/pipeline.hpp"

namespace swarmcmd::api {

struct ServiceConfig
{
    std::string bind = "127.0.0.1";
    std::uint16_t port = 8080; // 0 picks a free port
    int io_threads = 2;
    int worker_threads = 4;
    double tick_hz = 30.0;     // simulation rate per session; 0 runs unthrottled
    double snapshot_hz = 30.0; // WebSocket snapshot cap per session

    /// Reads the optional "service" object of a config document.
    static ServiceConfig from_json(const nlohmann::json& doc);
};

struct Response
{
    unsigned status = 200;
    nlohmann::json body;
};

class ApiService
{
public:
    ApiService(ServiceConfig config, std::shared_ptr<const nl::PipelineServices> services);
    ~ApiService();

    ApiService(const ApiService&) = delete;
    ApiService& operator=(const ApiService&) = delete;

    /// Binds and starts serving. Throws std::runtime_error when binding fails.
    void start();
    /// Closes sessions, streams and the listener; idempotent.
    void stop();
    /// Blocks until SIGINT/SIGTERM or stop().
    void wait();

    [[nodiscard]] std::uint16_t port() const;
    [[nodiscard]] std::string address() const;

    /// The routing layer without the transport.
    Response handle(std::string_view method, std::string_view target, std::string_view body);

    struct Impl; // opaque

private:
    std::shared_ptr<Impl> impl_;
};

} // namespace swarmcmd::api
