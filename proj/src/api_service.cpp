#include "swarmcmd/api_service.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <csignal>
#include <deque>
#include <map>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace swarmcmd::api {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

ServiceConfig ServiceConfig::from_json(const nlohmann::json& doc)
{
    ServiceConfig c;
    if (!doc.is_object())
        return c;
    const auto it = doc.find("service");
    if (it == doc.end() || it->is_null())
        return c;
    if (!it->is_object())
        throw std::invalid_argument("config: service must be an object");
    try
    {
        c.bind = it->value("bind", c.bind);
        const int port = it->value("port", static_cast<int>(c.port));
        if (port < 0 || port > 65535)
            throw std::invalid_argument("config: service port out of range");
        c.port = static_cast<std::uint16_t>(port);
        c.io_threads = it->value("io_threads", c.io_threads);
        c.worker_threads = it->value("worker_threads", c.worker_threads);
        c.tick_hz = it->value("tick_hz", c.tick_hz);
        c.snapshot_hz = it->value("snapshot_hz", c.snapshot_hz);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw std::invalid_argument(std::string("config: service: ") + e.what());
    }
    if (c.io_threads < 1 || c.worker_threads < 1 || c.tick_hz < 0.0 || !(c.snapshot_hz > 0.0))
        throw std::invalid_argument("config: service value out of range");
    return c;
}

namespace {

class WsConnection;

nlohmann::json error_body(const std::string& message)
{
    return {{"error", message}};
}

std::vector<std::string> split_path(std::string_view target)
{
    if (const auto q = target.find('?'); q != std::string_view::npos)
        target = target.substr(0, q);
    std::vector<std::string> parts;
    std::size_t i = 0;
    while (i < target.size())
    {
        while (i < target.size() && target[i] == '/')
            ++i;
        const std::size_t start = i;
        while (i < target.size() && target[i] != '/')
            ++i;
        if (i > start)
            parts.emplace_back(target.substr(start, i - start));
    }
    return parts;
}

std::string random_id()
{
    static std::mutex mu;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(mu);
    char buf[24];
    std::snprintf(buf, sizeof buf, "s-%012llx",
                  static_cast<unsigned long long>(rng() & 0xFFFFFFFFFFFFULL));
    return buf;
}

} // namespace

// ---------------------------------------------------------------------------
// Per-session runtime: simulation loop plus stream fan-out.
// ---------------------------------------------------------------------------

struct SessionRuntime
{
    struct Subscriber
    {
        std::shared_ptr<WsConnection> conn;
        std::int64_t last_tick = -1;
    };

    std::shared_ptr<nl::Session> session;
    std::chrono::system_clock::time_point created;

    std::mutex mu; // guards subscribers, wake, last_push
    std::condition_variable cv;
    bool wake = false;
    std::atomic<bool> stopping{false};
    std::vector<Subscriber> subscribers;
    std::chrono::steady_clock::time_point last_push{};
    std::thread loop;

    void publish_snapshot(const nlohmann::json& snapshot, bool force, double max_hz);
    void publish_event(const nlohmann::json& event);
    void subscribe(const std::shared_ptr<WsConnection>& conn);
    void unsubscribe(const WsConnection* conn);
    void close_subscribers();
};

namespace {

class WsConnection : public std::enable_shared_from_this<WsConnection>
{
public:
    WsConnection(tcp::socket&& socket, std::shared_ptr<SessionRuntime> runtime)
        : ws_(std::move(socket)), runtime_(std::move(runtime))
    {
    }

    void run(http::request<http::string_body> req)
    {
        req_ = std::move(req);
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req_, beast::bind_front_handler(&WsConnection::on_accept, shared_from_this()));
    }

    void send(std::shared_ptr<const std::string> message)
    {
        net::post(ws_.get_executor(), [self = shared_from_this(), message] {
            if (self->closed_)
                return;
            if (self->queue_.size() > 4096)
            {
                self->fail();
                return;
            }
            self->queue_.push_back(message);
            if (self->queue_.size() == 1)
                self->do_write();
        });
    }

    void close()
    {
        net::post(ws_.get_executor(), [self = shared_from_this()] {
            self->close_requested_ = true;
            if (self->queue_.empty())
                self->do_close();
        });
    }

private:
    void on_accept(beast::error_code ec)
    {
        if (ec)
            return;
        runtime_->subscribe(shared_from_this());
        do_read();
    }

    void do_read()
    {
        ws_.async_read(buffer_, beast::bind_front_handler(&WsConnection::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t)
    {
        if (ec)
        {
            fail();
            return;
        }
        buffer_.consume(buffer_.size()); // client messages are ignored
        do_read();
    }

    void do_write()
    {
        ws_.text(true);
        ws_.async_write(net::buffer(*queue_.front()),
                        beast::bind_front_handler(&WsConnection::on_write, shared_from_this()));
    }

    void on_write(beast::error_code ec, std::size_t)
    {
        if (ec)
        {
            fail();
            return;
        }
        queue_.pop_front();
        if (!queue_.empty())
            do_write();
        else if (close_requested_)
            do_close();
    }

    void do_close()
    {
        if (closed_)
            return;
        closed_ = true;
        runtime_->unsubscribe(this);
        ws_.async_close(websocket::close_code::normal,
                        [self = shared_from_this()](beast::error_code) {});
    }

    void fail()
    {
        if (closed_)
            return;
        closed_ = true;
        queue_.clear();
        runtime_->unsubscribe(this);
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> req_;
    std::deque<std::shared_ptr<const std::string>> queue_;
    std::shared_ptr<SessionRuntime> runtime_;
    bool closed_ = false;
    bool close_requested_ = false;
};

} // namespace

void SessionRuntime::publish_snapshot(const nlohmann::json& snapshot, bool force, double max_hz)
{
    std::lock_guard lock(mu);
    const auto now = std::chrono::steady_clock::now();
    if (!force && now - last_push < std::chrono::duration<double>(1.0 / max_hz))
        return;
    last_push = now;
    const std::int64_t tick = snapshot.at("tick").get<std::int64_t>();
    nlohmann::json message = snapshot;
    message["type"] = "snapshot";
    auto text = std::make_shared<const std::string>(message.dump());
    for (auto& sub : subscribers)
    {
        if (tick > sub.last_tick)
        {
            sub.last_tick = tick;
            sub.conn->send(text);
        }
    }
}

void SessionRuntime::publish_event(const nlohmann::json& event)
{
    std::lock_guard lock(mu);
    auto text = std::make_shared<const std::string>(event.dump());
    for (auto& sub : subscribers)
        sub.conn->send(text);
}

void SessionRuntime::subscribe(const std::shared_ptr<WsConnection>& conn)
{
    // The current state goes out first so a new subscriber starts from the
    // live tick.
    nlohmann::json snap = session->snapshot();
    std::lock_guard lock(mu);
    if (stopping)
    {
        conn->close();
        return;
    }
    Subscriber sub{conn, snap.at("tick").get<std::int64_t>()};
    snap["type"] = "snapshot";
    conn->send(std::make_shared<const std::string>(snap.dump()));
    subscribers.push_back(std::move(sub));
}

void SessionRuntime::unsubscribe(const WsConnection* conn)
{
    std::lock_guard lock(mu);
    subscribers.erase(std::remove_if(subscribers.begin(), subscribers.end(),
                                     [conn](const Subscriber& s) { return s.conn.get() == conn; }),
                      subscribers.end());
}

void SessionRuntime::close_subscribers()
{
    std::vector<Subscriber> subs;
    {
        std::lock_guard lock(mu);
        subs.swap(subscribers);
    }
    for (auto& s : subs)
        s.conn->close();
}

// ---------------------------------------------------------------------------
// Service
// ---------------------------------------------------------------------------

struct ApiService::Impl
{
    ServiceConfig config;
    std::shared_ptr<const nl::PipelineServices> services;

    net::io_context ioc;
    std::optional<net::executor_work_guard<net::io_context::executor_type>> work;
    std::optional<tcp::acceptor> acceptor;
    std::unique_ptr<net::thread_pool> workers;
    std::vector<std::thread> io_threads;
    std::uint16_t bound_port = 0;
    std::atomic<bool> running{false};

    std::mutex sessions_mu;
    std::map<std::string, std::shared_ptr<SessionRuntime>> sessions;

    Impl(ServiceConfig c, std::shared_ptr<const nl::PipelineServices> s)
        : config(std::move(c)), services(std::move(s)), ioc(config.io_threads)
    {
    }

    std::shared_ptr<SessionRuntime> find(const std::string& id)
    {
        std::lock_guard lock(sessions_mu);
        const auto it = sessions.find(id);
        return it == sessions.end() ? nullptr : it->second;
    }

    void run_loop(SessionRuntime& rt)
    {
        const double hz = config.tick_hz;
        auto next = std::chrono::steady_clock::now();
        while (!rt.stopping)
        {
            {
                std::unique_lock lock(rt.mu);
                rt.cv.wait_for(lock, std::chrono::milliseconds(100),
                               [&] { return rt.wake || rt.stopping.load(); });
                rt.wake = false;
            }
            next = std::chrono::steady_clock::now();
            while (!rt.stopping && rt.session->active())
            {
                const auto r = rt.session->step();
                if (r.advanced || r.finished)
                    rt.publish_snapshot(rt.session->snapshot(), r.finished.has_value(),
                                        config.snapshot_hz);
                if (hz > 0.0)
                {
                    next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                        std::chrono::duration<double>(1.0 / hz));
                    std::unique_lock lock(rt.mu);
                    rt.cv.wait_until(lock, next, [&] { return rt.stopping.load(); });
                }
            }
        }
    }

    std::shared_ptr<SessionRuntime> create_session(int scenario_id, std::uint64_t seed)
    {
        auto rt = std::make_shared<SessionRuntime>();
        const std::string id = random_id();
        rt->session = std::make_shared<nl::Session>(id, scenario_id, seed, services);
        rt->created = std::chrono::system_clock::now();
        std::weak_ptr<SessionRuntime> weak = rt;
        rt->session->set_observer([weak](const std::string& trace_id, const std::string& stage,
                                         const nlohmann::json& payload) {
            if (auto r = weak.lock())
                r->publish_event({{"type", "trace_stage"},
                                  {"trace_id", trace_id},
                                  {"stage", stage},
                                  {"payload", payload}});
        });
        rt->loop = std::thread([this, raw = rt.get()] { run_loop(*raw); });
        std::lock_guard lock(sessions_mu);
        sessions[id] = rt;
        return rt;
    }

    static void shutdown_runtime(SessionRuntime& rt)
    {
        {
            std::lock_guard lock(rt.mu);
            rt.stopping = true;
        }
        rt.cv.notify_all();
        if (rt.loop.joinable())
        {
            if (rt.loop.get_id() == std::this_thread::get_id())
                rt.loop.detach();
            else
                rt.loop.join();
        }
        rt.close_subscribers();
    }

    Response route(std::string_view method, std::string_view target, std::string_view body);
    Response command(SessionRuntime& rt, std::string_view body);

    void do_accept();
};

Response ApiService::Impl::command(SessionRuntime& rt, std::string_view body)
{
    const auto doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        return {422, error_body("body must be a JSON object")};
    nl::CommandInput input;
    const auto text = doc.find("text");
    const auto audio = doc.find("audio_ref");
    if (text != doc.end() && text->is_string())
    {
        input.modality = nl::Modality::Text;
        input.raw_text = text->get<std::string>();
    }
    else if (audio != doc.end() && audio->is_string())
    {
        input.modality = nl::Modality::AudioReference;
        input.audio_ref = audio->get<std::string>();
    }
    else
    {
        return {422, error_body("\"text\" (or \"audio_ref\") must be a string")};
    }
    if (const auto it = doc.find("language"); it != doc.end() && !it->is_null())
    {
        if (!it->is_string())
            return {422, error_body("\"language\" must be a string")};
        input.language_hint = it->get<std::string>();
    }
    if (const auto it = doc.find("shots"); it != doc.end() && !it->is_null())
    {
        if (!it->is_number_integer() || it->get<int>() < 0 || it->get<int>() > 2)
            return {422, error_body("\"shots\" must be 0, 1 or 2")};
        input.shots = it->get<int>();
    }

    const nl::PipelineTrace trace = rt.session->handle_command(std::move(input));
    if (trace.execution_status == nl::ExecutionStatus::Running)
    {
        {
            std::lock_guard lock(rt.mu);
            rt.wake = true;
        }
        rt.cv.notify_all();
    }
    return {trace.endpoint_unavailable() ? 503u : 200u, trace.to_json()};
}

Response ApiService::Impl::route(std::string_view method, std::string_view target,
                                 std::string_view body)
{
    const auto parts = split_path(target);
    auto not_allowed = [] { return Response{405, error_body("method not allowed")}; };

    if (parts.size() == 1 && parts[0] == "health")
    {
        if (method != "GET")
            return not_allowed();
        std::lock_guard lock(sessions_mu);
        return {200, {{"status", "ok"}, {"sessions", sessions.size()}}};
    }
    if (parts.empty() || parts[0] != "sessions")
        return {404, error_body("no such route")};

    if (parts.size() == 1)
    {
        if (method == "GET")
        {
            nlohmann::json list = nlohmann::json::array();
            std::lock_guard lock(sessions_mu);
            for (const auto& [id, rt] : sessions)
                list.push_back({{"session_id", id},
                                {"scenario_id", rt->session->scenario_id()},
                                {"seed", rt->session->seed()},
                                {"tick", rt->session->tick()},
                                {"active", rt->session->active()}});
            return {200, list};
        }
        if (method != "POST")
            return not_allowed();
        const auto doc = nlohmann::json::parse(body, nullptr, false);
        if (doc.is_discarded() || !doc.is_object())
            return {422, error_body("body must be a JSON object")};
        const auto sid = doc.find("scenario_id");
        if (sid == doc.end() || !sid->is_number_integer())
            return {422, error_body("\"scenario_id\" must be an integer")};
        const int scenario_id = sid->get<int>();
        if (scenario_id < 1 || scenario_id > sim::kScenarioCount)
            return {422, error_body("unknown scenario " + std::to_string(scenario_id))};
        std::uint64_t seed = sim::kDefaultSeed;
        if (const auto it = doc.find("seed"); it != doc.end() && !it->is_null())
        {
            if (!it->is_number_unsigned())
                return {422, error_body("\"seed\" must be a non-negative integer")};
            seed = it->get<std::uint64_t>();
        }
        auto rt = create_session(scenario_id, seed);
        return {201,
                {{"session_id", rt->session->id()}, {"scenario_id", scenario_id}, {"seed", seed}}};
    }

    auto rt = find(parts[1]);
    if (!rt)
        return {404, error_body("unknown session '" + parts[1] + "'")};

    if (parts.size() == 2)
    {
        if (method != "DELETE")
            return not_allowed();
        {
            std::lock_guard lock(sessions_mu);
            sessions.erase(parts[1]);
        }
        shutdown_runtime(*rt);
        return {200, {{"deleted", parts[1]}}};
    }
    if (parts.size() != 3)
        return {404, error_body("no such route")};

    const std::string& leaf = parts[2];
    if (leaf == "command")
    {
        if (method != "POST")
            return not_allowed();
        return command(*rt, body);
    }
    if (leaf == "stop")
    {
        if (method != "POST")
            return not_allowed();
        const bool stopped = rt->session->stop();
        const auto snap = rt->session->snapshot();
        if (stopped)
            rt->publish_snapshot(snap, true, config.snapshot_hz);
        return {200, {{"stopped", stopped}, {"tick", snap.at("tick")}}};
    }
    if (leaf == "trace")
    {
        if (method != "GET")
            return not_allowed();
        nlohmann::json list = nlohmann::json::array();
        for (const auto& t : rt->session->traces())
            list.push_back(t.to_json());
        return {200, list};
    }
    if (leaf == "state")
    {
        if (method != "GET")
            return not_allowed();
        return {200, rt->session->snapshot()};
    }
    if (leaf == "stream")
        return {426, error_body("WebSocket upgrade required")};
    return {404, error_body("no such route")};
}

namespace {

class HttpConnection : public std::enable_shared_from_this<HttpConnection>
{
public:
    HttpConnection(tcp::socket&& socket, ApiService::Impl* svc)
        : stream_(std::move(socket)), svc_(svc)
    {
    }

    void run()
    {
        net::dispatch(stream_.get_executor(),
                      beast::bind_front_handler(&HttpConnection::do_read, shared_from_this()));
    }

private:
    void do_read()
    {
        parser_.emplace();
        parser_->body_limit(1 << 20);
        stream_.expires_after(std::chrono::seconds(60));
        http::async_read(stream_, buffer_, *parser_,
                         beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t)
    {
        if (ec == http::error::end_of_stream)
        {
            beast::error_code ignored;
            stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
            return;
        }
        if (ec)
            return;
        auto req = parser_->release();

        if (websocket::is_upgrade(req))
        {
            const auto parts = split_path(std::string_view(req.target().data(), req.target().size()));
            std::shared_ptr<SessionRuntime> rt;
            if (parts.size() == 3 && parts[0] == "sessions" && parts[2] == "stream")
                rt = svc_->find(parts[1]);
            if (!rt)
            {
                write({404, error_body("unknown stream")}, req.version(), false);
                return;
            }
            stream_.expires_never();
            std::make_shared<WsConnection>(stream_.release_socket(), rt)->run(std::move(req));
            return;
        }

        const unsigned version = req.version();
        const bool keep_alive = req.keep_alive();
        auto shared_req = std::make_shared<http::request<http::string_body>>(std::move(req));
        net::post(*svc_->workers, [self = shared_from_this(), shared_req, version, keep_alive] {
            Response r;
            try
            {
                const auto& rq = *shared_req;
                r = self->svc_->route(
                    std::string_view(rq.method_string().data(), rq.method_string().size()),
                    std::string_view(rq.target().data(), rq.target().size()), rq.body());
            }
            catch (const std::exception& e)
            {
                r = {500, error_body(e.what())};
            }
            net::post(self->stream_.get_executor(), [self, r = std::move(r), version, keep_alive] {
                self->write(r, version, keep_alive);
            });
        });
    }

    void write(const Response& r, unsigned version, bool keep_alive)
    {
        res_ = {};
        res_.version(version);
        res_.result(static_cast<http::status>(r.status));
        res_.set(http::field::content_type, "application/json");
        res_.set(http::field::access_control_allow_origin, "*");
        res_.keep_alive(keep_alive);
        res_.body() = r.body.is_null() ? std::string() : r.body.dump();
        res_.prepare_payload();
        http::async_write(stream_, res_,
                          beast::bind_front_handler(&HttpConnection::on_write, shared_from_this(),
                                                    res_.need_eof()));
    }

    void on_write(bool close, beast::error_code ec, std::size_t)
    {
        if (ec)
            return;
        if (close)
        {
            beast::error_code ignored;
            stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
            return;
        }
        do_read();
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    std::optional<http::request_parser<http::string_body>> parser_;
    http::response<http::string_body> res_;
    ApiService::Impl* svc_;
};

} // namespace

void ApiService::Impl::do_accept()
{
    acceptor->async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
        if (!ec)
            std::make_shared<HttpConnection>(std::move(socket), this)->run();
        if (acceptor && acceptor->is_open())
            do_accept();
    });
}

ApiService::ApiService(ServiceConfig config, std::shared_ptr<const nl::PipelineServices> services)
    : impl_(std::make_shared<Impl>(std::move(config), std::move(services)))
{
    if (!impl_->services)
        throw std::invalid_argument("ApiService needs pipeline services");
}

ApiService::~ApiService()
{
    stop();
}

void ApiService::start()
{
    Impl& s = *impl_;
    if (s.running.exchange(true))
        return;
    try
    {
        const auto address = net::ip::make_address(s.config.bind);
        const tcp::endpoint endpoint{address, s.config.port};
        s.acceptor.emplace(net::make_strand(s.ioc));
        s.acceptor->open(endpoint.protocol());
        s.acceptor->set_option(net::socket_base::reuse_address(true));
        s.acceptor->bind(endpoint);
        s.acceptor->listen(net::socket_base::max_listen_connections);
        s.bound_port = s.acceptor->local_endpoint().port();
    }
    catch (const std::exception& e)
    {
        s.acceptor.reset();
        s.running = false;
        throw std::runtime_error("cannot listen on " + s.config.bind + ":" +
                                 std::to_string(s.config.port) + ": " + e.what());
    }
    s.workers = std::make_unique<net::thread_pool>(static_cast<std::size_t>(s.config.worker_threads));
    s.work.emplace(net::make_work_guard(s.ioc));
    s.do_accept();
    for (int i = 0; i < s.config.io_threads; ++i)
        s.io_threads.emplace_back([&s] { s.ioc.run(); });
}

void ApiService::stop()
{
    Impl& s = *impl_;
    const bool was_running = s.running.exchange(false);
    if (was_running)
        net::post(s.acceptor->get_executor(), [&s] {
            beast::error_code ignored;
            s.acceptor->close(ignored);
        });
    // Sessions exist without a listener when driven through handle().
    std::map<std::string, std::shared_ptr<SessionRuntime>> sessions;
    {
        std::lock_guard lock(s.sessions_mu);
        sessions.swap(s.sessions);
    }
    for (auto& [id, rt] : sessions)
        Impl::shutdown_runtime(*rt);
    if (!was_running)
        return;
    // Give queued close frames a moment to flush before tearing down I/O.
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    s.workers->join();
    s.work.reset();
    s.ioc.stop();
    for (auto& t : s.io_threads)
        t.join();
    s.io_threads.clear();
}

void ApiService::wait()
{
    net::io_context signals_ioc;
    net::signal_set signals(signals_ioc, SIGINT, SIGTERM);
    signals.async_wait([this](const beast::error_code& ec, int) {
        if (!ec)
            stop();
    });
    while (impl_->running)
        signals_ioc.run_for(std::chrono::milliseconds(200));
}

std::uint16_t ApiService::port() const
{
    return impl_->bound_port;
}

std::string ApiService::address() const
{
    return "http://" + impl_->config.bind + ":" + std::to_string(impl_->bound_port);
}

Response ApiService::handle(std::string_view method, std::string_view target, std::string_view body)
{
    try
    {
        return impl_->route(method, target, body);
    }
    catch (const std::exception& e)
    {
        return {500, error_body(e.what())};
    }
}

} // namespace swarmcmd::api
