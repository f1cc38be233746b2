#include "ssm/blackbox_client.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/process.hpp>

#include <chrono>
#include <sstream>

namespace ssm {

namespace bp = boost::process;
using nlohmann::json;

namespace {

class StdioTransport final : public Transport {
public:
    explicit StdioTransport(const std::vector<std::string>& argv) : command_(argv.empty() ? "" : argv.front()) {
        if (argv.empty()) throw ValidationError("stdio endpoint needs a command");
        boost::filesystem::path exe = command_;
        if (command_.find('/') == std::string::npos) exe = bp::search_path(command_);
        if (exe.empty()) throw ValidationError("stdio endpoint: command not found: " + command_);
        std::vector<std::string> args(argv.begin() + 1, argv.end());
        try {
            child_ = bp::child(exe, bp::args(args), bp::std_in < in_, bp::std_out > out_);
        } catch (const bp::process_error& e) {
            throw ValidationError("stdio endpoint: cannot start " + command_ + ": " + e.what());
        }
    }

    ~StdioTransport() override {
        try {
            in_.pipe().close();
            if (child_.valid() && !child_.wait_for(std::chrono::seconds(5))) child_.terminate();
        } catch (...) {
        }
    }

    void send_line(const std::string& line) override {
        in_ << line << '\n' << std::flush;
        if (!in_) throw NumericalError("external black box " + command_ + ": write failed");
    }

    std::string recv_line() override {
        std::string line;
        if (!std::getline(out_, line)) throw NumericalError("external black box " + command_ + ": stream closed");
        return line;
    }

    std::string describe() const override { return "stdio:" + command_; }

private:
    std::string command_;
    bp::opstream in_;
    bp::ipstream out_;
    bp::child child_;
};

class TcpTransport final : public Transport {
public:
    TcpTransport(const std::string& host, int port, double timeout_s)
        : where_(host + ":" + std::to_string(port)),
          timeout_(std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0))) {
        stream_.expires_after(timeout_);
        stream_.connect(host, std::to_string(port));
        if (!stream_) throw NumericalError("tcp endpoint " + where_ + ": " + stream_.error().message());
    }

    void send_line(const std::string& line) override {
        stream_.expires_after(timeout_);
        stream_ << line << '\n' << std::flush;
        if (!stream_) throw NumericalError("tcp endpoint " + where_ + ": write failed");
    }

    std::string recv_line() override {
        stream_.expires_after(timeout_);
        std::string line;
        if (!std::getline(stream_, line)) throw NumericalError("tcp endpoint " + where_ + ": stream closed");
        return line;
    }

    std::string describe() const override { return "tcp:" + where_; }

private:
    std::string where_;
    std::chrono::milliseconds timeout_;
    boost::asio::ip::tcp::iostream stream_;
};

std::vector<double> to_list(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

std::unique_ptr<Transport> spawn_stdio_transport(const std::vector<std::string>& argv) {
    return std::make_unique<StdioTransport>(argv);
}

std::unique_ptr<Transport> connect_tcp_transport(const std::string& host, int port, double timeout_s) {
    if (port <= 0 || port > 65535) throw ValidationError("tcp endpoint: invalid port " + std::to_string(port));
    return std::make_unique<TcpTransport>(host, port, timeout_s);
}

std::unique_ptr<Transport> open_endpoint(const std::string& endpoint) {
    if (endpoint.rfind("stdio:", 0) == 0) {
        std::istringstream is(endpoint.substr(6));
        std::vector<std::string> argv;
        for (std::string tok; is >> tok;) argv.push_back(tok);
        return spawn_stdio_transport(argv);
    }
    if (endpoint.rfind("tcp:", 0) == 0) {
        const std::string rest = endpoint.substr(4);
        const auto colon = rest.rfind(':');
        if (colon == std::string::npos) throw ValidationError("tcp endpoint must be tcp:<host>:<port>");
        int port = 0;
        try {
            port = std::stoi(rest.substr(colon + 1));
        } catch (const std::exception&) {
            throw ValidationError("tcp endpoint: invalid port in " + endpoint);
        }
        return connect_tcp_transport(rest.substr(0, colon), port);
    }
    throw ValidationError("unknown endpoint '" + endpoint + "' (expected stdio:... or tcp:host:port)");
}

std::string to_string(EvalKind kind) {
    switch (kind) {
        case EvalKind::Full: return "full";
        case EvalKind::Even: return "even";
        case EvalKind::Odd: return "odd";
    }
    return "full";
}

BlackBoxClient::BlackBoxClient(std::unique_ptr<Transport> transport, ClientOptions opts)
    : transport_(std::move(transport)), opts_(opts) {
    if (opts_.batch_size == 0) throw ValidationError("batch_size must be positive");
    const std::string line = transport_->recv_line();
    json h;
    try {
        h = json::parse(line);
        header_.version = h.at("version").get<int>();
        header_.dofs = h.at("n").get<Index>();
        header_.serial = h.value("serial", true);
        header_.kinds = h.value("kinds", std::vector<std::string>{"full"});
        header_.name = h.value("name", std::string());
        if (h.at("protocol").get<std::string>() != "ssm-blackbox") throw ValidationError("unknown protocol");
    } catch (const json::exception& e) {
        throw ValidationError(transport_->describe() + ": bad protocol header: " + e.what());
    }
    header_.raw = h;
    if (header_.version != kProtocolVersion)
        throw ValidationError(transport_->describe() + ": protocol version " + std::to_string(header_.version) +
                              " not supported (client speaks " + std::to_string(kProtocolVersion) + ")");
    if (header_.dofs <= 0) throw ValidationError(transport_->describe() + ": header reports n <= 0");
}

BlackBoxClient::~BlackBoxClient() {
    try {
        shutdown();
    } catch (...) {
    }
}

json BlackBoxClient::request(const Vec& x, const Vec& xdot, EvalKind kind) {
    if (x.size() != header_.dofs || xdot.size() != header_.dofs)
        throw ValidationError("black box request: vectors must have length " + std::to_string(header_.dofs));
    return {{"id", next_id_++}, {"kind", to_string(kind)}, {"x", to_list(x)}, {"xdot", to_list(xdot)}};
}

Vec BlackBoxClient::parse_response(const json& r, std::int64_t id) const {
    try {
        if (r.at("id").get<std::int64_t>() != id)
            throw NumericalError(transport_->describe() + ": response id " + r.at("id").dump() +
                                 " does not match request " + std::to_string(id));
        if (r.value("status", std::string()) != "ok")
            throw NumericalError(transport_->describe() + ": request " + std::to_string(id) +
                                 " failed: " + r.value("error", std::string("unknown error")));
        const auto f = r.at("f").get<std::vector<double>>();
        if (static_cast<Index>(f.size()) != header_.dofs)
            throw NumericalError(transport_->describe() + ": response length mismatch");
        return Eigen::Map<const Vec>(f.data(), static_cast<Index>(f.size()));
    } catch (const json::exception& e) {
        throw NumericalError(transport_->describe() + ": malformed response: " + e.what());
    }
}

json BlackBoxClient::exchange(const json& message) {
    std::lock_guard lock(mutex_);
    if (closed_) throw NumericalError(transport_->describe() + ": connection closed");
    const auto t0 = std::chrono::steady_clock::now();
    transport_->send_line(message.dump());
    const std::string line = transport_->recv_line();
    stats_.round_trips++;
    stats_.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw NumericalError(transport_->describe() + ": unparsable reply: " + e.what());
    }
}

Vec BlackBoxClient::evaluate(const Vec& x, const Vec& xdot, EvalKind kind) {
    json req;
    {
        std::lock_guard lock(mutex_);
        req = request(x, xdot, kind);
        stats_.requests++;
    }
    return parse_response(exchange(req), req["id"].get<std::int64_t>());
}

std::vector<Vec> BlackBoxClient::evaluate_batch(std::span<const Vec> states, EvalKind kind) {
    const Index n = header_.dofs;
    std::vector<Vec> out;
    out.reserve(states.size());
    for (std::size_t start = 0; start < states.size(); start += opts_.batch_size) {
        const std::size_t stop = std::min(states.size(), start + opts_.batch_size);
        json batch = json::array();
        std::vector<std::int64_t> ids;
        {
            std::lock_guard lock(mutex_);
            for (std::size_t i = start; i < stop; ++i) {
                if (states[i].size() != 2 * n)
                    throw ValidationError("black box batch: states must have length " + std::to_string(2 * n));
                batch.push_back(request(states[i].head(n), states[i].tail(n), kind));
                ids.push_back(batch.back()["id"].get<std::int64_t>());
            }
            stats_.requests += ids.size();
        }
        const json reply = exchange(batch);
        if (!reply.is_array() || reply.size() != ids.size())
            throw NumericalError(transport_->describe() + ": batch reply has the wrong shape");
        for (std::size_t i = 0; i < ids.size(); ++i) out.push_back(parse_response(reply[i], ids[i]));
    }
    return out;
}

void BlackBoxClient::shutdown() {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    closed_ = true;
    transport_->send_line(json{{"id", next_id_++}, {"kind", "shutdown"}}.dump());
    transport_->recv_line();
}

RemoteNonlinearity::RemoteNonlinearity(std::shared_ptr<BlackBoxClient> client) : client_(std::move(client)) {
    if (!client_) throw ValidationError("RemoteNonlinearity needs a client");
}

Vec RemoteNonlinearity::evaluate(const Vec& x, const Vec& xdot) const { return client_->evaluate(x, xdot); }

std::vector<Vec> RemoteNonlinearity::evaluate_batch(std::span<const Vec> states) const {
    return client_->evaluate_batch(states);
}

}  // namespace ssm
