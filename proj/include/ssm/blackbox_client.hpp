#pragma once

#include "ssm/model.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace ssm {

inline constexpr int kProtocolVersion = 1;

/// Line transport for the newline-delimited JSON protocol.
class Transport {
public:
    virtual ~Transport() = default;
    virtual void send_line(const std::string& line) = 0;
    // Throws NumericalError when the peer closed the stream.
    virtual std::string recv_line() = 0;
    virtual std::string describe() const = 0;
};

/// Starts argv[0] with the remaining arguments and talks over its stdin/stdout.
std::unique_ptr<Transport> spawn_stdio_transport(const std::vector<std::string>& argv);
/// Connects to host:port (localhost deployments).
std::unique_ptr<Transport> connect_tcp_transport(const std::string& host, int port, double timeout_s = 30.0);

/// "stdio:<command> [args...]" or "tcp:<host>:<port>".
std::unique_ptr<Transport> open_endpoint(const std::string& endpoint);

enum class EvalKind { Full, Even, Odd };
std::string to_string(EvalKind kind);

struct ProtocolHeader {
    int version = 0;
    Index dofs = 0;
    bool serial = true;
    std::vector<std::string> kinds;
    std::string name;
    nlohmann::json raw;
};

struct ClientStats {
    std::uint64_t requests = 0;
    std::uint64_t round_trips = 0;
    double seconds = 0.0;
};

struct ClientOptions {
    std::size_t batch_size = 256;  // requests per message; 1 sends single objects
};

/// Client side of the black-box protocol. Calls are serialized internally.
class BlackBoxClient {
public:
    explicit BlackBoxClient(std::unique_ptr<Transport> transport, ClientOptions opts = {});
    ~BlackBoxClient();
    BlackBoxClient(const BlackBoxClient&) = delete;
    BlackBoxClient& operator=(const BlackBoxClient&) = delete;

    const ProtocolHeader& header() const { return header_; }
    const ClientStats& stats() const { return stats_; }

    Vec evaluate(const Vec& x, const Vec& xdot, EvalKind kind = EvalKind::Full);
    // States are z = (x, xdot); responses come back in request order.
    std::vector<Vec> evaluate_batch(std::span<const Vec> states, EvalKind kind = EvalKind::Full);

    // Sends one raw line and returns the raw reply (diagnostics and tests).
    nlohmann::json exchange(const nlohmann::json& message);

    void shutdown();

private:
    nlohmann::json request(const Vec& x, const Vec& xdot, EvalKind kind);
    Vec parse_response(const nlohmann::json& r, std::int64_t id) const;

    std::unique_ptr<Transport> transport_;
    ClientOptions opts_;
    ProtocolHeader header_;
    ClientStats stats_;
    std::int64_t next_id_ = 1;
    bool closed_ = false;
    std::mutex mutex_;
};

/// Nonlinearity served by an external process. Declares itself serial.
class RemoteNonlinearity final : public Nonlinearity {
public:
    explicit RemoteNonlinearity(std::shared_ptr<BlackBoxClient> client);

    Index dofs() const override { return client_->header().dofs; }
    Vec evaluate(const Vec& x, const Vec& xdot) const override;
    std::vector<Vec> evaluate_batch(std::span<const Vec> states) const override;
    bool reentrant() const override { return false; }

    const BlackBoxClient& client() const { return *client_; }

private:
    std::shared_ptr<BlackBoxClient> client_;
};

}  // namespace ssm
