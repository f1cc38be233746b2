// Minimal black-box server for the protocol tests: serves the nonlinearity of a
// built-in model over stdio or a localhost TCP socket.

#include "ssm/models.hpp"

#include <CLI11.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <nlohmann/json.hpp>

#include <iostream>

using nlohmann::json;

namespace {

struct Server {
    ssm::BuiltinModel model;
    bool stop = false;

    ssm::Vec eval(const ssm::Vec& x, const ssm::Vec& v) const { return model.model->nonlinearity().evaluate(x, v); }

    json handle(const json& req) {
        json resp{{"id", req.contains("id") ? req["id"] : json()}};
        try {
            const std::string kind = req.at("kind").get<std::string>();
            if (kind == "shutdown") {
                stop = true;
                resp["status"] = "ok";
                return resp;
            }
            const auto xs = req.at("x").get<std::vector<double>>();
            const auto vs = req.at("xdot").get<std::vector<double>>();
            const auto n = static_cast<std::size_t>(model.model->dofs());
            if (xs.size() != n || vs.size() != n)
                throw std::invalid_argument("protocol error: vectors must have length " + std::to_string(n));
            const ssm::Vec x = Eigen::Map<const ssm::Vec>(xs.data(), static_cast<ssm::Index>(n));
            const ssm::Vec v = Eigen::Map<const ssm::Vec>(vs.data(), static_cast<ssm::Index>(n));
            ssm::Vec f;
            if (kind == "full") {
                f = eval(x, v);
            } else if (kind == "even") {
                f = 0.5 * (eval(x, v) + eval(-x, -v));
            } else if (kind == "odd") {
                f = 0.5 * (eval(x, v) - eval(-x, -v));
            } else {
                throw std::invalid_argument("unknown kind '" + kind + "'");
            }
            resp["status"] = "ok";
            resp["f"] = std::vector<double>(f.data(), f.data() + f.size());
        } catch (const std::exception& e) {
            resp["status"] = "error";
            resp["error"] = e.what();
        }
        return resp;
    }

    std::string reply(const std::string& line) {
        json msg;
        try {
            msg = json::parse(line);
        } catch (const json::exception& e) {
            return json{{"id", nullptr}, {"status", "error"}, {"error", std::string("malformed message: ") + e.what()}}
                .dump();
        }
        if (!msg.is_array()) return handle(msg).dump();
        json out = json::array();
        for (const json& r : msg) out.push_back(handle(r));
        return out.dump();
    }

    void serve(std::istream& in, std::ostream& out) {
        json header{{"protocol", "ssm-blackbox"}, {"version", 1},           {"n", model.model->dofs()},
                    {"serial", true},             {"kinds", {"full", "even", "odd"}}, {"name", model.id}};
        out << header.dump() << '\n' << std::flush;
        std::string line;
        while (!stop && std::getline(in, line)) {
            if (line.empty()) continue;
            out << reply(line) << '\n' << std::flush;
        }
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"black-box test server"};
    std::string id = "spring_chain";
    std::vector<std::string> params;
    int port = -1;
    app.add_option("--model", id);
    app.add_option("--param", params, "name=value");
    app.add_option("--tcp", port, "listen on this localhost port (0 picks one)");
    CLI11_PARSE(app, argc, argv);

    try {
        ssm::ParamMap overrides;
        for (const std::string& p : params) {
            const auto eq = p.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("bad --param " + p);
            overrides[p.substr(0, eq)] = std::stod(p.substr(eq + 1));
        }
        Server server{ssm::make_builtin(id, overrides)};
        if (port < 0) {
            server.serve(std::cin, std::cout);
            return 0;
        }
        namespace ip = boost::asio::ip;
        boost::asio::io_context io;
        ip::tcp::acceptor acceptor(io, ip::tcp::endpoint(ip::address_v4::loopback(), static_cast<unsigned short>(port)));
        std::cout << "listening " << acceptor.local_endpoint().port() << std::endl;
        ip::tcp::iostream stream;
        acceptor.accept(stream.socket());
        server.serve(stream, stream);
    } catch (const std::exception& e) {
        std::cerr << "blackbox_server: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
