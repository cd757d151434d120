#pragma once

// HTTP+JSON front end for SolveService.
//
//   POST   /v1/jobs               {instance, options} -> 202 {id}
//   GET    /v1/jobs/{id}          -> 200 job metadata
//   GET    /v1/jobs/{id}/solution -> 200 solution document
//   DELETE /v1/jobs/{id}          -> 200 job metadata after the cancel
//   GET    /v1/health             -> 200 {status: "ok"}
//
// Errors are {error, detail} with 400 (schema, validation, bad options),
// 404 (unknown job or route), 409 (no solution yet) and 429 (queue full).
// Validation errors also list {path, message} violations.

#include <httplib.h>

#include <json.hpp>
#include <string>

#include "scuc/errors.hpp"
#include "scuc/service.hpp"
#include "scuc/solution.hpp"

namespace scuc {

namespace detail {

inline void send_json(httplib::Response& res, int code, const nlohmann::ordered_json& body) {
    res.status = code;
    res.set_content(body.dump() + "\n", "application/json; charset=utf-8");
}

inline void send_error(httplib::Response& res, int code, const std::string& error, const std::string& detail,
                       nlohmann::ordered_json extra = nlohmann::ordered_json::object()) {
    nlohmann::ordered_json body;
    body["error"] = error;
    body["detail"] = detail;
    for (auto& [k, v] : extra.items()) body[k] = v;
    send_json(res, code, body);
}

// Maps service exceptions onto the wire error schema.
template <class F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const ValidationError& e) {
        auto list = nlohmann::ordered_json::array();
        for (const auto& v : e.violations) list.push_back({{"path", v.path}, {"message", v.message}});
        send_error(res, 400, "validation", e.what(), {{"violations", list}});
    } catch (const SchemaError& e) {
        send_error(res, 400, "schema", e.what(), {{"field", e.path}});
    } catch (const ArgumentError& e) {
        send_error(res, 400, "bad_options", e.what());
    } catch (const UnknownJobError& e) {
        send_error(res, 404, "unknown_job", e.what());
    } catch (const NotReadyError& e) {
        send_error(res, 409, "not_ready", e.what());
    } catch (const QueueFullError& e) {
        send_error(res, 429, "queue_full", e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
    }
}

}  // namespace detail

class HttpService {
public:
    explicit HttpService(SolveService& service) : service_(service) { routes(); }

    /// Binds to host:port (port 0 picks a free one) and returns the port.
    int bind(const std::string& host, int port) {
        const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
        if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
        return bound;
    }

    /// Serves until stop(); call after bind().
    void run() { server_.listen_after_bind(); }
    void stop() { server_.stop(); }
    void wait_until_ready() { server_.wait_until_ready(); }
    httplib::Server& server() { return server_; }

private:
    void routes() {
        using detail::guarded;
        using detail::send_json;
        server_.Post("/v1/jobs", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                nlohmann::json body;
                try {
                    body = nlohmann::json::parse(req.body);
                } catch (const nlohmann::json::parse_error& e) {
                    throw SchemaError("", std::string("malformed JSON: ") + e.what());
                }
                send_json(res, 202, {{"id", service_.submit_json(body)}});
            });
        });
        server_.Get(R"(/v1/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { send_json(res, 200, job_to_json(service_.status(req.matches[1]))); });
        });
        server_.Get(R"(/v1/jobs/([^/]+)/solution)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { send_json(res, 200, solution_to_json(service_.result(req.matches[1]))); });
        });
        server_.Delete(R"(/v1/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { send_json(res, 200, job_to_json(service_.cancel(req.matches[1]))); });
        });
        server_.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"status", "ok"}});
        });
        server_.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (res.body.empty()) {
                const int code = res.status;
                detail::send_error(res, code, code == 404 ? "not_found" : "http_error",
                                   req.method + " " + req.path);
                res.status = code;
            }
        });
        server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string what = "unknown error";
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                what = e.what();
            } catch (...) {
            }
            detail::send_error(res, 500, "internal", what);
        });
    }

    SolveService& service_;
    httplib::Server server_;
};

}  // namespace scuc
