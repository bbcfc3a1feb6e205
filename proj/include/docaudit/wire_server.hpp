#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "docaudit/common.hpp"
#include "docaudit/provider.hpp"

namespace docaudit {

// Serves any Provider over the wire protocol so external tooling (or this
// repo's own client) can audit against it. Status mapping: 400 contract
// violation, 422 capability missing, 500 internal failure.
class ProviderServer {
public:
    explicit ProviderServer(const Provider& provider) : provider_(provider) {
        server_.Get("/v1/capabilities", [this](const httplib::Request&, httplib::Response& res) {
            try {
                const ProviderCapabilities caps = provider_.capabilities();
                nlohmann::json j;
                j["vocab_size"] = caps.vocab_size;
                j["max_context"] = caps.max_context;
                j["supports_full_distribution"] = caps.supports_full_distribution;
                j["prepends_bos"] = caps.prepends_bos;
                res.set_content(j.dump(), "application/json");
            } catch (const std::exception& e) {
                fail(res, 500, e.what());
            }
        });

        server_.Post("/v1/tokenize", [this](const httplib::Request& req, httplib::Response& res) {
            try {
                const nlohmann::json body = nlohmann::json::parse(req.body);
                nlohmann::json j;
                j["tokens"] = provider_.tokenize(body.at("text").get<std::string>());
                res.set_content(j.dump(), "application/json");
            } catch (const nlohmann::json::exception& e) {
                fail(res, 400, e.what());
            } catch (const std::exception& e) {
                fail(res, 500, e.what());
            }
        });

        server_.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
            try {
                const nlohmann::json body = nlohmann::json::parse(req.body);
                const std::vector<std::int32_t> tokens =
                    body.at("tokens").get<std::vector<std::int32_t>>();
                const bool want_full = body.value("want_full", false);
                const ProviderCapabilities caps = provider_.capabilities();
                if (tokens.size() < 2) {
                    fail(res, 400, "need at least 2 tokens");
                    return;
                }
                if (tokens.size() > caps.max_context) {
                    fail(res, 400, "sequence exceeds max_context");
                    return;
                }
                if (want_full && !caps.supports_full_distribution) {
                    fail(res, 422, "full distributions not supported");
                    return;
                }
                const ScoredSequenceResponse scored = provider_.score_sequence(tokens, want_full);
                nlohmann::json j;
                std::vector<double> logp_true, logp_max;
                logp_true.reserve(scored.records.size());
                logp_max.reserve(scored.records.size());
                for (const TokenRecord& r : scored.records) {
                    logp_true.push_back(std::log(std::max(r.p_true, kProbFloor)));
                    logp_max.push_back(std::log(std::max(r.p_max, kProbFloor)));
                }
                j["logp_true"] = logp_true;
                j["logp_max"] = logp_max;
                if (want_full) {
                    nlohmann::json full = nlohmann::json::array();
                    for (const auto& dist : scored.full) {
                        std::vector<double> row;
                        row.reserve(dist.size());
                        for (double p : dist) row.push_back(std::log(std::max(p, kProbFloor)));
                        full.push_back(row);
                    }
                    j["full"] = full;
                }
                res.set_content(j.dump(), "application/json");
            } catch (const nlohmann::json::exception& e) {
                fail(res, 400, e.what());
            } catch (const ContractError& e) {
                fail(res, 400, e.what());
            } catch (const CapabilityError& e) {
                fail(res, 422, e.what());
            } catch (const std::exception& e) {
                fail(res, 500, e.what());
            }
        });
    }

    // Binds to an OS-assigned port and serves on a background thread.
    int start(const std::string& host = "127.0.0.1") {
        const int port = server_.bind_to_any_port(host);
        if (port <= 0) throw TransportError("cannot bind provider server on " + host);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port;
    }

    // Blocking variant for the CLI.
    void run(const std::string& host, int port) {
        if (!server_.listen(host, port))
            throw TransportError("cannot listen on " + host + ":" + std::to_string(port));
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    ~ProviderServer() { stop(); }

private:
    static void fail(httplib::Response& res, int status, const std::string& message) {
        nlohmann::json j;
        j["error"] = message;
        res.status = status;
        res.set_content(j.dump(), "application/json");
    }

    const Provider& provider_;
    httplib::Server server_;
    std::thread thread_;
};

}  // namespace docaudit
