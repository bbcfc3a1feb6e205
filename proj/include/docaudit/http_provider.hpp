#pragma once

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "docaudit/common.hpp"
#include "docaudit/provider.hpp"

namespace docaudit {

struct HttpProviderConfig {
    std::string endpoint;  // e.g. http://127.0.0.1:8080
    int timeout_ms = 30000;
    int retries = 3;             // additional attempts after the first
    int retry_backoff_ms = 50;   // linear backoff between attempts
    std::string auth_header;     // empty: no auth
    std::string auth_token_env;  // env var holding the token value
    std::size_t pool_size = 4;   // bounded connection pool
};

// Wire-protocol client for inference servers:
//   GET  /v1/capabilities -> {vocab_size, max_context, supports_full_distribution, prepends_bos}
//   POST /v1/tokenize     {"text": str} -> {"tokens": [int...]}
//   POST /v1/score        {"tokens": [int...], "want_full": bool}
//                         -> {"logp_true": [...], "logp_max": [...], "full": [[...], ...]?}
// All probabilities travel as natural logs and are exponentiated here.
// Transient failures (connection errors, timeouts, 5xx) are retried with a
// bounded linear backoff; 4xx responses are surfaced as contract or
// capability errors without retry.
class HttpProvider : public Provider {
public:
    explicit HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
        if (config_.endpoint.empty()) throw Error("http provider: endpoint required");
        if (config_.pool_size == 0) throw Error("http provider: pool size must be positive");
        if (!config_.auth_header.empty()) {
            const char* token =
                config_.auth_token_env.empty() ? nullptr : std::getenv(config_.auth_token_env.c_str());
            if (token == nullptr || *token == '\0')
                throw Error("http provider: auth header configured but env var '" +
                            config_.auth_token_env + "' is unset");
            auth_token_ = token;
        }
        for (std::size_t i = 0; i < config_.pool_size; ++i) {
            clients_.push_back(make_client());
            idle_.push_back(i);
        }
    }

    ProviderCapabilities capabilities() const override {
        std::lock_guard<std::mutex> lock(caps_mutex_);
        if (!caps_) {
            const nlohmann::json j = request("GET", "/v1/capabilities", nlohmann::json{});
            ProviderCapabilities caps;
            caps.vocab_size = j.at("vocab_size").get<std::int32_t>();
            caps.max_context = j.at("max_context").get<std::size_t>();
            caps.supports_full_distribution = j.at("supports_full_distribution").get<bool>();
            caps.prepends_bos = j.at("prepends_bos").get<bool>();
            if (caps.vocab_size < 2 || caps.max_context < 2)
                throw ContractError("server reported invalid capabilities");
            caps_ = caps;
        }
        return *caps_;
    }

    std::vector<std::int32_t> tokenize(std::string_view text) const override {
        nlohmann::json body;
        body["text"] = std::string(text);
        const nlohmann::json j = request("POST", "/v1/tokenize", body);
        std::vector<std::int32_t> tokens;
        const ProviderCapabilities caps = capabilities();
        for (const auto& t : j.at("tokens")) {
            const std::int32_t id = t.get<std::int32_t>();
            if (id < 0 || id >= caps.vocab_size)
                throw ContractError("server returned token id outside the vocabulary");
            tokens.push_back(id);
        }
        return tokens;
    }

    ScoredSequenceResponse score_sequence(std::span<const std::int32_t> tokens,
                                          bool want_full) const override {
        const ProviderCapabilities caps = capabilities();
        if (tokens.size() < 2) throw ContractError("sequence must have at least 2 tokens");
        if (tokens.size() > caps.max_context)
            throw ContractError("sequence exceeds provider max_context");
        if (want_full && !caps.supports_full_distribution)
            throw CapabilityError("provider does not support full distributions");

        nlohmann::json body;
        body["tokens"] = std::vector<std::int32_t>(tokens.begin(), tokens.end());
        body["want_full"] = want_full;
        const nlohmann::json j = request("POST", "/v1/score", body);

        const auto& logp_true = j.at("logp_true");
        const auto& logp_max = j.at("logp_max");
        if (logp_true.size() != tokens.size() - 1 || logp_max.size() != tokens.size() - 1)
            throw ContractError("score arrays must have length len(tokens)-1");

        ScoredSequenceResponse resp;
        resp.records.reserve(tokens.size() - 1);
        for (std::size_t i = 0; i < tokens.size() - 1; ++i) {
            TokenRecord r;
            r.position = i + 2;
            r.token_id = tokens[i + 1];
            r.p_true = std::exp(logp_true[i].get<double>());
            r.p_max = std::exp(logp_max[i].get<double>());
            if (!(r.p_true > 0.0)) r.p_true = kProbFloor;
            if (r.p_max < r.p_true) {
                // Tolerate server rounding; anything larger is a broken server.
                if (r.p_true - r.p_max > 1e-9)
                    throw ContractError("server returned p_max < p_true");
                r.p_max = r.p_true;
            }
            resp.records.push_back(r);
        }
        if (want_full) {
            const auto& full = j.at("full");
            if (full.size() != tokens.size() - 1)
                throw ContractError("full distribution count must be len(tokens)-1");
            for (const auto& row : full) {
                std::vector<double> dist;
                dist.reserve(row.size());
                for (const auto& v : row) dist.push_back(std::exp(v.get<double>()));
                resp.full.push_back(std::move(dist));
            }
            validate_scored_response(tokens, resp, caps, true);
        }
        return resp;
    }

    std::string fingerprint() const override {
        const ProviderCapabilities caps = capabilities();
        return Fingerprint{}
            .add("http")
            .add(config_.endpoint)
            .add(static_cast<std::int64_t>(caps.vocab_size))
            .add(static_cast<std::uint64_t>(caps.max_context))
            .add(static_cast<std::uint64_t>(caps.supports_full_distribution ? 1 : 0))
            .add(static_cast<std::uint64_t>(caps.prepends_bos ? 1 : 0))
            .hex();
    }

private:
    class Lease {
    public:
        Lease(const HttpProvider& owner, std::size_t idx) : owner_(owner), idx_(idx) {}
        ~Lease() {
            std::lock_guard<std::mutex> lock(owner_.pool_mutex_);
            owner_.idle_.push_back(idx_);
            owner_.pool_cv_.notify_one();
        }
        httplib::Client& client() const { return *owner_.clients_[idx_]; }

    private:
        const HttpProvider& owner_;
        std::size_t idx_;
    };

    std::unique_ptr<httplib::Client> make_client() const {
        auto client = std::make_unique<httplib::Client>(config_.endpoint);
        const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
        client->set_connection_timeout(timeout);
        client->set_read_timeout(timeout);
        client->set_write_timeout(timeout);
        if (!config_.auth_header.empty()) {
            client->set_default_headers({{config_.auth_header, auth_token_}});
        }
        return client;
    }

    Lease acquire() const {
        std::unique_lock<std::mutex> lock(pool_mutex_);
        pool_cv_.wait(lock, [&] { return !idle_.empty(); });
        const std::size_t idx = idle_.back();
        idle_.pop_back();
        return Lease(*this, idx);
    }

    nlohmann::json request(const std::string& method, const std::string& path,
                           const nlohmann::json& body) const {
        std::string last_error;
        for (int attempt = 0; attempt <= config_.retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(config_.retry_backoff_ms * attempt));
            }
            httplib::Result res = [&] {
                const Lease lease = acquire();
                return method == "GET" ? lease.client().Get(path)
                                       : lease.client().Post(path, body.dump(), "application/json");
            }();
            if (!res) {
                last_error = httplib::to_string(res.error());
                continue;  // transport failure: retry
            }
            if (res->status >= 500) {
                last_error = "server error " + std::to_string(res->status);
                continue;  // transient server failure: retry
            }
            if (res->status == 422) throw CapabilityError(error_message(*res));
            if (res->status >= 400) throw ContractError(error_message(*res));
            try {
                return nlohmann::json::parse(res->body);
            } catch (const std::exception& e) {
                throw ContractError("server returned malformed JSON: " + std::string(e.what()));
            }
        }
        throw TransportError("request to " + config_.endpoint + path + " failed after " +
                             std::to_string(config_.retries + 1) + " attempts: " + last_error);
    }

    static std::string error_message(const httplib::Response& res) {
        try {
            const nlohmann::json j = nlohmann::json::parse(res.body);
            if (j.contains("error")) return j.at("error").get<std::string>();
        } catch (const std::exception&) {
        }
        return "server rejected request with status " + std::to_string(res.status);
    }

    HttpProviderConfig config_;
    std::string auth_token_;
    mutable std::vector<std::unique_ptr<httplib::Client>> clients_;
    mutable std::vector<std::size_t> idle_;
    mutable std::mutex pool_mutex_;
    mutable std::condition_variable pool_cv_;
    mutable std::mutex caps_mutex_;
    mutable std::optional<ProviderCapabilities> caps_;
};

}  // namespace docaudit
