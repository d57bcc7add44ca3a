#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <random>
#include <semaphore>
#include <string>
#include <thread>

#include "polyprompt/gateway.hpp"

namespace polyprompt {

struct RetryPolicy {
    int max_attempts = 5;
    int base_delay_ms = 1000;        // attempt n waits base * 2^n, jittered
    double jitter = 0.25;            // +/- fraction of the delay
    std::function<void(int)> sleeper = [](int ms) {
        std::this_thread::sleep_for(std::chrono::milliseconds(ms));
    };
};

struct HttpResult {
    int status = 0;          // 0 = transport failure
    std::string body;
    std::string error;
};

// POSTs the request JSON to a path; pluggable so tests can script
// status sequences without sockets. A real httplib transport is available
// via make_httplib_transport() when POLYPROMPT_ENABLE_HTTPLIB is defined.
using Transport = std::function<HttpResult(const std::string& path, const std::string& body,
                                           const std::string& api_key)>;

// Chat-completions client over the common wire shape. Transient failures
// (429, 5xx, transport errors) are retried with exponential backoff; auth
// failures are not.
class HttpBackend : public Backend {
public:
    HttpBackend(Transport transport, std::string api_key = "", RetryPolicy retry = {},
                int max_inflight = 4)
        : api_key_(std::move(api_key)),
          retry_(std::move(retry)),
          inflight_(max_inflight > 0 ? max_inflight : 1),
          transport_(std::move(transport)) {}

    ChatResponse complete(const ChatRequest& req) override {
        inflight_.acquire();
        struct Release {
            std::counting_semaphore<>& sem;
            ~Release() { sem.release(); }
        } release{inflight_};

        const std::string body = req.wire_body().dump();
        const auto start = std::chrono::steady_clock::now();
        HttpResult last;
        for (int attempt = 0; attempt < retry_.max_attempts; ++attempt) {
            if (attempt > 0) retry_.sleeper(backoff_ms(attempt - 1));
            last = transport_("/chat/completions", body, api_key_);
            if (last.status == 401 || last.status == 403)
                throw AuthFailure("authentication failed (HTTP " + std::to_string(last.status) + ")");
            if (last.status == 429 || last.status >= 500 || last.status == 0)
                continue;
            if (last.status != 200)
                throw GatewayError("unexpected HTTP " + std::to_string(last.status) + ": " + last.body);
            ChatResponse resp = parse_response(last.body);
            resp.retries = attempt;
            resp.latency_ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - start)
                                  .count();
            return resp;
        }
        if (last.status == 429)
            throw RateLimited("rate limited after " + std::to_string(retry_.max_attempts) +
                              " attempts");
        throw GatewayError("request failed after " + std::to_string(retry_.max_attempts) +
                           " attempts (last status " + std::to_string(last.status) + "): " +
                           (last.error.empty() ? last.body : last.error));
    }

private:
    int backoff_ms(int n) {
        double delay = static_cast<double>(retry_.base_delay_ms) * std::pow(2.0, n);
        if (retry_.jitter > 0.0) {
            std::uniform_real_distribution<double> d(-retry_.jitter, retry_.jitter);
            delay *= 1.0 + d(jitter_rng_);
        }
        return delay < 0 ? 0 : static_cast<int>(delay);
    }

    static ChatResponse parse_response(const std::string& body) {
        json doc;
        try {
            doc = json::parse(body);
        } catch (const json::exception& e) {
            throw MalformedResponse(std::string("response is not JSON: ") + e.what());
        }
        try {
            const json& choice = doc.at("choices").at(0);
            ChatResponse resp;
            resp.text = choice.at("message").at("content").get<std::string>();
            resp.finish_reason = choice.value("finish_reason", "stop");
            if (doc.contains("usage")) {
                resp.usage.prompt_tokens = doc["usage"].value("prompt_tokens", 0);
                resp.usage.completion_tokens = doc["usage"].value("completion_tokens", 0);
            }
            resp.source = ResponseSource::live;
            return resp;
        } catch (const json::exception& e) {
            throw MalformedResponse(std::string("missing fields in response: ") + e.what());
        }
    }

    std::string api_key_;
    RetryPolicy retry_;
    std::counting_semaphore<> inflight_;
    Transport transport_;
    std::mt19937_64 jitter_rng_{std::random_device{}()};
};

}  // namespace polyprompt

// Real transport, kept behind a macro so translation units that only ever
// inject scripted transports do not pay for httplib.
#ifdef POLYPROMPT_ENABLE_HTTPLIB
#include <httplib.h>

namespace polyprompt {

inline Transport make_httplib_transport(const std::string& base_url) {
    // Split "scheme://host[:port]" from an optional path prefix.
    std::string root = base_url, prefix;
    auto scheme_end = base_url.find("://");
    if (scheme_end != std::string::npos) {
        auto path_start = base_url.find('/', scheme_end + 3);
        if (path_start != std::string::npos) {
            root = base_url.substr(0, path_start);
            prefix = base_url.substr(path_start);
            while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
        }
    }
    return [root, prefix](const std::string& path, const std::string& body,
                          const std::string& api_key) -> HttpResult {
        httplib::Client client(root);
        client.set_read_timeout(300, 0);
        client.set_connection_timeout(30, 0);
        httplib::Headers headers;
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
        auto res = client.Post(prefix + path, headers, body, "application/json");
        if (!res) return {0, "", httplib::to_string(res.error())};
        return {res->status, res->body, ""};
    };
}

// Reads LLM_BASE_URL / LLM_API_KEY.
inline std::shared_ptr<HttpBackend> http_backend_from_env(RetryPolicy retry = {},
                                                          int max_inflight = 4) {
    const char* url = std::getenv("LLM_BASE_URL");
    if (!url || !*url) throw ConfigError("LLM_BASE_URL is not set");
    const char* key = std::getenv("LLM_API_KEY");
    return std::make_shared<HttpBackend>(make_httplib_transport(url),
                                         key ? std::string(key) : "", std::move(retry),
                                         max_inflight);
}

}  // namespace polyprompt
#endif
