#pragma once

#include <atomic>
#include <bit>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polyprompt/errors.hpp"
#include "polyprompt/util.hpp"

namespace polyprompt {

using json = nlohmann::json;

enum class Role { system, user, assistant };

inline const char* role_name(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "?";
}

struct Message {
    Role role = Role::user;
    std::string content;
};

struct ChatRequest {
    std::string model_id;
    std::vector<Message> messages;
    double temperature = 0.7;
    int max_tokens = 1024;

    // Stable content hash over every field. Hashes the temperature's bit
    // pattern rather than a formatted string, so the key never depends on
    // locale or printf behavior.
    std::string request_key() const {
        std::uint64_t h = fnv1a64(model_id);
        for (const auto& m : messages) {
            h = fnv1a64(role_name(m.role), h);
            h = fnv1a64("\x1f", h);
            h = fnv1a64(m.content, h);
            h = fnv1a64("\x1e", h);
        }
        h = fnv1a64(std::bit_cast<std::uint64_t>(temperature), h);
        h = fnv1a64(static_cast<std::uint64_t>(max_tokens), h);
        return to_hex(h);
    }

    // The common chat-completions body shape.
    json wire_body() const {
        json msgs = json::array();
        for (const auto& m : messages)
            msgs.push_back({{"role", role_name(m.role)}, {"content", m.content}});
        return json{{"model", model_id},
                    {"messages", msgs},
                    {"temperature", temperature},
                    {"max_tokens", max_tokens}};
    }

    std::string concatenated_content() const {
        std::string all;
        for (const auto& m : messages) {
            if (!all.empty()) all += '\n';
            all += m.content;
        }
        return all;
    }
};

enum class ResponseSource { live, cache, mock };

inline const char* source_name(ResponseSource s) {
    switch (s) {
        case ResponseSource::live: return "live";
        case ResponseSource::cache: return "cache";
        case ResponseSource::mock: return "mock";
    }
    return "?";
}

struct TokenUsage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct ChatResponse {
    std::string text;
    std::string finish_reason = "stop";
    TokenUsage usage;
    double latency_ms = 0.0;
    ResponseSource source = ResponseSource::live;
    int retries = 0;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual ChatResponse complete(const ChatRequest& req) = 0;
};

// ------------------------------------------------------------ scripted mock

// One scripting rule. `pattern` is a plain substring match against the
// concatenated message contents, "*" matches everything, and a "re:" prefix
// switches to ECMAScript regex. Regex rules may interpolate capture groups
// into the response with {1}..{9}.
struct MockRule {
    std::string pattern;
    std::string response;
};

class MockBackend : public Backend {
public:
    explicit MockBackend(std::vector<MockRule> rules) : rules_(std::move(rules)) {
        if (rules_.empty()) throw ConfigError("mock script needs at least one rule");
        for (const auto& r : rules_) {
            if (r.pattern.rfind("re:", 0) == 0)
                compiled_.emplace_back(std::regex(r.pattern.substr(3)));
            else
                compiled_.emplace_back(std::nullopt);
        }
    }

    // Script file: JSON array of {"match": ..., "response": ...}.
    static std::shared_ptr<MockBackend> from_file(const std::filesystem::path& path) {
        json doc = json::parse(read_file(path));
        std::vector<MockRule> rules;
        for (const auto& r : doc) {
            rules.push_back({r.at("match").get<std::string>(), r.at("response").get<std::string>()});
        }
        return std::make_shared<MockBackend>(std::move(rules));
    }

    ChatResponse complete(const ChatRequest& req) override {
        calls_.fetch_add(1);
        const std::string content = req.concatenated_content();
        for (std::size_t i = 0; i < rules_.size(); ++i) {
            const auto& rule = rules_[i];
            if (compiled_[i]) {
                std::smatch m;
                if (std::regex_search(content, m, *compiled_[i]))
                    return make_response(interpolate(rule.response, m));
            } else if (rule.pattern == "*" || contains(content, rule.pattern)) {
                return make_response(rule.response);
            }
        }
        throw ScriptMiss("no mock rule matches request " + req.request_key());
    }

    int call_count() const { return calls_.load(); }

private:
    static ChatResponse make_response(std::string text) {
        ChatResponse resp;
        resp.text = std::move(text);
        resp.source = ResponseSource::mock;
        return resp;
    }

    static std::string interpolate(const std::string& tmpl, const std::smatch& m) {
        std::string out;
        out.reserve(tmpl.size());
        for (std::size_t i = 0; i < tmpl.size(); ++i) {
            if (tmpl[i] == '{' && i + 2 < tmpl.size() && tmpl[i + 2] == '}' &&
                tmpl[i + 1] >= '1' && tmpl[i + 1] <= '9') {
                std::size_t g = static_cast<std::size_t>(tmpl[i + 1] - '0');
                if (g < m.size()) out += m[g].str();
                i += 2;
            } else {
                out += tmpl[i];
            }
        }
        return out;
    }

    std::vector<MockRule> rules_;
    std::vector<std::optional<std::regex>> compiled_;
    std::atomic<int> calls_{0};
};

inline std::shared_ptr<MockBackend> script_mock(std::vector<MockRule> rules) {
    return std::make_shared<MockBackend>(std::move(rules));
}

}  // namespace polyprompt
