#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <unordered_map>

#include "polyprompt/gateway.hpp"

namespace polyprompt {

enum class CacheMode { record, replay };

// Read-through request cache over any backend. One JSON file per
// request_key; each file stores the list of responses observed for that
// key, in call order, so k > 1 samples of an identical prompt replay in
// the order they were recorded.
//
//   record: the n-th in-process occurrence of a key returns the n-th cached
//           response when present; otherwise the inner backend is called and
//           the response appended. A rerun over a complete cache therefore
//           touches neither the network nor the cache files.
//   replay: cache only; no inner backend. Reads past the recorded list
//           return the final entry, and an unknown key raises CacheMiss.
class CachingBackend : public Backend {
public:
    CachingBackend(std::shared_ptr<Backend> inner, std::filesystem::path dir, CacheMode mode)
        : inner_(std::move(inner)), dir_(std::move(dir)), mode_(mode) {
        if (mode_ == CacheMode::record && !inner_)
            throw ConfigError("record mode needs an inner backend");
        std::filesystem::create_directories(dir_);
    }

    ChatResponse complete(const ChatRequest& req) override {
        const std::string key = req.request_key();
        std::unique_lock lock(mu_);
        Entry& entry = load_entry(key);
        const std::size_t pos = entry.cursor++;
        if (pos < entry.responses.size()) {
            ChatResponse resp = from_json(entry.responses[pos]);
            return resp;
        }
        if (mode_ == CacheMode::replay) {
            if (entry.responses.empty())
                throw CacheMiss("no cached response for request " + key);
            ChatResponse resp = from_json(entry.responses.back());
            return resp;
        }
        lock.unlock();
        ChatResponse live = inner_->complete(req);
        lock.lock();
        entry.responses.push_back(to_json(live));
        inner_calls_.fetch_add(1);
        persist(key, entry, req);
        return live;
    }

    int inner_calls() const { return inner_calls_.load(); }

private:
    struct Entry {
        std::vector<json> responses;
        std::size_t cursor = 0;
        bool loaded = false;
    };

    Entry& load_entry(const std::string& key) {
        Entry& entry = entries_[key];
        if (entry.loaded) return entry;
        entry.loaded = true;
        auto path = dir_ / (key + ".json");
        if (std::filesystem::exists(path)) {
            json doc = json::parse(read_file(path));
            for (const auto& r : doc.at("responses")) entry.responses.push_back(r);
        }
        return entry;
    }

    void persist(const std::string& key, const Entry& entry, const ChatRequest& req) const {
        json doc;
        doc["request_key"] = key;
        doc["request"] = req.wire_body();
        doc["responses"] = entry.responses;
        atomic_write_file(dir_ / (key + ".json"), doc.dump(2) + "\n");
    }

    static json to_json(const ChatResponse& r) {
        return json{{"text", r.text},
                    {"finish_reason", r.finish_reason},
                    {"prompt_tokens", r.usage.prompt_tokens},
                    {"completion_tokens", r.usage.completion_tokens},
                    {"retries", r.retries}};
    }

    static ChatResponse from_json(const json& j) {
        ChatResponse r;
        r.text = j.at("text").get<std::string>();
        r.finish_reason = j.value("finish_reason", "stop");
        r.usage.prompt_tokens = j.value("prompt_tokens", 0);
        r.usage.completion_tokens = j.value("completion_tokens", 0);
        r.retries = j.value("retries", 0);
        r.source = ResponseSource::cache;
        return r;
    }

    std::shared_ptr<Backend> inner_;
    std::filesystem::path dir_;
    CacheMode mode_;
    std::mutex mu_;
    std::unordered_map<std::string, Entry> entries_;
    std::atomic<int> inner_calls_{0};
};

}  // namespace polyprompt
