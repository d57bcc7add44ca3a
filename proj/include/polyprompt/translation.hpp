#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "polyprompt/gateway.hpp"
#include "polyprompt/prompts.hpp"

namespace polyprompt {

struct TranslationRecord {
    std::string source_text;
    std::string source_lang;
    std::string target_lang;
    std::string translated_text;
    std::string engine_id;
};

inline constexpr const char* kDefaultTranslationTemplate =
    "Translate the following text from {source_language} into {target_language}. "
    "Output only the translation, nothing else.\n\n{text}";

// Single-letter choice labels are language-invariant; translating them only
// invites parsing noise.
inline bool is_mc_label(const std::string& text) {
    std::string t = trim(text);
    if (t.size() == 2 && (t[1] == '.' || t[1] == ')')) t = t.substr(0, 1);
    return t.size() == 1 && ((t[0] >= 'A' && t[0] <= 'D') || (t[0] >= 'a' && t[0] <= 'd'));
}

// LLM-backed translator with an in-memory cache and optional JSONL
// persistence. Identity translations (equal tags) and MC labels never reach
// the engine.
class Translator {
public:
    Translator(std::shared_ptr<Backend> gateway, std::string model_id,
               std::map<std::string, std::string> language_names,
               std::string pivot = kDefaultPivot,
               std::string prompt_template = kDefaultTranslationTemplate)
        : gateway_(std::move(gateway)),
          model_id_(std::move(model_id)),
          names_(std::move(language_names)),
          pivot_(std::move(pivot)),
          template_(std::move(prompt_template)) {}

    std::string translate(const std::string& text, const std::string& source_lang,
                          const std::string& target_lang) {
        if (source_lang == target_lang) return text;
        require_known(source_lang);
        require_known(target_lang);
        if (is_mc_label(text)) return text;
        std::string key = source_lang + "\x1f" + target_lang + "\x1f" + text;
        std::string translated = cache_.get_or_compute(key, [&] {
            std::string prompt = detail::substitute(template_, "source_language", name_of(source_lang));
            prompt = detail::substitute(prompt, "target_language", name_of(target_lang));
            prompt = detail::substitute(prompt, "text", text);
            ChatRequest req;
            req.model_id = model_id_;
            req.temperature = 0.0;
            req.messages = {{Role::user, prompt}};
            engine_calls_.fetch_add(1);
            ChatResponse resp = gateway_->complete(req);
            std::string out = trim(resp.text);
            if (out.empty())
                throw EmptyTranslation("engine returned a blank translation for '" + text + "'");
            return out;
        });
        return translated;
    }

    std::string translate_back(const std::string& response, const std::string& source_lang) {
        return translate(response, source_lang, pivot_);
    }

    const std::string& pivot() const { return pivot_; }
    int engine_calls() const { return engine_calls_.load(); }

    std::vector<TranslationRecord> records() const {
        std::vector<TranslationRecord> out;
        for (const auto& [key, translated] : cache_.snapshot()) {
            auto first = key.find('\x1f');
            auto second = key.find('\x1f', first + 1);
            TranslationRecord rec;
            rec.source_lang = key.substr(0, first);
            rec.target_lang = key.substr(first + 1, second - first - 1);
            rec.source_text = key.substr(second + 1);
            rec.translated_text = translated;
            rec.engine_id = model_id_;
            out.push_back(std::move(rec));
        }
        return out;
    }

    // Reload a previous run's translations.jsonl so a resumed run never
    // re-translates.
    void preload(const std::filesystem::path& jsonl_path) {
        if (!std::filesystem::exists(jsonl_path)) return;
        for (const auto& line : read_lines(jsonl_path)) {
            if (trim(line).empty()) continue;
            json j = json::parse(line);
            std::string key = j.at("source_lang").get<std::string>() + "\x1f" +
                              j.at("target_lang").get<std::string>() + "\x1f" +
                              j.at("source_text").get<std::string>();
            cache_.preload(key, j.at("translated_text").get<std::string>());
        }
    }

    // Sorted by key, so the file is byte-stable across reruns.
    void persist(const std::filesystem::path& jsonl_path) const {
        std::string out;
        for (const auto& [key, translated] : cache_.snapshot()) {
            auto first = key.find('\x1f');
            auto second = key.find('\x1f', first + 1);
            json j{{"source_lang", key.substr(0, first)},
                   {"target_lang", key.substr(first + 1, second - first - 1)},
                   {"source_text", key.substr(second + 1)},
                   {"translated_text", translated},
                   {"engine_id", model_id_}};
            out += j.dump() + "\n";
        }
        atomic_write_file(jsonl_path, out);
    }

private:
    std::string name_of(const std::string& tag) const {
        auto it = names_.find(tag);
        return it != names_.end() ? it->second : tag;
    }

    void require_known(const std::string& tag) const {
        if (!names_.count(tag)) throw ConfigError("unknown language tag: " + tag);
    }

    std::shared_ptr<Backend> gateway_;
    std::string model_id_;
    std::map<std::string, std::string> names_;
    std::string pivot_;
    std::string template_;
    KeyedOnce<std::string, std::string> cache_;
    std::atomic<int> engine_calls_{0};
};

}  // namespace polyprompt
