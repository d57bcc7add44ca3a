#pragma once

#include <filesystem>
#include <string>

#include "polyprompt/annotation.hpp"
#include "polyprompt/prompts.hpp"
#include "polyprompt/tasks.hpp"
#include "polyprompt/translation.hpp"

namespace polyprompt {

// Flat JSON application config. Every field has a usable default; secrets
// (API key, base URL) come from the environment only.
struct AppConfig {
    std::string model_id = "gpt-4o";
    std::string translation_model_id = "gpt-4o-mini";
    std::string annotation_model_id = "gpt-4o-mini";
    std::string embedding_model_id = "text-embedding-3-small";
    std::string pivot_language = "en";
    double default_temperature = 0.7;
    int max_tokens = 1024;
    int parallelism = 4;
    int names_total = 30;
    int persona_pool_size = 10;
    std::string cultures_path = "config/cultures.json";
    std::string runs_dir = "runs";

    std::string rephrase_template = kDefaultRephraseTemplate;
    std::string persona_template = kDefaultPersonaTemplate;
    std::string translation_template = kDefaultTranslationTemplate;
    std::string choice_template = kDefaultChoiceTemplate;
    std::string annotation_template = kDefaultAnnotationTemplate;
    std::string distractor_template = kDefaultDistractorTemplate;
    std::string mc_instruction = kDefaultMcInstruction;
    std::string people_instruction = kDefaultPeopleInstruction;

    static AppConfig from_json(const json& j) {
        AppConfig c;
        auto str = [&](const char* key, std::string& out) {
            if (j.contains(key)) out = j.at(key).get<std::string>();
        };
        str("model_id", c.model_id);
        str("translation_model_id", c.translation_model_id);
        str("annotation_model_id", c.annotation_model_id);
        str("embedding_model_id", c.embedding_model_id);
        str("pivot_language", c.pivot_language);
        if (j.contains("default_temperature"))
            c.default_temperature = j.at("default_temperature").get<double>();
        if (j.contains("max_tokens")) c.max_tokens = j.at("max_tokens").get<int>();
        if (j.contains("parallelism")) c.parallelism = j.at("parallelism").get<int>();
        if (j.contains("names_total")) c.names_total = j.at("names_total").get<int>();
        if (j.contains("persona_pool_size"))
            c.persona_pool_size = j.at("persona_pool_size").get<int>();
        str("cultures_path", c.cultures_path);
        str("runs_dir", c.runs_dir);
        str("rephrase_template", c.rephrase_template);
        str("persona_template", c.persona_template);
        str("translation_template", c.translation_template);
        str("choice_template", c.choice_template);
        str("annotation_template", c.annotation_template);
        str("distractor_template", c.distractor_template);
        str("mc_instruction", c.mc_instruction);
        str("people_instruction", c.people_instruction);
        return c;
    }

    static AppConfig load(const std::filesystem::path& path) {
        json j;
        try {
            j = json::parse(read_file(path));
        } catch (const json::exception& e) {
            throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
        }
        return from_json(j);
    }
};

}  // namespace polyprompt
