#pragma once

#include <optional>
#include <string>
#include <vector>

#include "polyprompt/culture.hpp"
#include "polyprompt/gateway.hpp"
#include "polyprompt/rng.hpp"

namespace polyprompt {

inline constexpr double kHighTemperature = 1.3;
inline constexpr const char* kDefaultPivot = "en";

enum class StrategyKind {
    Monolingual,
    RequestingDiversity,
    HighTemperature,
    RandomPersonas,
    StepByStepRecall,
    BasicMulticultural,
    BasicMultilingual,
    EnhancedMulticultural,
    EnhancedMultilingual,
};

inline const char* strategy_name(StrategyKind k) {
    switch (k) {
        case StrategyKind::Monolingual: return "monolingual";
        case StrategyKind::RequestingDiversity: return "requesting_diversity";
        case StrategyKind::HighTemperature: return "high_temperature";
        case StrategyKind::RandomPersonas: return "random_personas";
        case StrategyKind::StepByStepRecall: return "step_by_step_recall";
        case StrategyKind::BasicMulticultural: return "basic_multicultural";
        case StrategyKind::BasicMultilingual: return "basic_multilingual";
        case StrategyKind::EnhancedMulticultural: return "enhanced_multicultural";
        case StrategyKind::EnhancedMultilingual: return "enhanced_multilingual";
    }
    return "?";
}

inline StrategyKind strategy_from_name(const std::string& name) {
    for (StrategyKind k :
         {StrategyKind::Monolingual, StrategyKind::RequestingDiversity,
          StrategyKind::HighTemperature, StrategyKind::RandomPersonas,
          StrategyKind::StepByStepRecall, StrategyKind::BasicMulticultural,
          StrategyKind::BasicMultilingual, StrategyKind::EnhancedMulticultural,
          StrategyKind::EnhancedMultilingual})
        if (name == strategy_name(k)) return k;
    throw ConfigError("unknown strategy: " + name);
}

inline bool strategy_uses_cultures(StrategyKind k) {
    return k == StrategyKind::BasicMulticultural || k == StrategyKind::BasicMultilingual ||
           k == StrategyKind::EnhancedMulticultural || k == StrategyKind::EnhancedMultilingual;
}

inline bool strategy_is_multilingual(StrategyKind k) {
    return k == StrategyKind::BasicMultilingual || k == StrategyKind::EnhancedMultilingual;
}

inline bool strategy_is_enhanced(StrategyKind k) {
    return k == StrategyKind::EnhancedMulticultural || k == StrategyKind::EnhancedMultilingual;
}

// Baselines that vary the wording of the query itself rather than the cue.
inline bool strategy_uses_rephrasing(StrategyKind k) {
    return k == StrategyKind::Monolingual || k == StrategyKind::RequestingDiversity ||
           k == StrategyKind::HighTemperature;
}

struct Strategy {
    StrategyKind kind = StrategyKind::Monolingual;
    double temperature = 0.7;
    int k = 3;  // number of variants per item
};

// HighTemperature pins temperature = 1.3; every other kind runs at the
// configured default.
inline Strategy make_strategy(StrategyKind kind, int k, double default_temperature) {
    Strategy s;
    s.kind = kind;
    s.k = k;
    s.temperature = kind == StrategyKind::HighTemperature ? kHighTemperature : default_temperature;
    return s;
}

// One fully rendered prompt, ready for dispatch (or for translation first
// when needs_translation is set).
struct PromptVariant {
    StrategyKind strategy_kind = StrategyKind::Monolingual;
    std::optional<CultureProfile> culture;
    std::string preamble;
    std::string body;
    std::string language_tag;
    bool needs_translation = false;
    double temperature = 0.7;
    int max_tokens = 1024;
    std::uint64_t seed_trace = 0;

    std::string culture_tag() const { return culture ? culture->language_tag : std::string(); }
};

// "a" / "an" by leading vowel, so "an English-speaking assistant" but
// "a Chinese-speaking assistant".
inline std::string indefinite_article(const std::string& word) {
    if (word.empty()) return "a";
    switch (std::tolower(static_cast<unsigned char>(word[0]))) {
        case 'a': case 'e': case 'i': case 'o': case 'u': return "an";
        default: return "a";
    }
}

inline std::string basic_culture_preamble(const CultureProfile& culture) {
    return "You are " + indefinite_article(culture.language_name) + " " + culture.language_name +
           "-speaking assistant.";
}

// Enhanced cue: the basic preamble plus one (name, birthplace, food) triple
// drawn uniformly from the profile's pools. Deterministic per seed.
inline std::string render_enhanced_cue(const CultureProfile& culture, std::uint64_t rng_seed) {
    if (!culture.has_cues())
        throw MissingCues("culture '" + culture.language_tag +
                          "' has an empty cue pool; enhanced strategies need names, birthplaces, "
                          "and foods");
    SeededRng rng(derive_seed(rng_seed, culture.language_tag));
    const std::string& name = culture.cue_names[rng.next_index(culture.cue_names.size())];
    const std::string& birthplace =
        culture.cue_birthplaces[rng.next_index(culture.cue_birthplaces.size())];
    const std::string& food = culture.cue_foods[rng.next_index(culture.cue_foods.size())];
    return basic_culture_preamble(culture) + " Your name is " + name + ", you were born in " +
           birthplace + ", and your favorite food is " + food + ".";
}

inline constexpr const char* kHelpfulPreamble = "You are a helpful assistant.";
inline constexpr const char* kDiversityRequest = "Please try to be as diverse as possible.";

// Build the k variants for one (item, strategy) pair. Culture-bearing
// strategies require exactly k profiles; baselines ignore the list. For
// RandomPersonas the preambles are left empty for the caller to fill from
// build_persona_set, and the rephrasing baselines emit identical bodies the
// caller may swap for rephrasings.
inline std::vector<PromptVariant> build_prompt_set(const std::string& base_query,
                                                   const Strategy& strategy,
                                                   const std::vector<CultureProfile>& cultures,
                                                   std::uint64_t rng_seed,
                                                   const std::string& pivot = kDefaultPivot) {
    if (strategy.k < 2) throw BadArity("strategy needs k >= 2 variants");
    if (strategy_uses_cultures(strategy.kind) &&
        cultures.size() != static_cast<std::size_t>(strategy.k))
        throw BadArity("strategy '" + std::string(strategy_name(strategy.kind)) + "' needs " +
                       std::to_string(strategy.k) + " culture profiles, got " +
                       std::to_string(cultures.size()));

    std::vector<PromptVariant> out;
    out.reserve(static_cast<std::size_t>(strategy.k));
    for (int i = 0; i < strategy.k; ++i) {
        PromptVariant v;
        v.strategy_kind = strategy.kind;
        v.body = base_query;
        v.language_tag = pivot;
        v.temperature = strategy.temperature;
        v.seed_trace = derive_seed(rng_seed, static_cast<std::uint64_t>(i));

        switch (strategy.kind) {
            case StrategyKind::Monolingual:
            case StrategyKind::HighTemperature:
            case StrategyKind::StepByStepRecall:
                v.preamble = kHelpfulPreamble;
                break;
            case StrategyKind::RequestingDiversity:
                v.preamble = std::string(kHelpfulPreamble) + " " + kDiversityRequest;
                break;
            case StrategyKind::RandomPersonas:
                v.preamble.clear();
                break;
            case StrategyKind::BasicMulticultural:
            case StrategyKind::BasicMultilingual:
            case StrategyKind::EnhancedMulticultural:
            case StrategyKind::EnhancedMultilingual: {
                const CultureProfile& culture = cultures[static_cast<std::size_t>(i)];
                v.culture = culture;
                v.preamble = strategy_is_enhanced(strategy.kind)
                                 ? render_enhanced_cue(culture, v.seed_trace)
                                 : basic_culture_preamble(culture);
                if (strategy_is_multilingual(strategy.kind)) {
                    v.language_tag = culture.language_tag;
                    v.needs_translation = culture.language_tag != pivot;
                }
                break;
            }
        }
        out.push_back(std::move(v));
    }
    return out;
}

// Step-by-step recall: prior answers are prepended as an enumerated block.
inline std::string apply_recall_transcript(const std::string& body,
                                           const std::vector<std::string>& prior_answers) {
    if (prior_answers.empty()) return body;
    std::string block = "Previously you answered:\n";
    for (std::size_t i = 0; i < prior_answers.size(); ++i)
        block += std::to_string(i + 1) + ". " + prior_answers[i] + "\n";
    block += "Reflect on your previous answers and give a new, different answer.\n\n";
    return block + body;
}

namespace detail {

// Pull list items out of an LLM response: numbered, bulleted, or bare lines.
inline std::vector<std::string> parse_listing(const std::string& text) {
    std::vector<std::string> items;
    for (const auto& raw : split_lines(text)) {
        std::string line = trim(raw);
        if (line.empty()) continue;
        std::size_t i = 0;
        while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
        if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')' || line[i] == ':'))
            line = trim(line.substr(i + 1));
        else if (!line.empty() && (line[0] == '-' || line[0] == '*'))
            line = trim(line.substr(1));
        if (!line.empty()) items.push_back(line);
    }
    return items;
}

inline std::string substitute(std::string tmpl, const std::string& key, const std::string& value) {
    std::string needle = "{" + key + "}";
    std::size_t pos = 0;
    while ((pos = tmpl.find(needle, pos)) != std::string::npos) {
        tmpl.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return tmpl;
}

}  // namespace detail

inline constexpr const char* kDefaultRephraseTemplate =
    "Rephrase the following question into {n} different lexical variants with high syntactic "
    "similarity, keeping the meaning identical. Return one rephrasing per line, numbered.\n\n"
    "Question: {query}";

inline constexpr const char* kDefaultPersonaTemplate =
    "Create {n} diverse persona descriptions for an assistant. Each persona should describe a "
    "profession and personality traits only, with no cultural, national, or linguistic "
    "information. Write each as a second-person preamble (\"You are ...\"), one per line, "
    "numbered.";

// Rephrasing service for the monolingual-style baselines. One gateway call
// produces n-1 rephrasings; the original query is always element 0. Results
// are cached per (query, n).
class Rephraser {
public:
    Rephraser(std::shared_ptr<Backend> gateway, std::string model_id,
              std::string prompt_template = kDefaultRephraseTemplate, double temperature = 0.7)
        : gateway_(std::move(gateway)),
          model_id_(std::move(model_id)),
          template_(std::move(prompt_template)),
          temperature_(temperature) {}

    std::vector<std::string> rephrase_variants(const std::string& base_query, int n) {
        if (n < 1) throw BadArity("rephrase_variants: n must be >= 1");
        if (n == 1) return {base_query};
        std::string key = std::to_string(n) + "\x1f" + base_query;
        return cache_.get_or_compute(key, [&] {
            std::string prompt = detail::substitute(template_, "n", std::to_string(n - 1));
            prompt = detail::substitute(prompt, "query", base_query);
            ChatRequest req;
            req.model_id = model_id_;
            req.temperature = temperature_;
            req.messages = {{Role::user, prompt}};
            ChatResponse resp = gateway_->complete(req);
            std::vector<std::string> out{base_query};
            for (auto& item : detail::parse_listing(resp.text)) {
                if (out.size() >= static_cast<std::size_t>(n)) break;
                out.push_back(std::move(item));
            }
            // Short responses degrade to repeating the original rather than
            // failing the whole item.
            while (out.size() < static_cast<std::size_t>(n)) out.push_back(base_query);
            return out;
        });
    }

private:
    std::shared_ptr<Backend> gateway_;
    std::string model_id_;
    std::string template_;
    double temperature_;
    KeyedOnce<std::string, std::vector<std::string>> cache_;
};

// Persona pool for the RandomPersonas baseline: one gateway call generates a
// pool of n_pool culture-free persona preambles; k of them are sampled
// without replacement, deterministically per seed. The pool is cached per
// size.
class PersonaPool {
public:
    PersonaPool(std::shared_ptr<Backend> gateway, std::string model_id,
                std::string prompt_template = kDefaultPersonaTemplate, double temperature = 0.7)
        : gateway_(std::move(gateway)),
          model_id_(std::move(model_id)),
          template_(std::move(prompt_template)),
          temperature_(temperature) {}

    std::vector<std::string> build_persona_set(int n_pool, int k, std::uint64_t rng_seed) {
        if (k < 1 || n_pool < 1) throw BadArity("persona pool sizes must be positive");
        if (k > n_pool) throw BadArity("cannot sample " + std::to_string(k) + " personas from a pool of " +
                                       std::to_string(n_pool));
        std::vector<std::string> pool = pool_cache_.get_or_compute(n_pool, [&] {
            std::string prompt = detail::substitute(template_, "n", std::to_string(n_pool));
            ChatRequest req;
            req.model_id = model_id_;
            req.temperature = temperature_;
            req.messages = {{Role::user, prompt}};
            ChatResponse resp = gateway_->complete(req);
            auto items = detail::parse_listing(resp.text);
            if (items.size() < static_cast<std::size_t>(n_pool))
                throw MalformedResponse("persona pool response has " +
                                        std::to_string(items.size()) + " entries, expected " +
                                        std::to_string(n_pool));
            items.resize(static_cast<std::size_t>(n_pool));
            return items;
        });
        SeededRng rng(derive_seed(rng_seed, "personas"));
        std::vector<std::string> out;
        for (std::size_t idx : rng.sample_indices(pool.size(), static_cast<std::size_t>(k)))
            out.push_back(pool[idx]);
        return out;
    }

private:
    std::shared_ptr<Backend> gateway_;
    std::string model_id_;
    std::string template_;
    double temperature_;
    KeyedOnce<int, std::vector<std::string>> pool_cache_;
};

}  // namespace polyprompt
