#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "polyprompt/gateway.hpp"
#include "polyprompt/tasks.hpp"

namespace polyprompt {

// Closed region vocabulary; anything else is rejected.
inline const std::array<std::string, 8>& region_vocabulary() {
    static const std::array<std::string, 8> regions = {
        "Europe",        "East Asia",     "South Asia", "Middle East",
        "North America", "Latin America", "Africa",     "Oceania"};
    return regions;
}

// Canonical vocabulary entry for a model-provided region string, matched
// case-insensitively. Empty optional = not in the vocabulary.
inline std::optional<std::string> canonical_region(const std::string& region) {
    std::string folded = to_lower(trim(region));
    for (const auto& r : region_vocabulary())
        if (to_lower(r) == folded) return r;
    return std::nullopt;
}

struct DemographicLabel {
    std::string name;
    std::string nationality;
    std::string ethnicity;
    std::string region;  // always a region_vocabulary() entry
};

// Trim + case-fold for entropy counting. No ontology mapping beyond that.
inline std::string normalize_category(const std::string& s) { return to_lower(trim(s)); }

inline constexpr const char* kDefaultAnnotationTemplate =
    "Given the name \"{name}\", predict the following:\n"
    "- Likely nationality or country of origin\n"
    "- Likely ethnic or cultural background\n"
    "- Likely region (Choose ONLY from: Europe, East Asia, South Asia, Middle East, "
    "North America, Latin America, Africa, Oceania)\n"
    "\n"
    "Provide the result in a structured JSON format:\n"
    "{\n"
    "   \"nationality\": \"...\",\n"
    "   \"ethnicity\": \"...\",\n"
    "   \"region\": \"...\"\n"
    "}";

inline constexpr const char* kRegionReminder =
    "Your previous region was not in the allowed list. Choose the region ONLY from: Europe, "
    "East Asia, South Asia, Middle East, North America, Latin America, Africa, Oceania. "
    "Answer again in the same JSON format.";

// LLM-backed demographic annotator with a per-name cache.
class Annotator {
public:
    Annotator(std::shared_ptr<Backend> gateway, std::string model_id,
              std::string prompt_template = kDefaultAnnotationTemplate)
        : gateway_(std::move(gateway)),
          model_id_(std::move(model_id)),
          template_(std::move(prompt_template)) {}

    // One structured annotation; invalid regions get one corrective retry,
    // then a hard InvalidRegion. Cached per name.
    DemographicLabel annotate_name(const std::string& name) {
        return cache_.get_or_compute(name, [&] { return annotate_uncached(name); });
    }

    struct BatchResult {
        // One slot per input name, order and multiplicity preserved;
        // failed slots are empty and described in `failures`.
        std::vector<std::optional<DemographicLabel>> labels;
        std::vector<std::pair<std::string, std::string>> failures;  // (name, error)

        std::vector<DemographicLabel> valid() const {
            std::vector<DemographicLabel> out;
            for (const auto& l : labels)
                if (l) out.push_back(*l);
            return out;
        }
    };

    // Annotates every name, deduplicating through the cache. Per-name
    // failures never abort the batch.
    BatchResult annotate_batch(const std::vector<std::string>& names) {
        BatchResult result;
        result.labels.resize(names.size());
        std::map<std::string, std::string> errors;
        for (std::size_t i = 0; i < names.size(); ++i) {
            try {
                result.labels[i] = annotate_name(names[i]);
            } catch (const Error& e) {
                if (!errors.count(names[i])) {
                    errors[names[i]] = e.what();
                    result.failures.emplace_back(names[i], e.what());
                }
            }
        }
        return result;
    }

    int engine_calls() const { return engine_calls_.load(); }

    std::map<std::string, DemographicLabel> snapshot() const { return cache_.snapshot(); }

    void preload(const std::filesystem::path& jsonl_path) {
        if (!std::filesystem::exists(jsonl_path)) return;
        for (const auto& line : read_lines(jsonl_path)) {
            if (trim(line).empty()) continue;
            json j = json::parse(line);
            DemographicLabel label{j.at("name").get<std::string>(),
                                   j.at("nationality").get<std::string>(),
                                   j.at("ethnicity").get<std::string>(),
                                   j.at("region").get<std::string>()};
            cache_.preload(label.name, label);
        }
    }

    // Sorted by name; byte-stable across reruns.
    void persist(const std::filesystem::path& jsonl_path) const {
        std::string out;
        for (const auto& [name, label] : cache_.snapshot()) {
            json j{{"name", label.name},
                   {"nationality", label.nationality},
                   {"ethnicity", label.ethnicity},
                   {"region", label.region}};
            out += j.dump() + "\n";
        }
        atomic_write_file(jsonl_path, out);
    }

private:
    DemographicLabel annotate_uncached(const std::string& name) {
        ChatRequest req;
        req.model_id = model_id_;
        req.temperature = 0.0;
        req.messages = {{Role::user, detail::substitute(template_, "name", name)}};
        std::string bad_region;
        for (int attempt = 0; attempt < 2; ++attempt) {
            engine_calls_.fetch_add(1);
            ChatResponse resp = gateway_->complete(req);
            auto parsed = parse_reply(name, resp.text, bad_region);
            if (parsed) return *parsed;
            // Corrective reminder, then one retry.
            req.messages = {{Role::user, detail::substitute(template_, "name", name)},
                            {Role::assistant, resp.text},
                            {Role::user, kRegionReminder}};
        }
        throw InvalidRegion("region '" + bad_region + "' for name '" + name +
                            "' is outside the 8-region vocabulary");
    }

    static std::optional<DemographicLabel> parse_reply(const std::string& name,
                                                       const std::string& text,
                                                       std::string& bad_region) {
        auto objects = parse_lenient_json(text);
        for (const auto& obj : objects) {
            if (!obj.is_object()) continue;
            if (!obj.contains("nationality") || !obj.contains("ethnicity") ||
                !obj.contains("region"))
                continue;
            DemographicLabel label;
            label.name = name;
            label.nationality = trim(obj["nationality"].get<std::string>());
            label.ethnicity = trim(obj["ethnicity"].get<std::string>());
            std::string region = obj["region"].get<std::string>();
            auto canon = canonical_region(region);
            if (!canon) {
                bad_region = region;
                return std::nullopt;
            }
            label.region = *canon;
            if (label.nationality.empty() || label.ethnicity.empty()) return std::nullopt;
            return label;
        }
        throw MalformedResponse("annotation reply for '" + name + "' has no parsable JSON");
    }

    std::shared_ptr<Backend> gateway_;
    std::string model_id_;
    std::string template_;
    KeyedOnce<std::string, DemographicLabel> cache_;
    std::atomic<int> engine_calls_{0};
};

// Attribute counters over normalized category strings.
inline AttributeCounts count_attribute(const std::vector<DemographicLabel>& labels,
                                       Attribute attribute) {
    AttributeCounts ac;
    ac.attribute = attribute;
    for (const auto& l : labels) {
        switch (attribute) {
            case Attribute::nationality: ac.add(normalize_category(l.nationality)); break;
            case Attribute::ethnicity: ac.add(normalize_category(l.ethnicity)); break;
            case Attribute::region: ac.add(normalize_category(l.region)); break;
        }
    }
    return ac;
}

inline double demographic_entropy(const std::vector<DemographicLabel>& labels,
                                  Attribute attribute) {
    if (labels.empty()) throw EmptySet("no demographic labels to score");
    return demographic_entropy(count_attribute(labels, attribute));
}

}  // namespace polyprompt
