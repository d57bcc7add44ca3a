#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polyprompt/errors.hpp"
#include "polyprompt/util.hpp"

namespace polyprompt {

enum class ResourceTier { high, low };

inline const char* tier_name(ResourceTier t) { return t == ResourceTier::high ? "high" : "low"; }

// One language plus the cultural cue material that drives its prompt
// variants. Enhanced strategies draw a (name, birthplace, food) triple from
// the cue pools.
struct CultureProfile {
    std::string language_tag;    // "zh", "ja", ...
    std::string language_name;   // "Chinese", "Japanese", ...
    ResourceTier resource_tier = ResourceTier::high;
    std::vector<std::string> cue_names;
    std::vector<std::string> cue_birthplaces;
    std::vector<std::string> cue_foods;

    bool has_cues() const {
        return !cue_names.empty() && !cue_birthplaces.empty() && !cue_foods.empty();
    }
};

inline void validate_profiles(const std::vector<CultureProfile>& profiles) {
    std::set<std::string> seen;
    for (const auto& p : profiles) {
        if (p.language_tag.empty()) throw ConfigError("culture profile with empty language tag");
        if (!seen.insert(p.language_tag).second)
            throw ConfigError("duplicate language tag: " + p.language_tag);
    }
}

// cultures.json: array of {tag, name, tier, names[], birthplaces[], foods[]}.
inline std::vector<CultureProfile> parse_cultures(const nlohmann::json& doc) {
    std::vector<CultureProfile> out;
    for (const auto& entry : doc) {
        CultureProfile p;
        p.language_tag = entry.at("tag").get<std::string>();
        p.language_name = entry.at("name").get<std::string>();
        std::string tier = entry.value("tier", "high");
        if (tier == "high")
            p.resource_tier = ResourceTier::high;
        else if (tier == "low")
            p.resource_tier = ResourceTier::low;
        else
            throw ConfigError("unknown resource tier '" + tier + "' for " + p.language_tag);
        for (const auto& n : entry.value("names", nlohmann::json::array()))
            p.cue_names.push_back(n.get<std::string>());
        for (const auto& b : entry.value("birthplaces", nlohmann::json::array()))
            p.cue_birthplaces.push_back(b.get<std::string>());
        for (const auto& f : entry.value("foods", nlohmann::json::array()))
            p.cue_foods.push_back(f.get<std::string>());
        out.push_back(std::move(p));
    }
    validate_profiles(out);
    return out;
}

inline std::vector<CultureProfile> load_cultures(const std::filesystem::path& path) {
    return parse_cultures(nlohmann::json::parse(read_file(path)));
}

// tag -> language name lookup used by prompt and translation templates.
inline std::map<std::string, std::string> language_names(
    const std::vector<CultureProfile>& profiles) {
    std::map<std::string, std::string> out;
    for (const auto& p : profiles) out[p.language_tag] = p.language_name;
    return out;
}

inline const CultureProfile& find_culture(const std::vector<CultureProfile>& profiles,
                                          const std::string& tag) {
    for (const auto& p : profiles)
        if (p.language_tag == tag) return p;
    throw ConfigError("unknown culture tag: " + tag);
}

}  // namespace polyprompt
