#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "polyprompt/gateway.hpp"
#include "polyprompt/metrics.hpp"
#include "polyprompt/prompts.hpp"
#include "polyprompt/rng.hpp"

namespace polyprompt {

// ----------------------------------------------------------------- datasets

// A social-norm statement with the fraction of human annotators agreeing.
struct NormStatement {
    std::string id;
    std::string text;
    double agreement_rate = 0.0;
};

struct PeopleQuery {
    std::string id;
    std::string text;
};

inline std::vector<NormStatement> load_statements(const std::filesystem::path& path) {
    std::vector<NormStatement> out;
    for (const auto& line : read_lines(path)) {
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DatasetError("bad JSONL line in " + path.string() + ": " + e.what());
        }
        NormStatement s;
        s.id = j.at("id").get<std::string>();
        s.text = j.at("text").get<std::string>();
        s.agreement_rate = j.at("agreement_rate").get<double>();
        if (s.agreement_rate < 0.0 || s.agreement_rate > 1.0)
            throw DatasetError("agreement_rate out of [0,1] for statement " + s.id);
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<PeopleQuery> load_queries(const std::filesystem::path& path) {
    std::vector<PeopleQuery> out;
    for (const auto& line : read_lines(path)) {
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DatasetError("bad JSONL line in " + path.string() + ": " + e.what());
        }
        out.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>()});
    }
    return out;
}

// Keep only genuinely controversial statements: those whose human agreement
// rate falls in the closed 25-75% band. Order-preserving.
inline std::vector<NormStatement> filter_controversial(const std::vector<NormStatement>& statements,
                                                       double lo = 0.25, double hi = 0.75) {
    if (!(lo < hi) || lo < 0.0 || hi > 1.0)
        throw ConfigError("controversy bounds must satisfy 0 <= lo < hi <= 1");
    std::vector<NormStatement> out;
    for (const auto& s : statements)
        if (s.agreement_rate >= lo && s.agreement_rate <= hi) out.push_back(s);
    return out;
}

// -------------------------------------------------------------- choice sets

enum class Valence { agree, disagree };

inline const char* valence_name(Valence v) { return v == Valence::agree ? "agree" : "disagree"; }

inline Valence valence_from_name(const std::string& name) {
    std::string n = to_lower(trim(name));
    if (n == "agree") return Valence::agree;
    if (n == "disagree") return Valence::disagree;
    throw InvalidChoiceSet("unknown valence: " + name);
}

struct Choice {
    Label label = Label::A;
    Valence valence = Valence::agree;
    std::string explanation;
};

// Four labeled choices for one statement; always two agreeing and two
// disagreeing. Construct through make_choice_set so the split is checked.
struct ChoiceSet {
    std::string statement_id;
    std::array<Choice, 4> choices;

    const Choice& at(Label l) const { return choices[static_cast<std::size_t>(l)]; }
    Valence valence_of(Label l) const { return at(l).valence; }
};

inline ChoiceSet make_choice_set(std::string statement_id, std::array<Choice, 4> choices) {
    int agree = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        if (choices[i].label != static_cast<Label>(i))
            throw InvalidChoiceSet("choice labels must be A, B, C, D in order");
        if (choices[i].valence == Valence::agree) ++agree;
    }
    if (agree != 2)
        throw InvalidChoiceSet("choice set needs exactly 2 agreeing and 2 disagreeing choices, got " +
                               std::to_string(agree) + " agreeing");
    return ChoiceSet{std::move(statement_id), std::move(choices)};
}

inline json choice_set_to_json(const ChoiceSet& cs) {
    json choices = json::array();
    for (const auto& c : cs.choices)
        choices.push_back({{"label", std::string(1, label_char(c.label))},
                           {"valence", valence_name(c.valence)},
                           {"explanation", c.explanation}});
    return json{{"statement_id", cs.statement_id}, {"choices", choices}};
}

inline ChoiceSet choice_set_from_json(const json& j) {
    std::array<Choice, 4> choices;
    const auto& arr = j.at("choices");
    if (arr.size() != 4) throw InvalidChoiceSet("choice set must have exactly 4 choices");
    for (std::size_t i = 0; i < 4; ++i) {
        choices[i].label = label_from_char(arr[i].at("label").get<std::string>().at(0));
        choices[i].valence = valence_from_name(arr[i].at("valence").get<std::string>());
        choices[i].explanation = arr[i].at("explanation").get<std::string>();
    }
    return make_choice_set(j.at("statement_id").get<std::string>(), std::move(choices));
}

// ------------------------------------------------------- lenient LLM output

// Strip markdown code fences (``` or ```json) wrapping an LLM reply.
inline std::string strip_markdown_fences(const std::string& text) {
    std::string t = trim(text);
    if (t.rfind("```", 0) != 0) return t;
    auto first_newline = t.find('\n');
    if (first_newline == std::string::npos) return t;
    auto closing = t.rfind("```");
    if (closing <= first_newline) return t;
    return trim(t.substr(first_newline + 1, closing - first_newline - 1));
}

namespace detail {

// Scan for top-level balanced {...} blocks; tolerates numbered prefixes and
// prose around the objects.
inline std::vector<std::string> extract_json_objects(const std::string& text) {
    std::vector<std::string> out;
    int depth = 0;
    bool in_string = false;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            if (c == '\\')
                ++i;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            if (depth == 0) start = i;
            ++depth;
        } else if (c == '}') {
            if (depth > 0 && --depth == 0) out.push_back(text.substr(start, i - start + 1));
        }
    }
    return out;
}

}  // namespace detail

// Parse an LLM reply that should contain JSON: fences stripped, then a
// strict parse, then a scan for embedded objects.
inline std::vector<json> parse_lenient_json(const std::string& text) {
    std::string body = strip_markdown_fences(text);
    try {
        json doc = json::parse(body);
        if (doc.is_array()) return std::vector<json>(doc.begin(), doc.end());
        return {doc};
    } catch (const json::exception&) {
    }
    std::vector<json> out;
    for (const auto& block : detail::extract_json_objects(body)) {
        try {
            out.push_back(json::parse(block));
        } catch (const json::exception&) {
        }
    }
    return out;
}

// Valence (agreement) entropy: answers collapse to their agree/disagree
// valences, normalized over m = 2.
inline double valence_entropy(std::span<const Label> labels, const ChoiceSet& cs) {
    if (labels.empty()) throw EmptyDistribution("no labels to score");
    std::map<std::string, long long> counts;
    for (Label l : labels) ++counts[valence_name(cs.valence_of(l))];
    return normalized_entropy(counts, 2);
}

inline double valence_entropy(const std::vector<Label>& labels, const ChoiceSet& cs) {
    return valence_entropy(std::span<const Label>(labels), cs);
}

// ------------------------------------------------------------ answer parsing

// Parsed model selection for one variant of one statement.
struct McAnswer {
    std::string statement_id;
    int variant_index = 0;
    std::optional<Label> label;  // nullopt = unparsable
    std::string raw_text;
};

// First standalone A/B/C/D token, case-insensitive, punctuation ignored.
// Total: never throws; unparsable answers map to nullopt.
inline std::optional<Label> parse_mc_answer(const std::string& raw_text) {
    std::size_t i = 0;
    const std::size_t n = raw_text.size();
    while (i < n) {
        while (i < n && !std::isalnum(static_cast<unsigned char>(raw_text[i]))) ++i;
        std::size_t start = i;
        while (i < n && std::isalnum(static_cast<unsigned char>(raw_text[i]))) ++i;
        if (i - start == 1) {
            char c = raw_text[start];
            if ((c >= 'A' && c <= 'D') || (c >= 'a' && c <= 'd')) return label_from_char(c);
        }
    }
    return std::nullopt;
}

// Adds a whole-answer fallback: a reply that quotes one choice's explanation
// verbatim counts as that choice.
inline std::optional<Label> parse_mc_answer(const std::string& raw_text, const ChoiceSet& cs) {
    if (auto label = parse_mc_answer(raw_text)) return label;
    std::string t = trim(raw_text);
    for (const auto& c : cs.choices) {
        if (!c.explanation.empty() && contains(t, c.explanation)) return c.label;
    }
    return std::nullopt;
}

// ------------------------------------------------------------- name parsing

// Ten generated names for one variant of one people query; count violations
// keep the record but flag it invalid.
struct NameList {
    std::string query_id;
    int variant_index = 0;
    std::string language_tag;
    std::vector<std::string> names;
    bool count_ok = false;
};

namespace detail {

inline std::string strip_honorific(std::string name) {
    static const std::array<std::string_view, 7> honorifics = {"Mr.", "Mrs.", "Ms.", "Dr.",
                                                               "Prof.", "Sir", "Madam"};
    for (auto h : honorifics) {
        if (name.size() > h.size() && name.compare(0, h.size(), h) == 0 &&
            name[h.size()] == ' ') {
            return trim(name.substr(h.size()));
        }
    }
    return name;
}

inline std::string clean_name(std::string item) {
    std::string t = trim(item);
    // Drop wrapping quotes and markdown emphasis.
    while (t.size() >= 2 && ((t.front() == '"' && t.back() == '"') ||
                             (t.front() == '*' && t.back() == '*') ||
                             (t.front() == '\'' && t.back() == '\'')))
        t = trim(t.substr(1, t.size() - 2));
    // Trim a trailing parenthetical ("Yao Ming (basketball player)").
    auto paren = t.find(" (");
    if (paren != std::string::npos && t.back() == ')') t = trim(t.substr(0, paren));
    return strip_honorific(std::move(t));
}

}  // namespace detail

// Split a free-form response into name items: numbered or bulleted lines,
// bare lines, or a comma-separated single line.
inline std::vector<std::string> split_name_items(const std::string& raw_text) {
    std::string body = strip_markdown_fences(raw_text);
    std::vector<std::string> lines;
    for (const auto& raw : split_lines(body)) {
        std::string line = trim(raw);
        if (!line.empty()) lines.push_back(line);
    }
    std::vector<std::string> items;
    if (lines.size() == 1 && contains(lines[0], ",")) {
        for (auto& piece : split(lines[0], ',')) {
            std::string name = detail::clean_name(piece);
            if (!name.empty()) items.push_back(std::move(name));
        }
        return items;
    }
    for (auto& line : lines) {
        std::string item = line;
        std::size_t i = 0;
        while (i < item.size() && std::isdigit(static_cast<unsigned char>(item[i]))) ++i;
        if (i > 0 && i < item.size() && (item[i] == '.' || item[i] == ')' || item[i] == ':'))
            item = item.substr(i + 1);
        else if (item[0] == '-' || item[0] == '*')
            item = item.substr(1);
        else if (i == 0 && lines.size() > 1 && items.empty() && item.back() == ':')
            continue;  // header line like "Here are 10 names:"
        std::string name = detail::clean_name(item);
        if (!name.empty()) items.push_back(std::move(name));
    }
    return items;
}

inline NameList parse_name_list(const std::string& raw_text, int expected = 10) {
    NameList list;
    list.names = split_name_items(raw_text);
    list.count_ok = list.names.size() == static_cast<std::size_t>(expected);
    return list;
}

// --------------------------------------------------------- choice generation

inline constexpr const char* kDefaultChoiceTemplate =
    "Given the following statement: \"{statement}\"\n"
    "Provide four different perspectives (two agreeing and two disagreeing).\n"
    "Each perspective should include:\n"
    "- A valence: \"agree\" or \"disagree\"\n"
    "- An explanation for why someone might hold this view.\n"
    "\n"
    "Example response:\n"
    "Statement: You should not feel obligated to go to your family reunions\n"
    "1. { \"valence\": \"agree\", \"explanation\": \"Obligations shouldn't dictate personal "
    "choices; you should only go if you want to.\" }\n"
    "2. { \"valence\": \"agree\", \"explanation\": \"Forced interactions can cause unnecessary "
    "stress and discomfort.\" }\n"
    "3. { \"valence\": \"disagree\", \"explanation\": \"Family reunions are important for "
    "maintaining family bonds.\" }\n"
    "4. { \"valence\": \"disagree\", \"explanation\": \"Spending time with family, even if you "
    "don't remember them well, can create new memories.\" }\n"
    "Provide your response in JSON format.";

namespace detail {

inline std::optional<ChoiceSet> try_parse_choice_set(const std::string& statement_id,
                                                     const std::string& response) {
    std::vector<json> objects = parse_lenient_json(response);
    // A single wrapper object holding the list is also accepted.
    if (objects.size() == 1 && objects[0].is_object()) {
        const json& only = objects[0];
        for (const char* key : {"choices", "perspectives", "responses"}) {
            if (only.contains(key) && only[key].is_array()) {
                objects = std::vector<json>(only[key].begin(), only[key].end());
                break;
            }
        }
    }
    std::vector<Choice> parsed;
    for (const auto& obj : objects) {
        if (!obj.is_object() || !obj.contains("valence") || !obj.contains("explanation")) continue;
        Choice c;
        try {
            c.valence = valence_from_name(obj["valence"].get<std::string>());
        } catch (const InvalidChoiceSet&) {
            continue;
        }
        c.explanation = trim(obj["explanation"].get<std::string>());
        if (c.explanation.empty()) continue;
        parsed.push_back(std::move(c));
    }
    if (parsed.size() != 4) return std::nullopt;
    std::array<Choice, 4> four;
    int agree = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        four[i] = parsed[i];
        four[i].label = static_cast<Label>(i);
        if (four[i].valence == Valence::agree) ++agree;
    }
    if (agree != 2) return std::nullopt;
    return make_choice_set(statement_id, std::move(four));
}

}  // namespace detail

// Ask the gateway for two agreeing and two disagreeing perspectives and
// parse them into a ChoiceSet. One retry on invalid output, then a hard
// InvalidChoiceSet.
inline ChoiceSet generate_choice_set(const NormStatement& statement, Backend& gateway,
                                     const std::string& model_id,
                                     const std::string& prompt_template = kDefaultChoiceTemplate) {
    ChatRequest req;
    req.model_id = model_id;
    req.temperature = 0.7;
    req.messages = {{Role::user, detail::substitute(prompt_template, "statement", statement.text)}};
    for (int attempt = 0; attempt < 2; ++attempt) {
        ChatResponse resp = gateway.complete(req);
        if (auto cs = detail::try_parse_choice_set(statement.id, resp.text)) return *cs;
    }
    throw InvalidChoiceSet("could not obtain a valid 2/2 choice set for statement " +
                           statement.id);
}

// ------------------------------------------------------------- sanity check

inline constexpr const char* kDefaultDistractorTemplate =
    "Given the statement: \"{statement}\"\n"
    "Write three short response options that are logically nonsensical as reasons for agreeing "
    "or disagreeing with the statement. Each must be grammatical but completely unrelated to "
    "the statement's topic. Return one per line, numbered.";

struct SanityItem {
    ChoiceSet set;
    Label key = Label::A;  // position of the plausible choice
};

// Adversarial item: one plausible choice and three generated nonsense
// distractors, label positions shuffled deterministically per seed.
inline SanityItem build_sanity_item(const NormStatement& statement,
                                    const std::string& plausible_choice, Backend& gateway,
                                    const std::string& model_id, std::uint64_t rng_seed,
                                    const std::string& prompt_template = kDefaultDistractorTemplate) {
    ChatRequest req;
    req.model_id = model_id;
    req.temperature = 0.7;
    req.messages = {{Role::user, detail::substitute(prompt_template, "statement", statement.text)}};
    ChatResponse resp = gateway.complete(req);
    auto distractors = detail::parse_listing(resp.text);
    if (distractors.size() < 3)
        throw MalformedResponse("expected 3 distractors, got " +
                                std::to_string(distractors.size()));
    distractors.resize(3);

    std::vector<std::size_t> order{0, 1, 2, 3};  // slot 0 = plausible
    SeededRng rng(derive_seed(rng_seed, statement.id));
    rng.shuffle(order);

    // Valences keep the 2/2 split: the plausible answer and one distractor
    // agree, the other two distractors disagree.
    std::array<Valence, 4> valences = {Valence::agree, Valence::agree, Valence::disagree,
                                       Valence::disagree};
    std::array<Choice, 4> choices;
    Label key = Label::A;
    for (std::size_t pos = 0; pos < 4; ++pos) {
        std::size_t slot = order[pos];
        choices[pos].label = static_cast<Label>(pos);
        choices[pos].valence = valences[slot];
        choices[pos].explanation = slot == 0 ? plausible_choice : distractors[slot - 1];
        if (slot == 0) key = static_cast<Label>(pos);
    }
    return SanityItem{make_choice_set(statement.id, std::move(choices)), key};
}

struct SanityScore {
    double accuracy = 0.0;
    int correct = 0;
    int total = 0;
    int unparsable = 0;
};

// Fraction of answers matching the keys; unparsable answers count as wrong
// and are also reported separately.
inline SanityScore score_sanity(const std::vector<std::optional<Label>>& answers,
                                const std::vector<Label>& keys) {
    if (answers.size() != keys.size())
        throw LengthMismatch("score_sanity: answers and keys differ in length");
    if (answers.empty()) throw EmptySet("score_sanity: no answers");
    SanityScore score;
    score.total = static_cast<int>(answers.size());
    for (std::size_t i = 0; i < answers.size(); ++i) {
        if (!answers[i]) {
            ++score.unparsable;
            continue;
        }
        if (*answers[i] == keys[i]) ++score.correct;
    }
    score.accuracy = static_cast<double>(score.correct) / static_cast<double>(score.total);
    return score;
}

// ----------------------------------------------------------- item rendering

inline constexpr const char* kDefaultMcInstruction =
    "Which of the following perspectives on this statement do you agree with most?\n"
    "Statement: {statement}\n\n"
    "{choices}\n"
    "Answer with a single letter (A, B, C, or D).";

inline constexpr const char* kDefaultPeopleInstruction =
    "{question}\nPlease list exactly {n} names. Return one name per line, numbered, with no "
    "extra commentary.";

// Full multiple-choice item body. Choices render as "A. Agree. <explanation>".
inline std::string render_mc_item(const NormStatement& statement, const ChoiceSet& cs,
                                  const std::string& instruction_template = kDefaultMcInstruction) {
    std::string choices;
    for (const auto& c : cs.choices) {
        choices += std::string(1, label_char(c.label)) + ". " +
                   (c.valence == Valence::agree ? "Agree. " : "Disagree. ") + c.explanation + "\n";
    }
    std::string body = detail::substitute(instruction_template, "statement", statement.text);
    return detail::substitute(body, "choices", choices);
}

inline std::string render_people_item(const PeopleQuery& query, int n_names,
                                      const std::string& instruction_template = kDefaultPeopleInstruction) {
    std::string body = detail::substitute(instruction_template, "question", query.text);
    return detail::substitute(body, "n", std::to_string(n_names));
}

}  // namespace polyprompt
