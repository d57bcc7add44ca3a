#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "polyprompt/annotation.hpp"
#include "polyprompt/config.hpp"
#include "polyprompt/csv.hpp"
#include "polyprompt/culture.hpp"
#include "polyprompt/embedding.hpp"
#include "polyprompt/metrics.hpp"
#include "polyprompt/prompts.hpp"
#include "polyprompt/tasks.hpp"
#include "polyprompt/translation.hpp"

namespace polyprompt {

enum class Task { social_norm, people };

inline const char* task_name(Task t) { return t == Task::social_norm ? "social_norm" : "people"; }

inline Task task_from_name(const std::string& name) {
    if (name == "social_norm") return Task::social_norm;
    if (name == "people") return Task::people;
    throw ConfigError("unknown task: " + name);
}

// ----------------------------------------------------------- run directory

struct RunPaths {
    std::filesystem::path dir;

    std::filesystem::path config() const { return dir / "config.json"; }
    std::filesystem::path cache() const { return dir / "cache"; }
    std::filesystem::path translations() const { return dir / "translations.jsonl"; }
    std::filesystem::path choices() const { return dir / "choices.jsonl"; }
    std::filesystem::path annotations() const { return dir / "annotations.jsonl"; }
    std::filesystem::path responses() const { return dir / "responses.jsonl"; }
    std::filesystem::path report_csv() const { return dir / "report.csv"; }
    std::filesystem::path report_json() const { return dir / "report.json"; }
    std::filesystem::path plots() const { return dir / "plots"; }
};

// --------------------------------------------------------- experiment config

struct ExperimentConfig {
    Task task = Task::social_norm;
    StrategyKind strategy = StrategyKind::Monolingual;
    int k = 3;
    std::vector<std::string> culture_tags;  // k tags for culture-bearing strategies
    std::filesystem::path dataset_path;
    std::string model_id = "gpt-4o";
    std::uint64_t seed = 0;
    int parallelism = 4;
    int names_total = 30;
    int max_items = 0;  // 0 = whole dataset
    std::string run_id;
    std::filesystem::path choices_path;  // optional shared choice sets
    double controversy_lo = 0.25;
    double controversy_hi = 0.75;

    void validate() const {
        if (k < 2 || k > 8) throw ConfigError("k must be in [2, 8], got " + std::to_string(k));
        if (strategy_uses_cultures(strategy)) {
            if (culture_tags.size() != static_cast<std::size_t>(k))
                throw BadArity("strategy '" + std::string(strategy_name(strategy)) +
                               "' needs exactly " + std::to_string(k) + " cultures, got " +
                               std::to_string(culture_tags.size()));
            std::set<std::string> unique(culture_tags.begin(), culture_tags.end());
            if (unique.size() != culture_tags.size())
                throw ConfigError("culture tags must be distinct");
        }
        if (task == Task::people && names_total < k)
            throw ConfigError("names_total must be at least k");
    }

    // Deterministic run id from the experiment identity.
    std::string derived_run_id() const {
        std::uint64_t h = fnv1a64(task_name(task));
        h = fnv1a64(strategy_name(strategy), h);
        h = fnv1a64(static_cast<std::uint64_t>(k), h);
        for (const auto& t : culture_tags) h = fnv1a64(t, h);
        h = fnv1a64(dataset_path.string(), h);
        h = fnv1a64(model_id, h);
        h = fnv1a64(seed, h);
        h = fnv1a64(static_cast<std::uint64_t>(names_total), h);
        h = fnv1a64(static_cast<std::uint64_t>(max_items), h);
        return "run_" + to_hex(h).substr(4);
    }

    std::string effective_run_id() const { return run_id.empty() ? derived_run_id() : run_id; }

    json to_json() const {
        return json{{"task", task_name(task)},
                    {"strategy", strategy_name(strategy)},
                    {"k", k},
                    {"cultures", culture_tags},
                    {"dataset_path", dataset_path.string()},
                    {"model_id", model_id},
                    {"seed", seed},
                    {"parallelism", parallelism},
                    {"names_total", names_total},
                    {"max_items", max_items},
                    {"run_id", effective_run_id()},
                    {"choices_path", choices_path.string()},
                    {"controversy_lo", controversy_lo},
                    {"controversy_hi", controversy_hi}};
    }

    static ExperimentConfig from_json(const json& j) {
        ExperimentConfig c;
        c.task = task_from_name(j.at("task").get<std::string>());
        c.strategy = strategy_from_name(j.at("strategy").get<std::string>());
        c.k = j.at("k").get<int>();
        for (const auto& t : j.at("cultures")) c.culture_tags.push_back(t.get<std::string>());
        c.dataset_path = j.at("dataset_path").get<std::string>();
        c.model_id = j.at("model_id").get<std::string>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.parallelism = j.value("parallelism", 4);
        c.names_total = j.value("names_total", 30);
        c.max_items = j.value("max_items", 0);
        c.run_id = j.value("run_id", "");
        c.choices_path = j.value("choices_path", "");
        c.controversy_lo = j.value("controversy_lo", 0.25);
        c.controversy_hi = j.value("controversy_hi", 0.75);
        return c;
    }
};

// ------------------------------------------------------------- run records

// One dispatched variant with everything needed to rescore it offline.
struct VariantRecord {
    int item_index = 0;
    std::string item_id;
    std::string item_text;  // raw statement / question text
    int variant_index = 0;
    std::string culture_tag;   // empty for culture-free strategies
    std::string language_tag;
    bool needs_translation = false;
    std::string preamble;      // pivot-language form
    std::string body;          // pivot-language form
    std::string request_key;
    std::string response_text;      // raw model output
    std::string translated_text;    // pivot-language output
    bool failed = false;
    std::string error;

    json to_json(Task task) const {
        json j{{"item_index", item_index},
               {"item_id", item_id},
               {"item_text", item_text},
               {"variant_index", variant_index},
               {"culture_tag", culture_tag},
               {"language_tag", language_tag},
               {"needs_translation", needs_translation},
               {"preamble", preamble},
               {"body", body},
               {"request_key", request_key},
               {"response_text", response_text},
               {"translated_text", translated_text},
               {"failed", failed},
               {"error", error}};
        j["task"] = task_name(task);
        return j;
    }

    static VariantRecord from_json(const json& j) {
        VariantRecord r;
        r.item_index = j.at("item_index").get<int>();
        r.item_id = j.at("item_id").get<std::string>();
        r.item_text = j.value("item_text", "");
        r.variant_index = j.at("variant_index").get<int>();
        r.culture_tag = j.value("culture_tag", "");
        r.language_tag = j.value("language_tag", "");
        r.needs_translation = j.value("needs_translation", false);
        r.preamble = j.value("preamble", "");
        r.body = j.value("body", "");
        r.request_key = j.value("request_key", "");
        r.response_text = j.value("response_text", "");
        r.translated_text = j.value("translated_text", "");
        r.failed = j.value("failed", false);
        r.error = j.value("error", "");
        return r;
    }
};

struct ItemScores {
    std::string item_id;
    bool failed = false;
    std::string error;
    int answered = 0;   // parsed answers (social) or valid names (people)
    int excluded = 0;   // unparsable answers / dropped names
    // NaN = not computed for this item.
    double reason = std::numeric_limits<double>::quiet_NaN();
    double valence = std::numeric_limits<double>::quiet_NaN();
    double perspective = std::numeric_limits<double>::quiet_NaN();
    double nationality = std::numeric_limits<double>::quiet_NaN();
    double ethnicity = std::numeric_limits<double>::quiet_NaN();
    double region = std::numeric_limits<double>::quiet_NaN();
    double demo_avg = std::numeric_limits<double>::quiet_NaN();
};

// Per-strategy aggregate over one run.
struct MetricReport {
    std::string run_id;
    Task task = Task::social_norm;
    std::string strategy;
    int k = 0;
    std::string model_id;
    int items_total = 0;
    int items_failed = 0;
    int units_expected = 0;  // k answers or names_total names per item
    int units_excluded = 0;
    std::optional<double> reason, valence, perspective;
    std::optional<double> nationality, ethnicity, region, demo_avg;
    std::vector<ItemScores> items;
    // Paired permutation p-values against a baseline run, when requested.
    std::string baseline_run_id;
    std::map<std::string, double> significance;

    double exclusion_rate() const {
        return units_expected == 0
                   ? 0.0
                   : static_cast<double>(units_excluded) / static_cast<double>(units_expected);
    }

    json to_json() const {
        auto opt = [](const std::optional<double>& v) {
            return v ? json(*v) : json(nullptr);
        };
        json items_json = json::array();
        for (const auto& it : items) {
            json j{{"item_id", it.item_id},
                   {"failed", it.failed},
                   {"answered", it.answered},
                   {"excluded", it.excluded}};
            if (!it.error.empty()) j["error"] = it.error;
            auto put = [&](const char* key, double v) {
                if (!std::isnan(v)) j[key] = v;
            };
            put("reason", it.reason);
            put("valence", it.valence);
            put("perspective", it.perspective);
            put("nationality", it.nationality);
            put("ethnicity", it.ethnicity);
            put("region", it.region);
            put("demo_avg", it.demo_avg);
            items_json.push_back(std::move(j));
        }
        json j{{"run_id", run_id},
               {"task", task_name(task)},
               {"strategy", strategy},
               {"k", k},
               {"model_id", model_id},
               {"items_total", items_total},
               {"items_failed", items_failed},
               {"units_expected", units_expected},
               {"units_excluded", units_excluded},
               {"exclusion_rate", exclusion_rate()},
               {"means",
                {{"reason", opt(reason)},
                 {"valence", opt(valence)},
                 {"perspective", opt(perspective)},
                 {"nationality", opt(nationality)},
                 {"ethnicity", opt(ethnicity)},
                 {"region", opt(region)},
                 {"demo_avg", opt(demo_avg)}}},
               {"items", items_json}};
        if (!significance.empty()) {
            j["significance_baseline"] = baseline_run_id;
            j["significance"] = significance;
        }
        return j;
    }
};

namespace detail {

inline std::optional<double> mean_of(const std::vector<ItemScores>& items,
                                     double ItemScores::*field) {
    double sum = 0.0;
    int n = 0;
    for (const auto& it : items) {
        double v = it.*field;
        if (!std::isnan(v)) {
            sum += v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

inline std::string format_metric(const std::optional<double>& v) {
    if (!v) return "---";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
}

}  // namespace detail

// ------------------------------------------------------------ scoring logic

// Recomputable scoring: everything below runs identically during a live run
// and during `metrics` recomputation from persisted artifacts.

inline ItemScores score_social_item(const std::string& item_id,
                                    const std::vector<VariantRecord>& records,
                                    const ChoiceSet& cs, const EmbeddingSet& emb) {
    ItemScores s;
    s.item_id = item_id;
    std::vector<Label> labels;
    for (const auto& r : records) {
        if (r.failed) {
            ++s.excluded;
            continue;
        }
        auto label = parse_mc_answer(r.translated_text, cs);
        if (label)
            labels.push_back(*label);
        else
            ++s.excluded;
    }
    s.answered = static_cast<int>(labels.size());
    if (labels.empty()) {
        s.failed = true;
        s.error = "no parsable answers";
        return s;
    }
    ChoiceDistribution dist;
    for (Label l : labels) dist.add(l);
    s.reason = reason_entropy(dist);
    s.valence = valence_entropy(labels, cs);
    if (labels.size() >= 2) s.perspective = perspective_diversity(labels, emb);
    return s;
}

inline ItemScores score_people_item(const std::string& item_id,
                                    const std::vector<VariantRecord>& records,
                                    const std::map<std::string, DemographicLabel>& annotations,
                                    const std::vector<int>& quotas) {
    ItemScores s;
    s.item_id = item_id;
    std::vector<std::string> pooled;
    for (const auto& r : records) {
        int expected = r.variant_index < static_cast<int>(quotas.size())
                           ? quotas[static_cast<std::size_t>(r.variant_index)]
                           : 0;
        if (r.failed) {
            s.excluded += expected;
            continue;
        }
        NameList list = parse_name_list(r.translated_text, expected);
        if (!list.count_ok) {
            // Count-violating lists are dropped whole, per the instruction-
            // following analysis; the bound adjusts to the realized total.
            s.excluded += expected;
            continue;
        }
        for (auto& n : list.names) pooled.push_back(n);
    }
    std::vector<DemographicLabel> labels;
    for (const auto& name : pooled) {
        auto it = annotations.find(name);
        if (it != annotations.end())
            labels.push_back(it->second);
        else
            ++s.excluded;
    }
    s.answered = static_cast<int>(labels.size());
    if (labels.empty()) {
        s.failed = true;
        s.error = "no annotated names";
        return s;
    }
    s.nationality = demographic_entropy(labels, Attribute::nationality);
    s.ethnicity = demographic_entropy(labels, Attribute::ethnicity);
    s.region = demographic_entropy(labels, Attribute::region);
    s.demo_avg = (s.nationality + s.ethnicity + s.region) / 3.0;
    return s;
}

// Per-language name quotas: floor(total/k) each, remainder to the pivot
// variant (or variant 0 when no variant is pivot-cultured).
inline std::vector<int> people_quotas(int names_total, int k,
                                      const std::vector<std::string>& variant_tags,
                                      const std::string& pivot) {
    std::vector<int> quotas(static_cast<std::size_t>(k), names_total / k);
    int remainder = names_total - (names_total / k) * k;
    std::size_t pivot_idx = 0;
    for (std::size_t i = 0; i < variant_tags.size(); ++i) {
        if (variant_tags[i] == pivot) {
            pivot_idx = i;
            break;
        }
    }
    quotas[pivot_idx] += remainder;
    return quotas;
}

// --------------------------------------------------------------- aggregation

inline MetricReport aggregate_report(const ExperimentConfig& cfg,
                                     std::vector<ItemScores> item_scores) {
    MetricReport rep;
    rep.run_id = cfg.effective_run_id();
    rep.task = cfg.task;
    rep.strategy = strategy_name(cfg.strategy);
    rep.k = cfg.k;
    rep.model_id = cfg.model_id;
    rep.items_total = static_cast<int>(item_scores.size());
    for (const auto& it : item_scores) {
        if (it.failed) ++rep.items_failed;
        rep.units_excluded += it.excluded;
    }
    int per_item = cfg.task == Task::social_norm ? cfg.k : cfg.names_total;
    rep.units_expected = rep.items_total * per_item;
    rep.reason = detail::mean_of(item_scores, &ItemScores::reason);
    rep.valence = detail::mean_of(item_scores, &ItemScores::valence);
    rep.perspective = detail::mean_of(item_scores, &ItemScores::perspective);
    rep.nationality = detail::mean_of(item_scores, &ItemScores::nationality);
    rep.ethnicity = detail::mean_of(item_scores, &ItemScores::ethnicity);
    rep.region = detail::mean_of(item_scores, &ItemScores::region);
    rep.demo_avg = detail::mean_of(item_scores, &ItemScores::demo_avg);
    rep.items = std::move(item_scores);
    return rep;
}

// -------------------------------------------------------------- report files

inline const std::vector<std::string>& report_metric_columns() {
    static const std::vector<std::string> cols = {
        "reason", "agreement", "perspective", "nationality", "ethnicity", "region", "demo_avg"};
    return cols;
}

inline std::vector<std::string> report_csv_header() {
    std::vector<std::string> header = {"run_id", "task", "strategy", "k", "model", "items"};
    for (const auto& c : report_metric_columns()) header.push_back(c);
    header.push_back("exclusion_rate");
    return header;
}

inline std::vector<std::string> report_csv_row(const MetricReport& rep) {
    std::vector<std::string> row = {rep.run_id,  task_name(rep.task),
                                    rep.strategy, std::to_string(rep.k),
                                    rep.model_id, std::to_string(rep.items_total)};
    row.push_back(detail::format_metric(rep.reason));
    row.push_back(detail::format_metric(rep.valence));
    row.push_back(detail::format_metric(rep.perspective));
    row.push_back(detail::format_metric(rep.nationality));
    row.push_back(detail::format_metric(rep.ethnicity));
    row.push_back(detail::format_metric(rep.region));
    row.push_back(detail::format_metric(rep.demo_avg));
    row.push_back(detail::format_metric(rep.exclusion_rate()));
    return row;
}

// Combined table plus per-metric plot data. Missing metrics render as "---"
// in the table and are omitted from plot files.
inline void emit_report(const std::vector<MetricReport>& reports,
                        const std::filesystem::path& out_dir) {
    if (reports.empty()) throw EmptySet("emit_report: no runs");
    std::filesystem::create_directories(out_dir);

    std::string csv = csv_row(report_csv_header());
    for (const auto& rep : reports) csv += csv_row(report_csv_row(rep));
    atomic_write_file(out_dir / "report.csv", csv);

    json combined = json::array();
    for (const auto& rep : reports) combined.push_back(rep.to_json());
    atomic_write_file(out_dir / "report.json", combined.dump(2) + "\n");

    auto metric_value = [](const MetricReport& rep,
                           const std::string& metric) -> std::optional<double> {
        if (metric == "reason") return rep.reason;
        if (metric == "agreement") return rep.valence;
        if (metric == "perspective") return rep.perspective;
        if (metric == "nationality") return rep.nationality;
        if (metric == "ethnicity") return rep.ethnicity;
        if (metric == "region") return rep.region;
        return rep.demo_avg;
    };

    std::filesystem::create_directories(out_dir / "plots");
    for (const auto& metric : report_metric_columns()) {
        // x = strategy
        std::string by_strategy = "strategy\t" + metric + "\n";
        bool any = false;
        for (const auto& rep : reports) {
            auto v = metric_value(rep, metric);
            if (!v) continue;
            by_strategy += rep.strategy + "\t" + detail::format_metric(v) + "\n";
            any = true;
        }
        if (any) atomic_write_file(out_dir / "plots" / (metric + "_by_strategy.tsv"), by_strategy);

        // x = number of languages
        std::map<int, std::pair<double, int>> by_k;
        for (const auto& rep : reports) {
            auto v = metric_value(rep, metric);
            if (!v) continue;
            by_k[rep.k].first += *v;
            by_k[rep.k].second += 1;
        }
        if (!by_k.empty()) {
            std::string sweep = "k\t" + metric + "\n";
            for (const auto& [k, acc] : by_k)
                sweep += std::to_string(k) + "\t" +
                         detail::format_metric(acc.first / acc.second) + "\n";
            atomic_write_file(out_dir / "plots" / (metric + "_by_k.tsv"), sweep);
        }
    }
}

// --------------------------------------------------------- significance test

// Two-sided paired permutation (sign-flip) test on the mean difference.
// Deterministic per seed. p = (#{|perm| >= |observed|} + 1) / (iters + 1).
inline double significance_test(const std::vector<double>& scores_a,
                                const std::vector<double>& scores_b, int iterations = 10000,
                                std::uint64_t seed = 0) {
    if (scores_a.size() != scores_b.size())
        throw LengthMismatch("significance_test: score vectors differ in length");
    if (scores_a.size() < 2) throw EmptySet("significance_test: need at least 2 paired scores");
    const std::size_t n = scores_a.size();
    std::vector<double> diffs(n);
    double observed = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        diffs[i] = scores_a[i] - scores_b[i];
        observed += diffs[i];
    }
    observed = std::abs(observed / static_cast<double>(n));

    SeededRng rng(derive_seed(seed, "significance"));
    long long at_least = 0;
    for (int it = 0; it < iterations; ++it) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += rng.next_bool() ? diffs[i] : -diffs[i];
        if (std::abs(sum / static_cast<double>(n)) >= observed - 1e-12) ++at_least;
    }
    return static_cast<double>(at_least + 1) / static_cast<double>(iterations + 1);
}

// Paired per-item p-values of `run` against `baseline` for every metric both
// runs scored, over the items scored in both. Metrics with fewer than two
// shared items are skipped.
inline std::map<std::string, double> significance_against(const MetricReport& run,
                                                          const MetricReport& baseline,
                                                          int iterations = 10000,
                                                          std::uint64_t seed = 0) {
    static const std::vector<std::pair<std::string, double ItemScores::*>> fields = {
        {"reason", &ItemScores::reason},         {"agreement", &ItemScores::valence},
        {"perspective", &ItemScores::perspective}, {"nationality", &ItemScores::nationality},
        {"ethnicity", &ItemScores::ethnicity},   {"region", &ItemScores::region},
        {"demo_avg", &ItemScores::demo_avg}};
    std::map<std::string, const ItemScores*> baseline_items;
    for (const auto& it : baseline.items) baseline_items[it.item_id] = &it;
    std::map<std::string, double> out;
    for (const auto& [name, field] : fields) {
        std::vector<double> a, b;
        for (const auto& it : run.items) {
            auto match = baseline_items.find(it.item_id);
            if (match == baseline_items.end()) continue;
            double va = it.*field;
            double vb = match->second->*field;
            if (std::isnan(va) || std::isnan(vb)) continue;
            a.push_back(va);
            b.push_back(vb);
        }
        if (a.size() >= 2) out[name] = significance_test(a, b, iterations, seed);
    }
    return out;
}

// ------------------------------------------------------ hallucination study

struct HallucinationPair {
    std::string pair_id;
    std::string question;
    std::string name;
    std::string strategy;
};

inline constexpr const char* kHallucinationCsvHeader =
    "pair_id,question,name,strategy,verdict_1,verdict_2,verdict_3";

inline void write_hallucination_csv(const std::filesystem::path& path,
                                    const std::vector<HallucinationPair>& pairs) {
    std::string out = std::string(kHallucinationCsvHeader) + "\n";
    for (const auto& p : pairs)
        out += csv_row({p.pair_id, p.question, p.name, p.strategy, "", "", ""});
    atomic_write_file(path, out);
}

struct ErrorRateResult {
    double rate = 0.0;
    int flagged = 0;
    int total = 0;      // rows with a decisive majority
    int tie_count = 0;  // rows excluded for missing/tied verdicts
};

namespace detail {

// yes/no verdict, tolerant of casing and y/n; empty = missing.
inline std::optional<bool> parse_verdict(const std::string& field) {
    std::string v = to_lower(trim(field));
    if (v.empty()) return std::nullopt;
    if (v == "yes" || v == "y" || v == "true" || v == "1" || v == "hallucination") return true;
    if (v == "no" || v == "n" || v == "false" || v == "0") return false;
    throw MalformedCsv("unrecognized verdict: '" + field + "'");
}

}  // namespace detail

// Majority vote over the three verdict columns of an annotated export.
// Rows with missing verdicts cannot be majority-voted; they are counted as
// ties and excluded from the rate. Complete binary rows always resolve.
inline ErrorRateResult compute_error_rate(const std::filesystem::path& csv_path) {
    std::vector<std::vector<std::string>> rows;
    try {
        rows = read_csv(csv_path);
    } catch (const DatasetError& e) {
        throw MalformedCsv(e.what());
    }
    if (rows.empty()) throw MalformedCsv("empty CSV: " + csv_path.string());

    const auto& header = rows.front();
    auto col = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (trim(header[i]) == name) return i;
        throw MalformedCsv("missing column '" + name + "' in " + csv_path.string());
    };
    std::array<std::size_t, 3> verdict_cols = {col("verdict_1"), col("verdict_2"),
                                               col("verdict_3")};

    ErrorRateResult result;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        int yes = 0, no = 0, present = 0;
        for (std::size_t c : verdict_cols) {
            if (c >= row.size()) continue;
            auto v = detail::parse_verdict(row[c]);
            if (!v) continue;
            ++present;
            (*v ? yes : no)++;
        }
        if (present < 3) {
            ++result.tie_count;
            continue;
        }
        ++result.total;
        if (yes > no) ++result.flagged;
    }
    if (result.total == 0 && result.tie_count == 0)
        throw MalformedCsv("no data rows in " + csv_path.string());
    result.rate = result.total == 0
                      ? 0.0
                      : static_cast<double>(result.flagged) / static_cast<double>(result.total);
    return result;
}

}  // namespace polyprompt
