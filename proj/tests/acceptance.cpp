// Acceptance suite: runs every criterion at its stated tolerance and prints
// one PASS/FAIL line per criterion. Exit code 0 only if all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "polyprompt/cli.hpp"
#include "polyprompt/http_backend.hpp"
#include "polyprompt/runner.hpp"

using namespace polyprompt;

namespace {

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& what) {
    if (!ok) throw CheckFailure(what);
}

void expect_near(double got, double want, double tol, const std::string& what) {
    if (!(std::abs(got - want) <= tol))
        throw CheckFailure(what + ": got " + std::to_string(got) + ", want " +
                           std::to_string(want) + " within " + std::to_string(tol));
}

std::filesystem::path source_root() { return POLYPROMPT_SOURCE_DIR; }

std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("polyprompt_accept_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

int run_cli_line(std::vector<std::string> args, std::string* out_text = nullptr) {
    args.insert(args.begin(), "polyprompt");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str();
    if (code != 0 && out_text) *out_text += "\nstderr: " + err.str();
    return code;
}

// ---------------------------------------------------------------- criterion 1

void criterion_h_max_values() {
    auto start = std::chrono::steady_clock::now();
    expect_near(h_max(3, 4), std::log(3.0), 1e-3, "h_max(3,4)");
    expect_near(h_max(4, 4), std::log(4.0), 1e-3, "h_max(4,4)");
    expect_near(h_max(5, 4), 1.332, 1e-3, "h_max(5,4)");
    expect_near(h_max(3, 2), 0.637, 1e-3, "h_max(3,2)");
    expect_near(h_max(4, 2), 0.693, 1e-3, "h_max(4,2)");
    expect_near(h_max(5, 2), 0.673, 1e-3, "h_max(5,2)");
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    expect(secs < 1.0, "h_max evaluation took " + std::to_string(secs) + "s, limit 1s");
}

// ---------------------------------------------------------------- criterion 2

double brute_force_entropy(const std::vector<long long>& counts) {
    long long total = 0;
    for (auto c : counts) total += c;
    double h = 0.0;
    for (auto c : counts)
        if (c > 0) {
            double p = double(c) / double(total);
            h -= p * std::log(p);
        }
    return h;
}

void criterion_h_max_optimality() {
    for (long long m = 2; m <= 4; ++m) {
        for (long long k = 1; k <= 12; ++k) {
            std::vector<long long> parts(static_cast<std::size_t>(m), 0);
            double best = 0.0;
            std::function<void(std::size_t, long long)> rec = [&](std::size_t idx,
                                                                  long long left) {
                if (idx + 1 == parts.size()) {
                    parts[idx] = left;
                    best = std::max(best, brute_force_entropy(parts));
                    return;
                }
                for (long long v = 0; v <= left; ++v) {
                    parts[idx] = v;
                    rec(idx + 1, left - v);
                }
            };
            rec(0, k);
            expect_near(h_max(k, m), best,
                        1e-9, "h_max(" + std::to_string(k) + "," + std::to_string(m) + ")");
        }
    }
}

// ---------------------------------------------------------------- criterion 3

void criterion_normalization_suite() {
    SeededRng rng(20240601);
    for (int trial = 0; trial < 10000; ++trial) {
        long long m = 2 + static_cast<long long>(rng.next_index(5));
        long long k = 1 + static_cast<long long>(rng.next_index(50));
        std::vector<long long> counts(static_cast<std::size_t>(m), 0);
        for (long long i = 0; i < k; ++i) ++counts[rng.next_index(static_cast<std::size_t>(m))];
        double norm = normalized_entropy(counts, m);
        expect(norm >= 0.0 && norm <= 1.0 + 1e-9,
               "normalized entropy out of [0,1]: " + std::to_string(norm));

        long long q = k / m, r = k - m * q;
        std::vector<long long> even;
        for (long long i = 0; i < m; ++i) even.push_back(i < r ? q + 1 : q);
        if (k > 1) expect_near(normalized_entropy(even, m), 1.0, 1e-9, "even spread");

        std::vector<long long> point(static_cast<std::size_t>(m), 0);
        point[rng.next_index(static_cast<std::size_t>(m))] = k;
        expect(normalized_entropy(point, m) == 0.0, "point mass must score exactly 0");
    }
}

// ---------------------------------------------------------------- criterion 4

double oracle_cos(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::min(1.0, std::max(-1.0, c));
}

double oracle_dissim(const std::vector<std::vector<double>>& sel) {
    double sum = 0;
    std::size_t k = sel.size();
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b) sum += 1.0 - oracle_cos(sel[a], sel[b]);
    return 2.0 * sum / (double(k) * double(k - 1));
}

double oracle_perspective(const std::vector<int>& selection,
                          const std::array<std::vector<double>, 4>& vecs) {
    std::vector<std::vector<double>> sel;
    for (int i : selection) sel.push_back(vecs[static_cast<std::size_t>(i)]);
    double numer = oracle_dissim(sel);
    double denom = 0.0;
    int k = static_cast<int>(selection.size());
    for (int c0 = 0; c0 <= k; ++c0)
        for (int c1 = 0; c0 + c1 <= k; ++c1)
            for (int c2 = 0; c0 + c1 + c2 <= k; ++c2) {
                int c3 = k - c0 - c1 - c2;
                std::vector<std::vector<double>> sub;
                sub.insert(sub.end(), static_cast<std::size_t>(c0), vecs[0]);
                sub.insert(sub.end(), static_cast<std::size_t>(c1), vecs[1]);
                sub.insert(sub.end(), static_cast<std::size_t>(c2), vecs[2]);
                sub.insert(sub.end(), static_cast<std::size_t>(c3), vecs[3]);
                denom = std::max(denom, oracle_dissim(sub));
            }
    if (denom <= 1e-12) return 0.0;
    return numer / denom;
}

void criterion_perspective_oracle() {
    SeededRng rng(8891);
    for (int trial = 0; trial < 200; ++trial) {
        EmbeddingSet emb;
        EmbeddingSet scaled;
        for (std::size_t i = 0; i < 4; ++i) {
            emb.vectors[i].resize(8);
            for (auto& x : emb.vectors[i]) x = rng.next_double() * 2.0 - 1.0;
            scaled.vectors[i] = emb.vectors[i];
            for (auto& x : scaled.vectors[i]) x *= 2.5;
        }
        EmbeddingSet permuted = emb;  // relabel A<->D, B<->C
        std::swap(permuted.vectors[0], permuted.vectors[3]);
        std::swap(permuted.vectors[1], permuted.vectors[2]);
        auto relabel = [](Label l) {
            switch (l) {
                case Label::A: return Label::D;
                case Label::D: return Label::A;
                case Label::B: return Label::C;
                case Label::C: return Label::B;
            }
            return l;
        };
        for (std::size_t k = 2; k <= 4; ++k) {
            std::vector<int> sel(k, 0);
            for (;;) {
                std::vector<Label> labels, relabeled;
                for (int i : sel) {
                    labels.push_back(static_cast<Label>(i));
                    relabeled.push_back(relabel(static_cast<Label>(i)));
                }
                double got = perspective_diversity(labels, emb);
                expect_near(got, oracle_perspective(sel, emb.vectors), 1e-9,
                            "perspective vs brute force");
                expect_near(got, perspective_diversity(labels, scaled), 1e-9,
                            "scaling invariance");
                expect_near(got, perspective_diversity(relabeled, permuted), 1e-9,
                            "relabeling invariance");
                std::size_t pos = 0;
                while (pos < k && sel[pos] == 3) sel[pos++] = 0;
                if (pos == k) break;
                ++sel[pos];
            }
        }
    }
}

// ---------------------------------------------------------------- criterion 5

void criterion_demographic_bounds() {
    std::vector<DemographicLabel> distinct;
    for (int i = 0; i < 30; ++i)
        distinct.push_back({"n" + std::to_string(i), "nation-" + std::to_string(i), "eth",
                            "Europe"});
    expect_near(demographic_entropy(distinct, Attribute::nationality), 1.0, 1e-9,
                "30 distinct nationalities");

    std::vector<DemographicLabel> identical(30, {"n", "Chinese", "Han", "East Asia"});
    expect(demographic_entropy(identical, Attribute::nationality) == 0.0,
           "30 identical labels must score 0");

    const char* regions[8] = {"Europe",        "East Asia",     "South Asia", "Middle East",
                              "North America", "Latin America", "Africa",     "Oceania"};
    std::vector<DemographicLabel> spread;
    for (int r = 0; r < 8; ++r)
        for (int i = 0; i < (r < 6 ? 4 : 3); ++i)
            spread.push_back({"n", "x", "y", regions[r]});
    expect(spread.size() == 30, "region fixture size");
    expect_near(demographic_entropy(spread, Attribute::region), 1.0, 1e-9,
                "4,4,4,4,4,4,3,3 region split");
}

// ---------------------------------------------------------------- criterion 6

void criterion_mock_end_to_end() {
    auto start = std::chrono::steady_clock::now();
    auto runs = fresh_dir("e2e");
    auto statements = (source_root() / "data" / "statements.jsonl").string();
    auto script = (source_root() / "config" / "demo_script.json").string();
    auto cultures = (source_root() / "config" / "cultures.json").string();

    auto run_once = [&](const std::string& strategy, std::string* out) {
        return run_cli_line({"--runs-dir", runs.string(), "--cultures-file", cultures, "--json",
                             "run", "--task", "social_norm", "--strategy", strategy, "--cultures",
                             "en,zh,ja", "--dataset", statements, "--backend", "mock", "--script",
                             script, "--seed", "7", "--max-items", "3"},
                            out);
    };

    std::string ml_out;
    expect(run_once("basic_multilingual", &ml_out) == 0, "multilingual run failed: " + ml_out);
    json ml = json::parse(ml_out);
    expect_near(ml.at("means").at("reason").get<double>(), 1.0, 1e-9,
                "basic multilingual reason entropy");

    std::string mono_out;
    expect(run_once("monolingual", &mono_out) == 0, "monolingual run failed: " + mono_out);
    json mono = json::parse(mono_out);
    expect_near(mono.at("means").at("reason").get<double>(), 0.0, 1e-12,
                "monolingual reason entropy");

    // byte-identical reports across reruns
    std::string ml_id = ml.at("run_id").get<std::string>();
    std::string report = read_file(runs / ml_id / "report.json");
    std::string csv = read_file(runs / ml_id / "report.csv");
    std::string rerun_out;
    expect(run_once("basic_multilingual", &rerun_out) == 0, "rerun failed");
    expect(read_file(runs / ml_id / "report.json") == report, "report.json changed on rerun");
    expect(read_file(runs / ml_id / "report.csv") == csv, "report.csv changed on rerun");

    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    expect(secs < 5.0, "mock end-to-end took " + std::to_string(secs) + "s, limit 5s");
}

// ---------------------------------------------------------------- criterion 7

void criterion_error_rates() {
    auto root = source_root() / "data" / "hallucination";
    struct Case {
        const char* file;
        int flagged;
        double paper_pct;
    };
    for (const Case& c : {Case{"chinese_multilingual_basic.csv", 13, 12.4},
                          Case{"chinese_multicultural_basic.csv", 28, 26.7},
                          Case{"chinese_multilingual_enhanced.csv", 8, 7.7},
                          Case{"chinese_multicultural_enhanced.csv", 20, 19.0}}) {
        ErrorRateResult r = compute_error_rate(root / c.file);
        expect(r.flagged == c.flagged && r.total == 105,
               std::string(c.file) + ": expected " + std::to_string(c.flagged) + "/105, got " +
                   std::to_string(r.flagged) + "/" + std::to_string(r.total));
        expect_near(r.rate * 100.0, c.paper_pct, 0.1,
                    std::string(c.file) + " percentage");
    }
}

// ---------------------------------------------------------------- criterion 8

void criterion_sanity_harness() {
    auto runs = fresh_dir("sanity");
    auto statements = (source_root() / "data" / "statements.jsonl").string();
    auto cultures = (source_root() / "config" / "cultures.json").string();

    auto write_script = [&](bool one_miss) {
        json rules = json::array();
        rules.push_back({{"match", "logically nonsensical"},
                         {"response",
                          "1. The moon tastes like purple arithmetic.\n"
                          "2. Seven is the loudest color of soup.\n"
                          "3. My bicycle firmly agrees with the weather."}});
        rules.push_back({{"match", "re:Translate the following text[\\s\\S]*?\\n\\n([\\s\\S]+)"},
                         {"response", "{1}"}});
        if (one_miss)
            rules.push_back({{"match", "money on things"}, {"response", "none of these"}});
        rules.push_back({{"match", "re:([A-D])\\. (?:Agree|Disagree)\\. A thoughtful view"},
                         {"response", "{1}"}});
        rules.push_back({{"match", "*"}, {"response", "A"}});
        auto path = runs / (one_miss ? "miss.json" : "ace.json");
        atomic_write_file(path, rules.dump());
        return path.string();
    };

    std::string ace_out;
    int code = run_cli_line({"--runs-dir", runs.string(), "--cultures-file", cultures, "sanity",
                             "--languages", "en,zh,ja", "--dataset", statements, "--backend",
                             "mock", "--script", write_script(false), "--seed", "11"},
                            &ace_out);
    expect(code == 0, "sanity command failed: " + ace_out);
    for (const char* lang : {"en", "zh", "ja"})
        expect(contains(ace_out, std::string(lang) + ": 10/10"),
               std::string("expected ") + lang + ": 10/10 in\n" + ace_out);

    std::string miss_out;
    code = run_cli_line({"--runs-dir", runs.string(), "--cultures-file", cultures, "sanity",
                         "--languages", "en,zh", "--dataset", statements, "--backend", "mock",
                         "--script", write_script(true), "--seed", "11"},
                        &miss_out);
    expect(code == 0, "sanity (one miss) failed: " + miss_out);
    for (const char* lang : {"en", "zh"})
        expect(contains(miss_out, std::string(lang) + ": 9/10"),
               std::string("expected ") + lang + ": 9/10 in\n" + miss_out);
}

// ---------------------------------------------------------------- criterion 9

void criterion_significance() {
    std::vector<double> a{0.2, 0.4, 0.6, 0.8, 0.5};
    expect(significance_test(a, a, 10000, 1) == 1.0, "identical vectors must give p = 1");

    SeededRng rng(17);
    std::vector<double> base, shifted;
    for (int i = 0; i < 50; ++i) {
        double noise = rng.next_double();  // sigma ~ 0.3
        base.push_back(noise);
        shifted.push_back(noise + 10.0);   // delta = 10 sigma and more
    }
    double p = significance_test(shifted, base, 10000, 2);
    expect(p <= 0.001, "shifted vectors gave p = " + std::to_string(p));

    expect(significance_test(shifted, base, 10000, 2) == p, "p varies under a fixed seed");
}

// --------------------------------------------------------------- criterion 10

void criterion_resumability() {
    auto runs = fresh_dir("resume");
    auto statements = (source_root() / "data" / "statements.jsonl").string();
    auto script = (source_root() / "config" / "demo_script.json").string();
    auto cultures = (source_root() / "config" / "cultures.json").string();

    std::vector<std::string> base_args = {
        "--runs-dir", runs.string(), "--cultures-file", cultures, "--json", "run", "--task",
        "social_norm", "--strategy", "basic_multilingual", "--cultures", "en,zh,ja", "--dataset",
        statements, "--seed", "7", "--max-items", "3"};

    std::string record_out;
    std::vector<std::string> record_args = base_args;
    record_args.insert(record_args.end(), {"--backend", "mock", "--script", script});
    expect(run_cli_line(record_args, &record_out) == 0, "recording run failed: " + record_out);
    std::string run_id = json::parse(record_out).at("run_id").get<std::string>();
    std::string report = read_file(runs / run_id / "report.json");
    std::string csv = read_file(runs / run_id / "report.csv");
    std::string responses = read_file(runs / run_id / "responses.jsonl");

    std::string replay_out;
    std::vector<std::string> replay_args = base_args;
    replay_args.insert(replay_args.end(), {"--backend", "replay"});
    expect(run_cli_line(replay_args, &replay_out) == 0, "replay run failed: " + replay_out);
    expect(read_file(runs / run_id / "report.json") == report,
           "replayed report.json is not byte-identical");
    expect(read_file(runs / run_id / "report.csv") == csv,
           "replayed report.csv is not byte-identical");
    expect(read_file(runs / run_id / "responses.jsonl") == responses,
           "replayed responses.jsonl is not byte-identical");

    // Zero network operations: a replay wrapper over a transport-counting
    // backend must never invoke it.
    int transport_calls = 0;
    Transport counting = [&](const std::string&, const std::string&, const std::string&) {
        ++transport_calls;
        return HttpResult{200, "{}", ""};
    };
    auto http = std::make_shared<HttpBackend>(counting);
    auto profiles = load_cultures(source_root() / "config" / "cultures.json");
    AppConfig app;
    ExperimentConfig cfg;
    cfg.task = Task::social_norm;
    cfg.strategy = StrategyKind::BasicMultilingual;
    cfg.k = 3;
    cfg.culture_tags = {"en", "zh", "ja"};
    cfg.dataset_path = statements;
    cfg.model_id = "gpt-4o";
    cfg.seed = 7;
    cfg.max_items = 3;
    Pipeline replayer(app, profiles,
                      [&](const RunPaths& p) {
                          return std::make_shared<CachingBackend>(http, p.cache(),
                                                                  CacheMode::replay);
                      },
                      std::make_shared<CachingEmbedder>(std::make_shared<HashEmbedder>()), runs);
    RunRecord replayed = replayer.run(cfg);
    expect(transport_calls == 0, "replay touched the network transport");
    expect(read_file(replayed.paths.report_json()) == report,
           "library replay drifted from the recorded report");
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* title;
        std::function<void()> check;
    };
    const std::vector<Criterion> criteria = {
        {1, "H_max reproduces the published constants within 1e-3 in under 1s",
         criterion_h_max_values},
        {2, "H_max equals the brute-force composition maximum (k<=12, m in 2..4)",
         criterion_h_max_optimality},
        {3, "normalized entropy: 10^4 fuzzed distributions stay in [0,1] with exact endpoints",
         criterion_normalization_suite},
        {4, "perspective diversity matches brute force; scale- and relabel-invariant",
         criterion_perspective_oracle},
        {5, "demographic bounds: 30 distinct -> 1.0, 4x6+3x2 regions -> 1.0, identical -> 0.0",
         criterion_demographic_bounds},
        {6, "mock end-to-end: multilingual 1.0 vs monolingual 0.0, byte-stable, under 5s",
         criterion_mock_end_to_end},
        {7, "hallucination fixtures reproduce 12.4%, 26.7%, 7.7%, 19.0% (+-0.1pp)",
         criterion_error_rates},
        {8, "sanity harness: key-following mock 10/10 per language, scripted miss 9/10",
         criterion_sanity_harness},
        {9, "significance: identical -> p=1, 10-sigma shift -> p<=0.001, seed-deterministic",
         criterion_significance},
        {10, "resumability: replay is byte-identical with zero network calls",
         criterion_resumability},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        try {
            c.check();
            std::printf("PASS criterion %d: %s\n", c.id, c.title);
        } catch (const std::exception& e) {
            std::printf("FAIL criterion %d: %s\n  -> %s\n", c.id, c.title, e.what());
            ++failures;
        }
        std::fflush(stdout);
    }
    if (failures > 0) std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
