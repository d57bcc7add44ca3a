#pragma once

#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "polyprompt/config.hpp"
#include "polyprompt/http_backend.hpp"
#include "polyprompt/runner.hpp"

namespace polyprompt::cli {

// Exit codes: 0 ok, 1 config/argument error (incl. unknown run id),
// 2 backend error, 3 dataset error, 4 malformed external CSV.

struct GlobalOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string backend = "mock";  // live | mock | replay
    std::string script_path;       // mock rules file
    int parallelism = 0;           // 0 = config value
    bool json_output = false;
    std::string embedder = "test";  // test | live
    std::string runs_dir;           // override
    std::string cultures_path;      // override
    std::string model_id;           // override
};

inline int exit_code_for(const Error& e) {
    if (dynamic_cast<const MalformedCsv*>(&e)) return 4;
    if (dynamic_cast<const DatasetError*>(&e)) return 3;
    if (dynamic_cast<const GatewayError*>(&e)) return 2;
    return 1;
}

namespace detail {

inline AppConfig load_app_config(const GlobalOpts& g) {
    AppConfig app = g.config_path.empty() ? AppConfig{} : AppConfig::load(g.config_path);
    if (!g.runs_dir.empty()) app.runs_dir = g.runs_dir;
    if (!g.cultures_path.empty()) app.cultures_path = g.cultures_path;
    if (g.parallelism > 0) app.parallelism = g.parallelism;
    if (!g.model_id.empty()) app.model_id = g.model_id;
    return app;
}

inline std::shared_ptr<Backend> base_backend(const GlobalOpts& g) {
    if (g.backend == "mock") {
        if (g.script_path.empty())
            throw ConfigError("mock backend needs --script <rules.json>");
        return MockBackend::from_file(g.script_path);
    }
    if (g.backend == "replay") return nullptr;
    if (g.backend == "live") {
#ifdef POLYPROMPT_ENABLE_HTTPLIB
        return http_backend_from_env();
#else
        throw ConfigError("this binary was built without live HTTP support");
#endif
    }
    throw ConfigError("unknown backend '" + g.backend + "' (expected live, mock, or replay)");
}

// Lazy: commands that never dispatch a request (report, error-rate, ...)
// must not demand backend configuration.
inline GatewayFactory gateway_factory(const GlobalOpts& g) {
    CacheMode mode = g.backend == "replay" ? CacheMode::replay : CacheMode::record;
    return [g, mode](const RunPaths& paths) -> std::shared_ptr<Backend> {
        return std::make_shared<CachingBackend>(base_backend(g), paths.cache(), mode);
    };
}

inline std::shared_ptr<EmbeddingProvider> make_embedder(const GlobalOpts& g, const AppConfig& app) {
    if (g.embedder == "test")
        return std::make_shared<CachingEmbedder>(std::make_shared<HashEmbedder>());
    if (g.embedder == "live") {
#ifdef POLYPROMPT_ENABLE_HTTPLIB
        const char* url = std::getenv("LLM_BASE_URL");
        if (!url || !*url) throw ConfigError("live embedder needs LLM_BASE_URL");
        const char* key = std::getenv("LLM_API_KEY");
        return std::make_shared<CachingEmbedder>(std::make_shared<HttpEmbedder>(
            make_httplib_transport(url), app.embedding_model_id, key ? key : ""));
#else
        throw ConfigError("this binary was built without live HTTP support");
#endif
    }
    throw ConfigError("unknown embedder '" + g.embedder + "' (expected test or live)");
}

inline Pipeline make_pipeline(const GlobalOpts& g, const AppConfig& app) {
    auto profiles = load_cultures(app.cultures_path);
    return Pipeline(app, profiles, gateway_factory(g), make_embedder(g, app), app.runs_dir);
}

inline std::string pct(double rate) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", rate * 100.0);
    return buf;
}

inline void print_report_summary(const MetricReport& rep, bool json_output, std::ostream& os) {
    if (json_output) {
        os << rep.to_json().dump(2) << "\n";
        return;
    }
    os << "run_id: " << rep.run_id << "\n";
    os << "task: " << task_name(rep.task) << "  strategy: " << rep.strategy << "  k: " << rep.k
       << "  items: " << rep.items_total << " (" << rep.items_failed << " failed)\n";
    auto put = [&](const char* name, const std::optional<double>& v) {
        if (v) os << "  " << name << ": " << polyprompt::detail::format_metric(v) << "\n";
    };
    put("reason", rep.reason);
    put("agreement", rep.valence);
    put("perspective", rep.perspective);
    put("nationality", rep.nationality);
    put("ethnicity", rep.ethnicity);
    put("region", rep.region);
    put("demo_avg", rep.demo_avg);
    os << "  exclusions: " << rep.units_excluded << "/" << rep.units_expected << " ("
       << pct(rep.exclusion_rate()) << ")\n";
}

}  // namespace detail

// ------------------------------------------------------------ sanity harness

struct SanityOutcome {
    std::string language;
    SanityScore score;
};

inline constexpr const char* kSanityPlausible =
    "A thoughtful view that weighs the real tradeoffs raised by the statement.";

inline std::vector<SanityOutcome> run_sanity(Pipeline& pipeline, const GlobalOpts& g,
                                             const std::vector<std::string>& languages,
                                             const std::filesystem::path& dataset, int n_items,
                                             const std::string& model_id) {
    const AppConfig& app = pipeline.app();
    auto statements = filter_controversial(load_statements(dataset));
    if (statements.empty()) throw DatasetError("no controversial statements in " + dataset.string());
    if (statements.size() > static_cast<std::size_t>(n_items))
        statements.resize(static_cast<std::size_t>(n_items));

    std::uint64_t id_hash = fnv1a64(dataset.string(), fnv1a64(model_id, fnv1a64(g.seed)));
    for (const auto& l : languages) id_hash = fnv1a64(l, id_hash);
    RunPaths paths{std::filesystem::path(app.runs_dir) / ("sanity_" + to_hex(id_hash).substr(4))};
    std::filesystem::create_directories(paths.cache());
    auto gateway = detail::gateway_factory(g)(paths);
    Translator translator(gateway, app.translation_model_id, language_names(pipeline.profiles()),
                          app.pivot_language, app.translation_template);

    std::vector<SanityOutcome> outcomes;
    for (const auto& lang : languages) {
        const CultureProfile& profile = find_culture(pipeline.profiles(), lang);
        std::vector<std::optional<Label>> answers;
        std::vector<Label> keys;
        for (const auto& st : statements) {
            SanityItem item = build_sanity_item(st, kSanityPlausible, *gateway, model_id, g.seed,
                                                app.distractor_template);
            keys.push_back(item.key);
            std::string preamble = basic_culture_preamble(profile);
            std::string body = render_mc_item(st, item.set, app.mc_instruction);
            if (lang != app.pivot_language) {
                preamble = translator.translate(preamble, app.pivot_language, lang);
                body = translator.translate(body, app.pivot_language, lang);
            }
            ChatRequest req;
            req.model_id = model_id;
            req.temperature = app.default_temperature;
            req.max_tokens = app.max_tokens;
            req.messages = {{Role::system, preamble}, {Role::user, body}};
            ChatResponse resp = gateway->complete(req);
            std::string text = lang != app.pivot_language
                                   ? translator.translate_back(resp.text, lang)
                                   : resp.text;
            answers.push_back(parse_mc_answer(text, item.set));
        }
        outcomes.push_back({lang, score_sanity(answers, keys)});
    }
    translator.persist(paths.translations());
    return outcomes;
}

// ----------------------------------------------------------------- commands

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"multilingual prompting pipeline and diversity metrics"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--config", g.config_path, "flat JSON config file");
    app.add_option("--seed", g.seed, "seed for all sampling decisions");
    app.add_option("--backend", g.backend, "gateway backend: live, mock, or replay")
        ->check(CLI::IsMember({"live", "mock", "replay"}));
    app.add_option("--script", g.script_path, "mock backend rules JSON");
    app.add_option("--parallelism", g.parallelism, "max concurrent items");
    app.add_flag("--json", g.json_output, "machine-readable output");
    app.add_option("--embedder", g.embedder, "embedding provider: test or live")
        ->check(CLI::IsMember({"test", "live"}));
    app.add_option("--runs-dir", g.runs_dir, "runs directory (default: runs)");
    app.add_option("--cultures-file", g.cultures_path, "cultures.json path");

    // run
    auto* cmd_run = app.add_subcommand("run", "execute one experiment");
    std::string run_task = "social_norm", run_strategy = "basic_multilingual";
    std::string run_cultures = "en,zh,ja", run_dataset, run_id, run_choices;
    int run_k = 0, run_names_total = 0, run_max_items = 0;
    cmd_run->add_option("--task", run_task, "social_norm or people")
        ->check(CLI::IsMember({"social_norm", "people"}));
    cmd_run->add_option("--strategy", run_strategy, "prompting strategy");
    cmd_run->add_option("--cultures", run_cultures, "comma-separated culture tags");
    cmd_run->add_option("-k,--k", run_k, "variants per item (defaults to culture count)");
    cmd_run->add_option("--dataset", run_dataset, "dataset JSONL")->required();
    cmd_run->add_option("--model", g.model_id, "chat model id");
    cmd_run->add_option("--names-total", run_names_total, "total names per question (people)");
    cmd_run->add_option("--max-items", run_max_items, "cap dataset items");
    cmd_run->add_option("--run-id", run_id, "explicit run id");
    cmd_run->add_option("--choices", run_choices, "shared choice-set JSONL");

    // metrics
    auto* cmd_metrics = app.add_subcommand("metrics", "recompute a run's metrics from artifacts");
    std::string metrics_run_id;
    cmd_metrics->add_option("run_id", metrics_run_id, "run to rescore")->required();

    // report
    auto* cmd_report = app.add_subcommand("report", "combined table and plot data for runs");
    std::vector<std::string> report_run_ids;
    std::string report_out, report_baseline;
    cmd_report->add_option("run_ids", report_run_ids, "runs to include")->required();
    cmd_report->add_option("--out", report_out, "output directory (default: <runs>/report)");
    cmd_report->add_option("--significance-baseline", report_baseline,
                           "run id to test the other runs against (paired permutation)");

    // sanity
    auto* cmd_sanity = app.add_subcommand("sanity", "adversarial multiple-choice check");
    std::string sanity_languages = "en", sanity_dataset;
    int sanity_items = 10;
    cmd_sanity->add_option("--languages", sanity_languages, "comma-separated language tags");
    cmd_sanity->add_option("--dataset", sanity_dataset, "statements JSONL")->required();
    cmd_sanity->add_option("--items", sanity_items, "statements per language");
    cmd_sanity->add_option("--model", g.model_id, "chat model id");

    // sample-hallucination
    auto* cmd_sample = app.add_subcommand("sample-hallucination",
                                          "export profession-name pairs for human annotation");
    std::string sample_run_id, sample_culture, sample_nationality, sample_out;
    int sample_n = 105;
    cmd_sample->add_option("--run", sample_run_id, "people-task run id")->required();
    cmd_sample->add_option("--culture", sample_culture, "culture tag, e.g. zh")->required();
    cmd_sample->add_option("--nationality", sample_nationality,
                           "annotation nationality to match (default: culture's language name)");
    cmd_sample->add_option("-n,--n", sample_n, "pairs to sample");
    cmd_sample->add_option("--out", sample_out, "output CSV (default: <run>/hallucination_<tag>.csv)");

    // error-rate
    auto* cmd_error = app.add_subcommand("error-rate", "majority-vote error rate of an annotated CSV");
    std::string error_csv;
    cmd_error->add_option("csv", error_csv, "annotated hallucination CSV")->required();

    // annotate
    auto* cmd_annotate = app.add_subcommand("annotate", "demographic annotation of names");
    std::string annotate_names_file, annotate_run_id, annotate_out, annotate_sample_out;
    int annotate_sample = 0;
    cmd_annotate->add_option("--names", annotate_names_file, "text file, one name per line");
    cmd_annotate->add_option("--run", annotate_run_id, "annotate a run's generated names");
    cmd_annotate->add_option("--out", annotate_out, "annotations JSONL output");
    cmd_annotate->add_option("--sample", annotate_sample, "export a random spot-check sample");
    cmd_annotate->add_option("--sample-out", annotate_sample_out, "spot-check CSV path");

    // prepare-choices
    auto* cmd_prepare = app.add_subcommand("prepare-choices",
                                           "generate shared multiple-choice sets");
    std::string prepare_dataset, prepare_out = "choices.jsonl";
    int prepare_max_items = 0;
    cmd_prepare->add_option("--dataset", prepare_dataset, "statements JSONL")->required();
    cmd_prepare->add_option("--out", prepare_out, "output JSONL");
    cmd_prepare->add_option("--max-items", prepare_max_items, "cap statements");
    cmd_prepare->add_option("--model", g.model_id, "chat model id");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e, out, err);
        return rc == 0 ? 0 : 1;
    }

    try {
        AppConfig conf = detail::load_app_config(g);

        if (cmd_run->parsed()) {
            Pipeline pipeline = detail::make_pipeline(g, conf);
            ExperimentConfig cfg;
            cfg.task = task_from_name(run_task);
            cfg.strategy = strategy_from_name(run_strategy);
            for (auto& tag : split(run_cultures, ','))
                if (!trim(tag).empty()) cfg.culture_tags.push_back(trim(tag));
            cfg.k = run_k > 0 ? run_k
                              : (strategy_uses_cultures(cfg.strategy)
                                     ? static_cast<int>(cfg.culture_tags.size())
                                     : 3);
            cfg.dataset_path = run_dataset;
            cfg.model_id = conf.model_id;
            cfg.seed = g.seed;
            cfg.parallelism = conf.parallelism;
            cfg.names_total = run_names_total > 0 ? run_names_total : conf.names_total;
            cfg.max_items = run_max_items;
            cfg.run_id = run_id;
            cfg.choices_path = run_choices;
            if (!std::filesystem::exists(cfg.dataset_path))
                throw DatasetError("dataset not found: " + cfg.dataset_path.string());
            RunRecord run = pipeline.run(cfg);
            detail::print_report_summary(run.report, g.json_output, out);
            return 0;
        }

        if (cmd_metrics->parsed()) {
            Pipeline pipeline = detail::make_pipeline(g, conf);
            RunRecord run = pipeline.recompute(metrics_run_id);
            detail::print_report_summary(run.report, g.json_output, out);
            return 0;
        }

        if (cmd_report->parsed()) {
            Pipeline pipeline = detail::make_pipeline(g, conf);
            auto score_run = [&pipeline](const std::string& id) {
                RunRecord run = pipeline.load_run(id);
                return run.config.task == Task::social_norm
                           ? pipeline.score_social(run.config, run.records, run.choice_sets)
                           : pipeline.score_people(run.config, run.records, run.annotations);
            };
            std::vector<MetricReport> reports;
            for (const auto& id : report_run_ids) reports.push_back(score_run(id));
            if (!report_baseline.empty()) {
                MetricReport baseline = score_run(report_baseline);
                for (auto& rep : reports) {
                    if (rep.run_id == baseline.run_id) continue;
                    rep.baseline_run_id = baseline.run_id;
                    rep.significance = significance_against(rep, baseline, 10000, g.seed);
                }
            }
            std::filesystem::path out_dir =
                report_out.empty() ? std::filesystem::path(conf.runs_dir) / "report"
                                   : std::filesystem::path(report_out);
            emit_report(reports, out_dir);
            if (g.json_output) {
                json j = json::array();
                for (const auto& r : reports) j.push_back(r.to_json());
                out << j.dump(2) << "\n";
            } else {
                out << "wrote " << (out_dir / "report.csv").string() << " ("
                    << reports.size() << " runs)\n";
            }
            return 0;
        }

        if (cmd_sanity->parsed()) {
            Pipeline pipeline = detail::make_pipeline(g, conf);
            std::vector<std::string> langs;
            for (auto& tag : split(sanity_languages, ','))
                if (!trim(tag).empty()) langs.push_back(trim(tag));
            if (langs.empty()) throw ConfigError("no languages given");
            auto outcomes =
                run_sanity(pipeline, g, langs, sanity_dataset, sanity_items, conf.model_id);
            if (g.json_output) {
                json j = json::array();
                for (const auto& o : outcomes)
                    j.push_back({{"language", o.language},
                                 {"correct", o.score.correct},
                                 {"total", o.score.total},
                                 {"accuracy", o.score.accuracy},
                                 {"unparsable", o.score.unparsable}});
                out << j.dump(2) << "\n";
            } else {
                for (const auto& o : outcomes)
                    out << o.language << ": " << o.score.correct << "/" << o.score.total << "\n";
            }
            return 0;
        }

        if (cmd_sample->parsed()) {
            Pipeline pipeline = detail::make_pipeline(g, conf);
            RunRecord run = pipeline.load_run(sample_run_id);
            std::string nationality = sample_nationality;
            if (nationality.empty())
                nationality = find_culture(pipeline.profiles(), sample_culture).language_name;
            auto pairs = sample_hallucination_pairs(run, sample_culture, nationality, sample_n,
                                                    g.seed, pipeline.quotas_for(run.config));
            std::filesystem::path out_path =
                sample_out.empty()
                    ? run.paths.dir / ("hallucination_" + sample_culture + ".csv")
                    : std::filesystem::path(sample_out);
            write_hallucination_csv(out_path, pairs);
            if (g.json_output)
                out << json{{"pairs", pairs.size()}, {"out", out_path.string()}}.dump(2) << "\n";
            else
                out << "wrote " << pairs.size() << " pairs to " << out_path.string() << "\n";
            return 0;
        }

        if (cmd_error->parsed()) {
            ErrorRateResult r = compute_error_rate(error_csv);
            if (g.json_output) {
                out << json{{"rate", r.rate},
                            {"flagged", r.flagged},
                            {"total", r.total},
                            {"tie_count", r.tie_count}}
                           .dump(2)
                    << "\n";
            } else {
                out << r.flagged << "/" << r.total << " = " << detail::pct(r.rate) << "\n";
                if (r.tie_count > 0) out << "ties excluded: " << r.tie_count << "\n";
            }
            return 0;
        }

        if (cmd_annotate->parsed()) {
            Pipeline pipeline = detail::make_pipeline(g, conf);
            std::vector<std::string> names;
            RunPaths paths;
            std::filesystem::path out_path;
            if (!annotate_run_id.empty()) {
                RunRecord run = pipeline.load_run(annotate_run_id);
                auto quotas = pipeline.quotas_for(run.config);
                for (const auto& rec : run.records) {
                    if (rec.failed || run.config.task != Task::people) continue;
                    NameList list = parse_name_list(
                        rec.translated_text,
                        quotas[static_cast<std::size_t>(rec.variant_index)]);
                    if (list.count_ok)
                        for (auto& n : list.names) names.push_back(std::move(n));
                }
                paths = run.paths;
                out_path = annotate_out.empty() ? run.paths.annotations()
                                                : std::filesystem::path(annotate_out);
            } else if (!annotate_names_file.empty()) {
                for (const auto& line : read_lines(annotate_names_file))
                    if (!trim(line).empty()) names.push_back(trim(line));
                std::uint64_t h = fnv1a64(annotate_names_file, fnv1a64(g.seed));
                paths = RunPaths{std::filesystem::path(conf.runs_dir) /
                                 ("annotate_" + to_hex(h).substr(4))};
                out_path = annotate_out.empty() ? std::filesystem::path("annotations.jsonl")
                                                : std::filesystem::path(annotate_out);
            } else {
                throw ConfigError("annotate needs --run or --names");
            }
            if (names.empty()) throw DatasetError("no names to annotate");
            std::filesystem::create_directories(paths.cache());
            auto gateway = detail::gateway_factory(g)(paths);
            Annotator annotator(gateway, conf.annotation_model_id, conf.annotation_template);
            annotator.preload(out_path);
            auto batch = annotator.annotate_batch(names);
            annotator.persist(out_path);

            if (annotate_sample > 0) {
                auto labels = batch.valid();
                SeededRng rng(derive_seed(g.seed, "spot-check"));
                std::size_t n = std::min<std::size_t>(labels.size(),
                                                      static_cast<std::size_t>(annotate_sample));
                std::string csv = "name,nationality,ethnicity,region,checker_verdict\n";
                for (std::size_t idx : rng.sample_indices(labels.size(), n))
                    csv += csv_row({labels[idx].name, labels[idx].nationality,
                                    labels[idx].ethnicity, labels[idx].region, ""});
                std::filesystem::path sample_path =
                    annotate_sample_out.empty() ? paths.dir / "spot_check.csv"
                                                : std::filesystem::path(annotate_sample_out);
                atomic_write_file(sample_path, csv);
                if (!g.json_output)
                    out << "spot-check sample (" << n << " rows): " << sample_path.string() << "\n";
            }
            if (g.json_output)
                out << json{{"annotated", names.size()},
                            {"failures", batch.failures.size()},
                            {"out", out_path.string()}}
                           .dump(2)
                    << "\n";
            else
                out << "annotated " << names.size() << " names (" << batch.failures.size()
                    << " failures) -> " << out_path.string() << "\n";
            return 0;
        }

        if (cmd_prepare->parsed()) {
            auto statements = filter_controversial(load_statements(prepare_dataset));
            if (prepare_max_items > 0 &&
                statements.size() > static_cast<std::size_t>(prepare_max_items))
                statements.resize(static_cast<std::size_t>(prepare_max_items));
            if (statements.empty()) throw DatasetError("no controversial statements to prepare");
            std::uint64_t h = fnv1a64(prepare_dataset, fnv1a64(conf.model_id));
            RunPaths paths{std::filesystem::path(conf.runs_dir) /
                           ("choices_" + to_hex(h).substr(4))};
            std::filesystem::create_directories(paths.cache());
            auto gateway = detail::gateway_factory(g)(paths);
            std::string lines;
            int failures = 0;
            for (const auto& st : statements) {
                try {
                    ChoiceSet cs =
                        generate_choice_set(st, *gateway, conf.model_id, conf.choice_template);
                    lines += choice_set_to_json(cs).dump() + "\n";
                } catch (const Error&) {
                    ++failures;
                }
            }
            atomic_write_file(prepare_out, lines);
            if (g.json_output)
                out << json{{"statements", statements.size()},
                            {"failures", failures},
                            {"out", prepare_out}}
                           .dump(2)
                    << "\n";
            else
                out << "wrote choice sets for " << (statements.size() - failures) << "/"
                    << statements.size() << " statements to " << prepare_out << "\n";
            return 0;
        }

        throw ConfigError("no command given");
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace polyprompt::cli
