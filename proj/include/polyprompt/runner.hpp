#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "polyprompt/pipeline.hpp"
#include "polyprompt/record_replay.hpp"

namespace polyprompt {

// Builds the per-run gateway (usually the base backend wrapped in the run's
// request cache).
using GatewayFactory = std::function<std::shared_ptr<Backend>(const RunPaths&)>;

// Everything a completed (or reloaded) run exposes for downstream commands.
struct RunRecord {
    ExperimentConfig config;
    RunPaths paths;
    std::vector<VariantRecord> records;  // (item, variant) order
    std::map<std::string, ChoiceSet> choice_sets;
    std::map<std::string, DemographicLabel> annotations;
    MetricReport report;
};

class Pipeline {
public:
    Pipeline(AppConfig app, std::vector<CultureProfile> profiles, GatewayFactory gateway_factory,
             std::shared_ptr<EmbeddingProvider> embedder, std::filesystem::path runs_root)
        : app_(std::move(app)),
          profiles_(std::move(profiles)),
          gateway_factory_(std::move(gateway_factory)),
          embedder_(std::move(embedder)),
          runs_root_(std::move(runs_root)) {
        validate_profiles(profiles_);
        find_culture(profiles_, app_.pivot_language);  // pivot must be known
    }

    RunRecord run(const ExperimentConfig& cfg) {
        return cfg.task == Task::social_norm ? run_social_norm(cfg) : run_people(cfg);
    }

    // ------------------------------------------------------------- social

    RunRecord run_social_norm(const ExperimentConfig& cfg) {
        cfg.validate();
        RunRecord run = init_run(cfg);
        auto gateway = gateway_factory_(run.paths);
        auto translator = make_translator(gateway, run.paths);
        Rephraser rephraser(gateway, cfg.model_id, app_.rephrase_template,
                            app_.default_temperature);

        auto statements = load_task_statements(cfg);
        run.choice_sets = ensure_choice_sets(cfg, run.paths, statements, *gateway);

        std::vector<std::string> personas = persona_preambles(cfg, gateway);
        auto k_profiles = resolve_profiles(cfg);

        std::vector<std::vector<VariantRecord>> per_item(statements.size());
        parallel_for(statements.size(), cfg.parallelism, [&](std::size_t i) {
            const NormStatement& st = statements[i];
            auto cs_it = run.choice_sets.find(st.id);
            if (cs_it == run.choice_sets.end()) {
                VariantRecord rec;
                rec.item_index = static_cast<int>(i);
                rec.item_id = st.id;
                rec.item_text = st.text;
                rec.failed = true;
                rec.error = "no choice set";
                per_item[i] = {rec};
                return;
            }
            per_item[i] = run_social_item(cfg, st, static_cast<int>(i), cs_it->second,
                                          k_profiles, personas, rephraser, *translator, *gateway);
        });

        for (auto& recs : per_item)
            for (auto& r : recs) run.records.push_back(std::move(r));

        run.report = score_social(cfg, run.records, run.choice_sets);
        persist_run(run, *translator, nullptr, statements);
        return run;
    }

    // ------------------------------------------------------------- people

    RunRecord run_people(const ExperimentConfig& cfg) {
        cfg.validate();
        RunRecord run = init_run(cfg);
        auto gateway = gateway_factory_(run.paths);
        auto translator = make_translator(gateway, run.paths);
        Rephraser rephraser(gateway, cfg.model_id, app_.rephrase_template,
                            app_.default_temperature);
        Annotator annotator(gateway, app_.annotation_model_id, app_.annotation_template);
        annotator.preload(run.paths.annotations());

        auto queries = load_task_queries(cfg);
        std::vector<std::string> personas = persona_preambles(cfg, gateway);
        auto k_profiles = resolve_profiles(cfg);
        auto quotas = quotas_for(cfg);

        std::vector<std::vector<VariantRecord>> per_item(queries.size());
        parallel_for(queries.size(), cfg.parallelism, [&](std::size_t i) {
            per_item[i] = run_people_item(cfg, queries[i], static_cast<int>(i), quotas,
                                          k_profiles, personas, rephraser, *translator, *gateway);
            // Annotate this item's well-formed names; the cache dedups
            // across items and runs.
            std::vector<std::string> pooled;
            for (const auto& rec : per_item[i]) {
                if (rec.failed) continue;
                NameList list = parse_name_list(
                    rec.translated_text, quotas[static_cast<std::size_t>(rec.variant_index)]);
                if (list.count_ok)
                    for (auto& n : list.names) pooled.push_back(std::move(n));
            }
            annotator.annotate_batch(pooled);
        });

        for (auto& recs : per_item)
            for (auto& r : recs) run.records.push_back(std::move(r));

        run.annotations = annotator.snapshot();
        run.report = score_people(cfg, run.records, run.annotations);
        persist_run(run, *translator, &annotator, {});
        return run;
    }

    // ------------------------------------------------- recompute / reload

    // Rebuild per-item scores and report files from persisted artifacts.
    // No gateway; embeddings come from the configured provider (cached).
    RunRecord recompute(const std::string& run_id) {
        RunRecord run = load_run(run_id);
        if (run.config.task == Task::social_norm)
            run.report = score_social(run.config, run.records, run.choice_sets);
        else
            run.report = score_people(run.config, run.records, run.annotations);
        emit_report({run.report}, run.paths.dir);
        return run;
    }

    RunRecord load_run(const std::string& run_id) const {
        RunPaths paths{runs_root_ / run_id};
        if (!std::filesystem::exists(paths.config()))
            throw ConfigError("unknown run id: " + run_id);
        RunRecord run;
        run.config = ExperimentConfig::from_json(json::parse(read_file(paths.config())));
        run.paths = paths;
        if (std::filesystem::exists(paths.responses()))
            for (const auto& line : read_lines(paths.responses())) {
                if (trim(line).empty()) continue;
                run.records.push_back(VariantRecord::from_json(json::parse(line)));
            }
        if (std::filesystem::exists(paths.choices()))
            for (const auto& line : read_lines(paths.choices())) {
                if (trim(line).empty()) continue;
                ChoiceSet cs = choice_set_from_json(json::parse(line));
                run.choice_sets.emplace(cs.statement_id, std::move(cs));
            }
        if (std::filesystem::exists(paths.annotations()))
            for (const auto& line : read_lines(paths.annotations())) {
                if (trim(line).empty()) continue;
                json j = json::parse(line);
                DemographicLabel label{j.at("name").get<std::string>(),
                                       j.at("nationality").get<std::string>(),
                                       j.at("ethnicity").get<std::string>(),
                                       j.at("region").get<std::string>()};
                run.annotations.emplace(label.name, label);
            }
        return run;
    }

    // ------------------------------------------------------------ scoring

    MetricReport score_social(const ExperimentConfig& cfg,
                              const std::vector<VariantRecord>& records,
                              const std::map<std::string, ChoiceSet>& choice_sets) {
        auto grouped = group_records(records);
        std::vector<ItemScores> scores;
        for (const auto& [order, item_id, recs] : grouped) {
            auto cs_it = choice_sets.find(item_id);
            if (cs_it == choice_sets.end()) {
                ItemScores s;
                s.item_id = item_id;
                s.failed = true;
                s.error = "no choice set";
                s.excluded = cfg.k;
                scores.push_back(std::move(s));
                continue;
            }
            scores.push_back(score_social_item(item_id, recs, cs_it->second,
                                               embedding_set(cs_it->second)));
        }
        return aggregate_report(cfg, std::move(scores));
    }

    MetricReport score_people(const ExperimentConfig& cfg,
                              const std::vector<VariantRecord>& records,
                              const std::map<std::string, DemographicLabel>& annotations) {
        auto quotas = quotas_for(cfg);
        auto grouped = group_records(records);
        std::vector<ItemScores> scores;
        for (const auto& [order, item_id, recs] : grouped)
            scores.push_back(score_people_item(item_id, recs, annotations, quotas));
        return aggregate_report(cfg, std::move(scores));
    }

    EmbeddingSet embedding_set(const ChoiceSet& cs) {
        std::vector<std::string> texts;
        for (const auto& c : cs.choices) texts.push_back(c.explanation);
        auto vectors = embedder_->embed(texts);
        EmbeddingSet emb;
        emb.statement_id = cs.statement_id;
        for (std::size_t i = 0; i < 4; ++i) emb.vectors[i] = std::move(vectors[i]);
        return emb;
    }

    std::vector<int> quotas_for(const ExperimentConfig& cfg) const {
        std::vector<std::string> tags =
            strategy_uses_cultures(cfg.strategy)
                ? cfg.culture_tags
                : std::vector<std::string>(static_cast<std::size_t>(cfg.k), app_.pivot_language);
        return people_quotas(cfg.names_total, cfg.k, tags, app_.pivot_language);
    }

    const AppConfig& app() const { return app_; }
    const std::vector<CultureProfile>& profiles() const { return profiles_; }

private:
    // ---------------------------------------------------------- run setup

    RunRecord init_run(const ExperimentConfig& cfg) const {
        RunRecord run;
        run.config = cfg;
        run.config.run_id = cfg.effective_run_id();
        run.paths = RunPaths{runs_root_ / run.config.run_id};
        std::filesystem::create_directories(run.paths.cache());
        atomic_write_file(run.paths.config(), run.config.to_json().dump(2) + "\n");
        return run;
    }

    std::unique_ptr<Translator> make_translator(std::shared_ptr<Backend> gateway,
                                                const RunPaths& paths) const {
        auto t = std::make_unique<Translator>(std::move(gateway), app_.translation_model_id,
                                              language_names(profiles_), app_.pivot_language,
                                              app_.translation_template);
        t->preload(paths.translations());
        return t;
    }

    std::vector<CultureProfile> resolve_profiles(const ExperimentConfig& cfg) const {
        std::vector<CultureProfile> out;
        if (!strategy_uses_cultures(cfg.strategy)) return out;
        for (const auto& tag : cfg.culture_tags) out.push_back(find_culture(profiles_, tag));
        return out;
    }

    std::vector<std::string> persona_preambles(const ExperimentConfig& cfg,
                                               std::shared_ptr<Backend> gateway) {
        if (cfg.strategy != StrategyKind::RandomPersonas) return {};
        PersonaPool pool(gateway, cfg.model_id, app_.persona_template, app_.default_temperature);
        // One persona set per run, like the fixed language set.
        return pool.build_persona_set(app_.persona_pool_size, cfg.k,
                                      derive_seed(cfg.seed, "personas"));
    }

    std::vector<NormStatement> load_task_statements(const ExperimentConfig& cfg) const {
        auto all = load_statements(cfg.dataset_path);
        auto filtered = filter_controversial(all, cfg.controversy_lo, cfg.controversy_hi);
        if (filtered.empty())
            throw DatasetError("no statements in the controversial band in " +
                               cfg.dataset_path.string());
        if (cfg.max_items > 0 && filtered.size() > static_cast<std::size_t>(cfg.max_items))
            filtered.resize(static_cast<std::size_t>(cfg.max_items));
        return filtered;
    }

    std::vector<PeopleQuery> load_task_queries(const ExperimentConfig& cfg) const {
        auto all = load_queries(cfg.dataset_path);
        if (all.empty()) throw DatasetError("no queries in " + cfg.dataset_path.string());
        if (cfg.max_items > 0 && all.size() > static_cast<std::size_t>(cfg.max_items))
            all.resize(static_cast<std::size_t>(cfg.max_items));
        return all;
    }

    // Shared choice sets: an explicit --choices file wins, then the run's
    // own choices.jsonl, then generation. All statements end up persisted to
    // the run, so every strategy scores the same items over the same sets.
    std::map<std::string, ChoiceSet> ensure_choice_sets(const ExperimentConfig& cfg,
                                                        const RunPaths& paths,
                                                        const std::vector<NormStatement>& statements,
                                                        Backend& gateway) {
        std::map<std::string, ChoiceSet> out;
        auto load_from = [&out](const std::filesystem::path& p) {
            if (!std::filesystem::exists(p)) return;
            for (const auto& line : read_lines(p)) {
                if (trim(line).empty()) continue;
                ChoiceSet cs = choice_set_from_json(json::parse(line));
                out.emplace(cs.statement_id, std::move(cs));
            }
        };
        if (!cfg.choices_path.empty()) {
            if (!std::filesystem::exists(cfg.choices_path))
                throw DatasetError("choices file not found: " + cfg.choices_path.string());
            load_from(cfg.choices_path);
        }
        load_from(paths.choices());

        std::vector<std::size_t> missing;
        for (std::size_t i = 0; i < statements.size(); ++i)
            if (!out.count(statements[i].id)) missing.push_back(i);
        std::mutex mu;
        parallel_for(missing.size(), cfg.parallelism, [&](std::size_t mi) {
            const NormStatement& st = statements[missing[mi]];
            try {
                ChoiceSet cs = generate_choice_set(st, gateway, cfg.model_id, app_.choice_template);
                std::scoped_lock lock(mu);
                out.emplace(st.id, std::move(cs));
            } catch (const CacheMiss&) {
                throw;
            } catch (const Error&) {
                // Item quarantined downstream: it scores as failed.
            }
        });
        return out;
    }

    // ------------------------------------------------------- item dispatch

    std::vector<PromptVariant> build_variants(const ExperimentConfig& cfg,
                                              const std::string& item_id,
                                              const std::string& default_body,
                                              const std::vector<CultureProfile>& k_profiles,
                                              const std::vector<std::string>& personas) const {
        Strategy strategy = make_strategy(cfg.strategy, cfg.k, app_.default_temperature);
        auto variants = build_prompt_set(default_body, strategy, k_profiles,
                                         derive_seed(cfg.seed, item_id), app_.pivot_language);
        if (cfg.strategy == StrategyKind::RandomPersonas)
            for (std::size_t i = 0; i < variants.size(); ++i)
                variants[i].preamble = personas[i];
        for (auto& v : variants) v.max_tokens = app_.max_tokens;
        return variants;
    }

    VariantRecord dispatch_variant(const ExperimentConfig& cfg, const std::string& item_id,
                                   const std::string& item_text, int item_index,
                                   const PromptVariant& v, const std::string& body,
                                   Translator& translator, Backend& gateway) {
        VariantRecord rec;
        rec.item_index = item_index;
        rec.item_id = item_id;
        rec.item_text = item_text;
        rec.variant_index = -1;  // caller fills
        rec.culture_tag = v.culture_tag();
        rec.language_tag = v.language_tag;
        rec.needs_translation = v.needs_translation;
        rec.preamble = v.preamble;
        rec.body = body;
        try {
            std::string send_preamble = v.preamble;
            std::string send_body = body;
            if (v.needs_translation) {
                send_preamble =
                    translator.translate(v.preamble, app_.pivot_language, v.language_tag);
                send_body = translator.translate(body, app_.pivot_language, v.language_tag);
            }
            ChatRequest req;
            req.model_id = cfg.model_id;
            req.temperature = v.temperature;
            req.max_tokens = v.max_tokens;
            if (!send_preamble.empty()) req.messages.push_back({Role::system, send_preamble});
            req.messages.push_back({Role::user, send_body});
            rec.request_key = req.request_key();
            ChatResponse resp = gateway.complete(req);
            rec.response_text = resp.text;
            rec.translated_text = v.needs_translation
                                      ? translator.translate_back(resp.text, v.language_tag)
                                      : resp.text;
        } catch (const CacheMiss&) {
            throw;
        } catch (const Error& e) {
            rec.failed = true;
            rec.error = e.what();
        }
        return rec;
    }

    std::vector<VariantRecord> run_social_item(const ExperimentConfig& cfg,
                                               const NormStatement& st, int item_index,
                                               const ChoiceSet& cs,
                                               const std::vector<CultureProfile>& k_profiles,
                                               const std::vector<std::string>& personas,
                                               Rephraser& rephraser, Translator& translator,
                                               Backend& gateway) {
        std::vector<VariantRecord> out;
        try {
            std::string default_body = render_mc_item(st, cs, app_.mc_instruction);
            auto variants = build_variants(cfg, st.id, default_body, k_profiles, personas);
            std::vector<std::string> bodies(variants.size(), default_body);
            if (strategy_uses_rephrasing(cfg.strategy)) {
                auto phrasings = rephraser.rephrase_variants(st.text, cfg.k);
                for (std::size_t i = 0; i < variants.size(); ++i) {
                    NormStatement reworded = st;
                    reworded.text = phrasings[i];
                    bodies[i] = render_mc_item(reworded, cs, app_.mc_instruction);
                }
            }
            std::vector<std::string> prior;
            for (std::size_t i = 0; i < variants.size(); ++i) {
                std::string body = bodies[i];
                if (cfg.strategy == StrategyKind::StepByStepRecall)
                    body = apply_recall_transcript(body, prior);
                VariantRecord rec = dispatch_variant(cfg, st.id, st.text, item_index, variants[i],
                                                     body, translator, gateway);
                rec.variant_index = static_cast<int>(i);
                if (cfg.strategy == StrategyKind::StepByStepRecall && !rec.failed)
                    prior.push_back(rec.translated_text);
                out.push_back(std::move(rec));
            }
        } catch (const CacheMiss&) {
            throw;
        } catch (const Error& e) {
            VariantRecord rec;
            rec.item_index = item_index;
            rec.item_id = st.id;
            rec.item_text = st.text;
            rec.failed = true;
            rec.error = e.what();
            out = {rec};
        }
        return out;
    }

    std::vector<VariantRecord> run_people_item(const ExperimentConfig& cfg, const PeopleQuery& q,
                                               int item_index, const std::vector<int>& quotas,
                                               const std::vector<CultureProfile>& k_profiles,
                                               const std::vector<std::string>& personas,
                                               Rephraser& rephraser, Translator& translator,
                                               Backend& gateway) {
        std::vector<VariantRecord> out;
        try {
            std::string default_body =
                render_people_item(q, quotas[0], app_.people_instruction);
            auto variants = build_variants(cfg, q.id, default_body, k_profiles, personas);
            std::vector<std::string> phrasings;
            if (strategy_uses_rephrasing(cfg.strategy))
                phrasings = rephraser.rephrase_variants(q.text, cfg.k);
            std::vector<std::string> prior;
            for (std::size_t i = 0; i < variants.size(); ++i) {
                PeopleQuery reworded = q;
                if (!phrasings.empty()) reworded.text = phrasings[i];
                std::string body = render_people_item(reworded, quotas[i], app_.people_instruction);
                if (cfg.strategy == StrategyKind::StepByStepRecall)
                    body = apply_recall_transcript(body, prior);
                VariantRecord rec = dispatch_variant(cfg, q.id, q.text, item_index, variants[i],
                                                     body, translator, gateway);
                rec.variant_index = static_cast<int>(i);
                if (cfg.strategy == StrategyKind::StepByStepRecall && !rec.failed)
                    prior.push_back(rec.translated_text);
                out.push_back(std::move(rec));
            }
        } catch (const CacheMiss&) {
            throw;
        } catch (const Error& e) {
            VariantRecord rec;
            rec.item_index = item_index;
            rec.item_id = q.id;
            rec.item_text = q.text;
            rec.failed = true;
            rec.error = e.what();
            out = {rec};
        }
        return out;
    }

    // --------------------------------------------------------- persistence

    void persist_run(RunRecord& run, Translator& translator, Annotator* annotator,
                     const std::vector<NormStatement>& statements) const {
        std::string responses;
        for (const auto& rec : run.records) responses += rec.to_json(run.config.task).dump() + "\n";
        atomic_write_file(run.paths.responses(), responses);

        if (run.config.task == Task::social_norm) {
            std::string choices;
            for (const auto& st : statements) {
                auto it = run.choice_sets.find(st.id);
                if (it != run.choice_sets.end())
                    choices += choice_set_to_json(it->second).dump() + "\n";
            }
            atomic_write_file(run.paths.choices(), choices);
        }
        translator.persist(run.paths.translations());
        if (annotator) annotator->persist(run.paths.annotations());
        emit_report({run.report}, run.paths.dir);
    }

    // (order, item_id, records) groups in first-seen order.
    static std::vector<std::tuple<int, std::string, std::vector<VariantRecord>>> group_records(
        const std::vector<VariantRecord>& records) {
        std::map<std::string, std::size_t> index;
        std::vector<std::tuple<int, std::string, std::vector<VariantRecord>>> out;
        for (const auto& rec : records) {
            auto it = index.find(rec.item_id);
            if (it == index.end()) {
                index.emplace(rec.item_id, out.size());
                out.emplace_back(rec.item_index, rec.item_id,
                                 std::vector<VariantRecord>{rec});
            } else {
                std::get<2>(out[it->second]).push_back(rec);
            }
        }
        std::sort(out.begin(), out.end(),
                  [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
        return out;
    }

    AppConfig app_;
    std::vector<CultureProfile> profiles_;
    GatewayFactory gateway_factory_;
    std::shared_ptr<EmbeddingProvider> embedder_;
    std::filesystem::path runs_root_;
};

// ------------------------------------------------------ hallucination export

// Uniform sample (without replacement) of profession-name pairs generated
// by the requested culture's variants and annotated with the matching
// nationality. Deterministic per seed.
inline std::vector<HallucinationPair> sample_hallucination_pairs(
    const RunRecord& run, const std::string& culture_tag, const std::string& nationality_match,
    int n, std::uint64_t seed, const std::vector<int>& quotas) {
    if (run.config.task != Task::people)
        throw ConfigError("hallucination sampling needs a people-task run");
    const std::string want = normalize_category(nationality_match);
    std::vector<HallucinationPair> eligible;
    for (const auto& rec : run.records) {
        if (rec.failed || rec.culture_tag != culture_tag) continue;
        int expected = rec.variant_index >= 0 &&
                               rec.variant_index < static_cast<int>(quotas.size())
                           ? quotas[static_cast<std::size_t>(rec.variant_index)]
                           : 0;
        NameList list = parse_name_list(rec.translated_text, expected);
        if (!list.count_ok) continue;
        for (std::size_t ni = 0; ni < list.names.size(); ++ni) {
            auto ann = run.annotations.find(list.names[ni]);
            if (ann == run.annotations.end()) continue;
            if (normalize_category(ann->second.nationality) != want) continue;
            HallucinationPair pair;
            pair.pair_id = rec.item_id + ":" + std::to_string(rec.variant_index) + ":" +
                           std::to_string(ni);
            pair.question = rec.item_text;
            pair.name = list.names[ni];
            pair.strategy = strategy_name(run.config.strategy);
            eligible.push_back(std::move(pair));
        }
    }
    if (static_cast<int>(eligible.size()) < n)
        throw InsufficientPairs("only " + std::to_string(eligible.size()) +
                                    " eligible pairs for culture '" + culture_tag +
                                    "', need " + std::to_string(n),
                                static_cast<long long>(eligible.size()));
    SeededRng rng(derive_seed(seed, "hallucination"));
    std::vector<HallucinationPair> out;
    for (std::size_t idx :
         rng.sample_indices(eligible.size(), static_cast<std::size_t>(n)))
        out.push_back(eligible[idx]);
    return out;
}

}  // namespace polyprompt
