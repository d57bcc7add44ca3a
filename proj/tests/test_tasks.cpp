#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "polyprompt/rng.hpp"
#include "polyprompt/tasks.hpp"

using namespace polyprompt;

namespace {

NormStatement statement(const std::string& id, double rate) {
    return {id, "statement " + id, rate};
}

// The worked example reply from the choice-generation prompt.
const char* kChoiceReply =
    "1. { \"valence\": \"agree\", \"explanation\": \"Obligations shouldn't dictate personal "
    "choices; you should only go if you want to.\" }\n"
    "2. { \"valence\": \"agree\", \"explanation\": \"Forced interactions can cause unnecessary "
    "stress and discomfort.\" }\n"
    "3. { \"valence\": \"disagree\", \"explanation\": \"Family reunions are important for "
    "maintaining family bonds.\" }\n"
    "4. { \"valence\": \"disagree\", \"explanation\": \"Spending time with family, even if you "
    "don't remember them well, can create new memories.\" }";

ChoiceSet sample_choice_set() {
    std::array<Choice, 4> choices = {
        Choice{Label::A, Valence::agree, "first agreeing view"},
        Choice{Label::B, Valence::agree, "second agreeing view"},
        Choice{Label::C, Valence::disagree, "first disagreeing view"},
        Choice{Label::D, Valence::disagree, "second disagreeing view"}};
    return make_choice_set("st-1", choices);
}

}  // namespace

// ----------------------------------------------------------------- filtering

TEST_CASE("controversy filter keeps the closed 25-75 band") {
    std::vector<NormStatement> input = {statement("a", 0.50), statement("b", 0.80),
                                        statement("c", 0.25), statement("d", 0.75),
                                        statement("e", 0.10), statement("f", 0.249999)};
    auto kept = filter_controversial(input);
    REQUIRE(kept.size() == 3);
    REQUIRE(kept[0].id == "a");
    REQUIRE(kept[1].id == "c");
    REQUIRE(kept[2].id == "d");
}

TEST_CASE("controversy filter output is an order-preserving subset") {
    SeededRng rng(11);
    std::vector<NormStatement> input;
    for (int i = 0; i < 100; ++i)
        input.push_back(statement(std::to_string(i), rng.next_double()));
    auto kept = filter_controversial(input, 0.3, 0.6);
    std::size_t cursor = 0;
    for (const auto& k : kept) {
        REQUIRE(k.agreement_rate >= 0.3);
        REQUIRE(k.agreement_rate <= 0.6);
        while (cursor < input.size() && input[cursor].id != k.id) ++cursor;
        REQUIRE(cursor < input.size());  // appears in original order
    }
}

TEST_CASE("controversy filter validates its bounds") {
    REQUIRE_THROWS_AS(filter_controversial({}, 0.8, 0.2), ConfigError);
    REQUIRE_THROWS_AS(filter_controversial({}, -0.1, 0.5), ConfigError);
}

// ------------------------------------------------------------- answer parse

TEST_CASE("parse_mc_answer extracts standalone letters") {
    REQUIRE(parse_mc_answer("B") == Label::B);
    REQUIRE(parse_mc_answer("I choose (c) because it is right") == Label::C);
    REQUIRE(parse_mc_answer("Answer: A.") == Label::A);
    REQUIRE(parse_mc_answer("  d  ") == Label::D);
    REQUIRE(parse_mc_answer("The best option is B, clearly.") == Label::B);
    REQUIRE_FALSE(parse_mc_answer("none of these").has_value());
    REQUIRE_FALSE(parse_mc_answer("").has_value());
    REQUIRE_FALSE(parse_mc_answer("everything sounds fine").has_value());
}

TEST_CASE("parse_mc_answer never throws on arbitrary input") {
    SeededRng rng(55);
    for (int i = 0; i < 2000; ++i) {
        std::string s;
        std::size_t len = rng.next_index(60);
        for (std::size_t c = 0; c < len; ++c)
            s += static_cast<char>(rng.next_index(256));
        REQUIRE_NOTHROW(parse_mc_answer(s));
    }
}

TEST_CASE("verbatim explanation text resolves as a fallback") {
    ChoiceSet cs = sample_choice_set();
    REQUIRE(parse_mc_answer("first disagreeing view", cs) == Label::C);
    REQUIRE(parse_mc_answer("I think: second agreeing view", cs) == Label::B);
    REQUIRE_FALSE(parse_mc_answer("something else entirely", cs).has_value());
    // letter wins over the fallback
    REQUIRE(parse_mc_answer("B", cs) == Label::B);
}

// --------------------------------------------------------------- name parse

TEST_CASE("numbered name lists parse to the expected count") {
    std::string ten;
    for (int i = 1; i <= 10; ++i) ten += std::to_string(i) + ". Person " + std::to_string(i) + "\n";
    NameList list = parse_name_list(ten, 10);
    REQUIRE(list.count_ok);
    REQUIRE(list.names.size() == 10);
    REQUIRE(list.names[0] == "Person 1");
}

TEST_CASE("count violations keep the record but flag it") {
    std::string twelve;
    for (int i = 1; i <= 12; ++i) twelve += std::to_string(i) + ". N" + std::to_string(i) + "\n";
    NameList list = parse_name_list(twelve, 10);
    REQUIRE_FALSE(list.count_ok);
    REQUIRE(list.names.size() == 12);
}

TEST_CASE("comma-separated lists parse") {
    NameList list = parse_name_list("Yao Ming, Taylor Swift, Ada Lovelace, Frida Kahlo, "
                                    "Akira Kurosawa, Miriam Makeba, Leo Tolstoy, Marie Curie, "
                                    "Gabriel Garcia Marquez, Bruce Lee",
                                    10);
    REQUIRE(list.count_ok);
    REQUIRE(list.names[0] == "Yao Ming");
    REQUIRE(list.names[9] == "Bruce Lee");
}

TEST_CASE("honorifics and decorations are trimmed") {
    NameList list = parse_name_list("1. Dr. Jane Goodall\n2. *Yao Ming*\n3. \"Lang Lang\"\n"
                                    "4. Prof. Alan Turing\n5. Maria Callas (soprano)",
                                    5);
    REQUIRE(list.count_ok);
    REQUIRE(list.names[0] == "Jane Goodall");
    REQUIRE(list.names[1] == "Yao Ming");
    REQUIRE(list.names[2] == "Lang Lang");
    REQUIRE(list.names[3] == "Alan Turing");
    REQUIRE(list.names[4] == "Maria Callas");
}

TEST_CASE("a header line before the list is skipped") {
    NameList list = parse_name_list("Here are the names:\n1. One Person\n2. Two Person", 2);
    REQUIRE(list.count_ok);
    REQUIRE(list.names.size() == 2);
}

// ------------------------------------------------------------- lenient JSON

TEST_CASE("markdown fences strip away") {
    REQUIRE(strip_markdown_fences("```json\n{\"a\": 1}\n```") == "{\"a\": 1}");
    REQUIRE(strip_markdown_fences("```\ntext\n```") == "text");
    REQUIRE(strip_markdown_fences("plain") == "plain");
}

TEST_CASE("lenient parsing finds embedded objects") {
    auto objects = parse_lenient_json(kChoiceReply);
    REQUIRE(objects.size() == 4);
    REQUIRE(objects[0].at("valence") == "agree");
    REQUIRE(objects[3].at("valence") == "disagree");

    auto arr = parse_lenient_json("[{\"x\": 1}, {\"x\": 2}]");
    REQUIRE(arr.size() == 2);
}

// -------------------------------------------------------------- choice sets

TEST_CASE("choice sets demand an exact 2/2 valence split") {
    std::array<Choice, 4> bad = {Choice{Label::A, Valence::agree, "a"},
                                 Choice{Label::B, Valence::agree, "b"},
                                 Choice{Label::C, Valence::agree, "c"},
                                 Choice{Label::D, Valence::disagree, "d"}};
    REQUIRE_THROWS_AS(make_choice_set("s", bad), InvalidChoiceSet);
}

TEST_CASE("choice set round trips through JSON") {
    ChoiceSet cs = sample_choice_set();
    ChoiceSet back = choice_set_from_json(choice_set_to_json(cs));
    REQUIRE(back.statement_id == cs.statement_id);
    for (std::size_t i = 0; i < 4; ++i) {
        REQUIRE(back.choices[i].label == cs.choices[i].label);
        REQUIRE(back.choices[i].valence == cs.choices[i].valence);
        REQUIRE(back.choices[i].explanation == cs.choices[i].explanation);
    }
}

TEST_CASE("generate_choice_set parses the worked example reply") {
    auto mock = script_mock({{"four different perspectives", kChoiceReply}});
    NormStatement st{"rot-1", "You should not feel obligated to go to your family reunions", 0.5};
    ChoiceSet cs = generate_choice_set(st, *mock, "m");
    REQUIRE(cs.choices[0].explanation ==
            "Obligations shouldn't dictate personal choices; you should only go if you want to.");
    REQUIRE(cs.choices[0].valence == Valence::agree);
    REQUIRE(cs.choices[2].valence == Valence::disagree);
    REQUIRE(mock->call_count() == 1);
}

TEST_CASE("fenced JSON replies parse") {
    std::string fenced = std::string("```json\n[") +
                         "{\"valence\": \"agree\", \"explanation\": \"e1\"}," +
                         "{\"valence\": \"agree\", \"explanation\": \"e2\"}," +
                         "{\"valence\": \"disagree\", \"explanation\": \"e3\"}," +
                         "{\"valence\": \"disagree\", \"explanation\": \"e4\"}]\n```";
    auto mock = script_mock({{"*", fenced}});
    ChoiceSet cs = generate_choice_set(statement("s", 0.5), *mock, "m");
    REQUIRE(cs.choices[3].explanation == "e4");
}

TEST_CASE("a 3/1 valence split fails after one retry") {
    std::string bad = std::string("[") +
                      "{\"valence\": \"agree\", \"explanation\": \"e1\"}," +
                      "{\"valence\": \"agree\", \"explanation\": \"e2\"}," +
                      "{\"valence\": \"agree\", \"explanation\": \"e3\"}," +
                      "{\"valence\": \"disagree\", \"explanation\": \"e4\"}]";
    auto mock = script_mock({{"*", bad}});
    REQUIRE_THROWS_AS(generate_choice_set(statement("s", 0.5), *mock, "m"), InvalidChoiceSet);
    REQUIRE(mock->call_count() == 2);  // one retry
}

// ------------------------------------------------------------- sanity items

TEST_CASE("sanity items hold the plausible choice at a seeded key position") {
    auto mock = script_mock(
        {{"nonsensical", "1. The moon tastes purple.\n2. Seven is a loud color.\n3. Soup agrees."}});
    NormStatement st{"rot-9", "some controversial statement", 0.5};
    SanityItem a = build_sanity_item(st, "the sensible answer", *mock, "m", 42);
    SanityItem b = build_sanity_item(st, "the sensible answer", *mock, "m", 42);
    REQUIRE(a.key == b.key);
    REQUIRE(a.set.at(a.key).explanation == "the sensible answer");
    int nonsense = 0;
    for (const auto& c : a.set.choices)
        if (c.explanation != "the sensible answer") ++nonsense;
    REQUIRE(nonsense == 3);
}

TEST_CASE("too few distractors is a malformed response") {
    auto mock = script_mock({{"*", "1. Only one."}});
    REQUIRE_THROWS_AS(build_sanity_item(statement("s", 0.5), "p", *mock, "m", 1),
                      MalformedResponse);
}

TEST_CASE("score_sanity counts correct answers") {
    std::vector<Label> keys(10, Label::B);
    std::vector<std::optional<Label>> answers(10, Label::B);
    REQUIRE(score_sanity(answers, keys).accuracy == 1.0);
    answers[3] = Label::A;
    SanityScore s = score_sanity(answers, keys);
    REQUIRE(s.correct == 9);
    REQUIRE_THAT(s.accuracy, Catch::Matchers::WithinAbs(0.9, 1e-12));
}

TEST_CASE("unparsable answers score as wrong and are reported") {
    std::vector<Label> keys(4, Label::A);
    std::vector<std::optional<Label>> answers(4, std::nullopt);
    SanityScore s = score_sanity(answers, keys);
    REQUIRE(s.accuracy == 0.0);
    REQUIRE(s.unparsable == 4);
}

TEST_CASE("score_sanity rejects bad shapes") {
    REQUIRE_THROWS_AS(score_sanity({}, {}), EmptySet);
    REQUIRE_THROWS_AS(score_sanity({Label::A}, {Label::A, Label::B}), LengthMismatch);
}

TEST_CASE("a key-following reader scores 10/10") {
    auto mock = script_mock(
        {{"nonsensical", "1. Moon purple.\n2. Loud seven.\n3. Soup agrees."}});
    std::vector<std::optional<Label>> answers;
    std::vector<Label> keys;
    for (int i = 0; i < 10; ++i) {
        NormStatement st{"st-" + std::to_string(i), "statement " + std::to_string(i), 0.5};
        SanityItem item = build_sanity_item(st, "the sensible answer", *mock, "m", 7);
        keys.push_back(item.key);
        answers.emplace_back(item.key);  // reader always finds the plausible one
    }
    SanityScore s = score_sanity(answers, keys);
    REQUIRE(s.correct == 10);
    REQUIRE(s.total == 10);
}

// ------------------------------------------------------------ item rendering

TEST_CASE("rendered items show valenced lettered choices") {
    NormStatement st{"s", "It is wrong to do drugs.", 0.6};
    std::string body = render_mc_item(st, sample_choice_set());
    REQUIRE(contains(body, "It is wrong to do drugs."));
    REQUIRE(contains(body, "A. Agree. first agreeing view"));
    REQUIRE(contains(body, "C. Disagree. first disagreeing view"));
    REQUIRE(contains(body, "Answer with a single letter"));
}

TEST_CASE("people items state the requested count") {
    std::string body = render_people_item({"q", "Name some writers that inspire you"}, 10);
    REQUIRE(contains(body, "Name some writers that inspire you"));
    REQUIRE(contains(body, "exactly 10 names"));
}

// ---------------------------------------------------------------- datasets

TEST_CASE("dataset loaders read the shipped fixtures") {
    std::filesystem::path root = POLYPROMPT_SOURCE_DIR;
    auto statements = load_statements(root / "data" / "statements.jsonl");
    REQUIRE(statements.size() == 12);
    REQUIRE(filter_controversial(statements).size() == 10);
    auto queries = load_queries(root / "data" / "queries.jsonl");
    REQUIRE(queries.size() == 12);
    REQUIRE(queries[0].text == "Name some writers that inspire you");
}

TEST_CASE("out-of-range agreement rates are dataset errors") {
    auto dir = std::filesystem::temp_directory_path() / "polyprompt_test_tasks";
    std::filesystem::create_directories(dir);
    auto path = dir / "bad.jsonl";
    atomic_write_file(path, "{\"id\": \"x\", \"text\": \"t\", \"agreement_rate\": 1.5}\n");
    REQUIRE_THROWS_AS(load_statements(path), DatasetError);
}

TEST_CASE("valence entropy collapses labels to their judgments") {
    ChoiceSet cs = sample_choice_set();  // A,B agree; C,D disagree
    // {agree:2, disagree:1} realizes the k=3, m=2 bound
    REQUIRE_THAT(valence_entropy({Label::A, Label::B, Label::C}, cs),
                 Catch::Matchers::WithinAbs(1.0, 1e-9));
    REQUIRE(valence_entropy({Label::A, Label::A, Label::A}, cs) == 0.0);
    // symmetric case: {agree:1, disagree:2}
    REQUIRE_THAT(valence_entropy({Label::A, Label::C, Label::D}, cs),
                 Catch::Matchers::WithinAbs(1.0, 1e-9));
    REQUIRE_THROWS_AS(valence_entropy(std::vector<Label>{}, cs), EmptyDistribution);
}
