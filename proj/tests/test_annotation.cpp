#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "polyprompt/annotation.hpp"

using namespace polyprompt;

namespace {

// Worked annotation examples.
const char* kYaoMing =
    "{ \"nationality\": \"Chinese\", \"ethnicity\": \"Han Chinese\", \"region\": \"East Asia\" }";
const char* kGalileo =
    "{ \"nationality\": \"Italian\", \"ethnicity\": \"Italian\", \"region\": \"Europe\" }";

}  // namespace

TEST_CASE("annotate_name parses the structured reply") {
    auto mock = script_mock({{"Yao Ming", kYaoMing}, {"Galileo", kGalileo}});
    Annotator a(mock, "m");
    DemographicLabel yao = a.annotate_name("Yao Ming");
    REQUIRE(yao.nationality == "Chinese");
    REQUIRE(yao.ethnicity == "Han Chinese");
    REQUIRE(yao.region == "East Asia");
    DemographicLabel galileo = a.annotate_name("Galileo");
    REQUIRE(galileo.nationality == "Italian");
    REQUIRE(galileo.region == "Europe");
}

TEST_CASE("regions outside the vocabulary fail after one retry") {
    auto mock = script_mock(
        {{"*", "{ \"nationality\": \"Chinese\", \"ethnicity\": \"Han\", \"region\": \"Asia\" }"}});
    Annotator a(mock, "m");
    REQUIRE_THROWS_AS(a.annotate_name("Somebody"), InvalidRegion);
    REQUIRE(mock->call_count() == 2);
}

TEST_CASE("the corrective retry can succeed") {
    auto mock = script_mock(
        {{"was not in the allowed list",
          "{ \"nationality\": \"Chinese\", \"ethnicity\": \"Han\", \"region\": \"East Asia\" }"},
         {"*", "{ \"nationality\": \"Chinese\", \"ethnicity\": \"Han\", \"region\": \"Asia\" }"}});
    // First call matches the catch-all (bad region); the retry conversation
    // carries the corrective reminder and matches the first rule.
    Annotator a(mock, "m");
    DemographicLabel l = a.annotate_name("Somebody");
    REQUIRE(l.region == "East Asia");
    REQUIRE(mock->call_count() == 2);
}

TEST_CASE("region matching is case-insensitive but canonicalized") {
    REQUIRE(canonical_region("east asia") == "East Asia");
    REQUIRE(canonical_region(" EUROPE ") == "Europe");
    REQUIRE_FALSE(canonical_region("Asia").has_value());
    REQUIRE_FALSE(canonical_region("").has_value());
}

TEST_CASE("batch annotation deduplicates through the cache") {
    auto mock = script_mock({{"*", kYaoMing}});
    Annotator a(mock, "m");
    auto result = a.annotate_batch({"A", "A", "B"});
    REQUIRE(result.labels.size() == 3);
    REQUIRE(result.failures.empty());
    REQUIRE(mock->call_count() == 2);  // one per distinct name
    REQUIRE(result.labels[0]->name == "A");
    REQUIRE(result.labels[1]->name == "A");
    REQUIRE(result.labels[2]->name == "B");
}

TEST_CASE("an empty batch is an empty result") {
    auto mock = script_mock({{"*", kYaoMing}});
    Annotator a(mock, "m");
    auto result = a.annotate_batch({});
    REQUIRE(result.labels.empty());
    REQUIRE(result.failures.empty());
}

TEST_CASE("per-name failures leave holes without aborting the batch") {
    auto mock = script_mock(
        {{"BadName", "{ \"nationality\": \"X\", \"ethnicity\": \"Y\", \"region\": \"Nowhere\" }"},
         {"*", kGalileo}});
    Annotator a(mock, "m");
    auto result = a.annotate_batch({"Good One", "BadName", "Good Two"});
    REQUIRE(result.labels.size() == 3);
    REQUIRE(result.labels[0].has_value());
    REQUIRE_FALSE(result.labels[1].has_value());
    REQUIRE(result.labels[2].has_value());
    REQUIRE(result.failures.size() == 1);
    REQUIRE(result.failures[0].first == "BadName");
    REQUIRE(result.valid().size() == 2);
}

TEST_CASE("same name always maps to the same label in a run") {
    int serial = 0;
    auto varying = std::make_shared<MockBackend>(std::vector<MockRule>{{"*", kYaoMing}});
    Annotator a(varying, "m");
    auto first = a.annotate_name("Yao Ming");
    auto second = a.annotate_name("Yao Ming");
    REQUIRE(first.nationality == second.nationality);
    REQUIRE(varying->call_count() == 1);
    (void)serial;
}

TEST_CASE("annotations persist and reload") {
    auto dir = std::filesystem::temp_directory_path() / "polyprompt_test_annotation";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    auto path = dir / "annotations.jsonl";
    {
        auto mock = script_mock({{"*", kYaoMing}});
        Annotator a(mock, "m");
        a.annotate_name("Yao Ming");
        a.persist(path);
    }
    {
        auto mock = script_mock({{"*", "never used"}});
        Annotator a(mock, "m");
        a.preload(path);
        REQUIRE(a.annotate_name("Yao Ming").region == "East Asia");
        REQUIRE(mock->call_count() == 0);
    }
}

TEST_CASE("category normalization folds case and whitespace") {
    REQUIRE(normalize_category(" Chinese ") == "chinese");
    REQUIRE(normalize_category("HAN Chinese") == "han chinese");
    std::vector<DemographicLabel> labels = {
        {"a", "Chinese", "Han", "East Asia"},
        {"b", " chinese", "han", "East Asia"},
    };
    AttributeCounts counts = count_attribute(labels, Attribute::nationality);
    REQUIRE(counts.counts.size() == 1);
    REQUIRE(counts.counts.at("chinese") == 2);
}

TEST_CASE("unparsable annotation replies are malformed") {
    auto mock = script_mock({{"*", "no json here"}});
    Annotator a(mock, "m");
    REQUIRE_THROWS_AS(a.annotate_name("Whoever"), MalformedResponse);
}
