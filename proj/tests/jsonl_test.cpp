#include "confilter/jsonl.hpp"

#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "confilter/types.hpp"
#include "support/tempdir.hpp"

namespace confilter {
namespace {

testing::TempDir& tmp() {
    static testing::TempDir dir;
    return dir;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

TEST(ReadRecords, ThreeValidQueryLines) {
    const auto path = tmp().file("queries.jsonl");
    write_text(path,
               R"({"id":"q1","text":"alpha"})" "\n"
               R"({"id":"q2","text":"beta"})" "\n"
               R"({"id":"q3","text":"gamma"})" "\n");
    const auto queries = read_records<Query>(path);
    ASSERT_EQ(queries.size(), 3u);
    EXPECT_EQ(queries[0].id, "q1");
    EXPECT_EQ(queries[1].text, "beta");
    EXPECT_EQ(queries[2].id, "q3");
}

TEST(ReadRecords, EmptyFileGivesEmptyList) {
    const auto path = tmp().file("empty.jsonl");
    write_text(path, "");
    EXPECT_TRUE(read_records<Query>(path).empty());
}

TEST(ReadRecords, MissingFieldReportsLineTwo) {
    const auto path = tmp().file("broken.jsonl");
    write_text(path,
               R"({"id":"q1","text":"fine"})" "\n"
               R"({"text":"no id here"})" "\n");
    try {
        read_records<Query>(path);
        FAIL() << "expected SchemaError";
    } catch (const SchemaError& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("id"), std::string::npos) << e.what();
    }
}

TEST(ReadRecords, MalformedJsonReportsLineNumber) {
    const auto path = tmp().file("malformed.jsonl");
    write_text(path, R"({"id":"q1","text":"fine"})" "\n" "{not json\n");
    try {
        read_records<Query>(path);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
}

TEST(ReadRecords, MissingFileIsIoError) {
    EXPECT_THROW(read_records<Query>(tmp().file("does_not_exist.jsonl")), IoError);
}

TEST(ReadRecords, DuplicatesArePreserved) {
    const auto path = tmp().file("dup_labels.jsonl");
    const std::string line =
        R"({"query_id":"q1","snippet_id":"s1","relevant":true,"source":"human"})";
    write_text(path, line + "\n" + line + "\n");
    EXPECT_EQ(read_records<RelevanceLabel>(path).size(), 2u);
    EXPECT_THROW(read_labels_checked(path), SchemaError);
}

TEST(WriteRecords, RoundTripsRandomSnippets) {
    std::mt19937_64 gen(7);
    std::vector<Snippet> snippets;
    for (int i = 0; i < 100; ++i) {
        const std::size_t start = gen() % 1000;
        const std::size_t end = start + 1 + gen() % 400;
        Snippet s{make_snippet_id("d" + std::to_string(i % 7), start, end),
                  "d" + std::to_string(i % 7),
                  "q" + std::to_string(i % 3),
                  "text with unicode \xE4\xBD\xA0\xE5\xA5\xBD #" + std::to_string(i),
                  start,
                  end};
        snippets.push_back(std::move(s));
    }
    const auto path = tmp().file("snippets.jsonl");
    write_records(snippets, path);
    const auto reread = read_records<Snippet>(path);
    ASSERT_EQ(reread.size(), snippets.size());
    for (std::size_t i = 0; i < snippets.size(); ++i) {
        EXPECT_EQ(reread[i].id, snippets[i].id);
        EXPECT_EQ(reread[i].doc_id, snippets[i].doc_id);
        EXPECT_EQ(reread[i].query_id, snippets[i].query_id);
        EXPECT_EQ(reread[i].text, snippets[i].text);
        EXPECT_EQ(reread[i].char_start, snippets[i].char_start);
        EXPECT_EQ(reread[i].char_end, snippets[i].char_end);
    }
}

TEST(WriteRecords, RoundTripsEmptyList) {
    const auto path = tmp().file("none.jsonl");
    write_records(std::vector<Query>{}, path);
    EXPECT_TRUE(read_records<Query>(path).empty());
}

// Scores must reparse bit-identically, including values that need the full
// 17 significant digits.
TEST(WriteRecords, ScoresReparseBitIdentically) {
    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> uni(0.0, 2.0);
    std::vector<ScoredSnippet> scored;
    scored.push_back({"q", "s0", 0.0, "lexical"});
    scored.push_back({"q", "s1", 1.0 / 3.0, "lexical"});
    scored.push_back({"q", "s2", 0.1234567890123456, "lexical"});
    for (int i = 3; i < 200; ++i) {
        scored.push_back({"q", "s" + std::to_string(i), uni(gen), "lexical"});
    }
    const auto path = tmp().file("scores.jsonl");
    write_records(scored, path);
    const auto reread = read_records<ScoredSnippet>(path);
    ASSERT_EQ(reread.size(), scored.size());
    for (std::size_t i = 0; i < scored.size(); ++i) {
        // Exact bit equality, not approximate.
        EXPECT_EQ(reread[i].score, scored[i].score) << "index " << i;
    }
}

TEST(Threshold, RetainAllSerializesAsString) {
    ConformalThreshold t;
    t.alpha = 0.05;
    t.n_positives = 1;
    t.rank = 2;
    t.tau.reset();
    t.scorer_id = "lexical";
    const nlohmann::json j = t;
    EXPECT_EQ(j.at("tau"), "retain_all");

    const auto back = j.get<ConformalThreshold>();
    EXPECT_TRUE(back.retain_all());
    EXPECT_EQ(back.rank, 2);
}

TEST(Threshold, InvariantIsAssertableFromFields) {
    // rank must equal ceiling((n+1)(1-alpha)) and the sentinel must match
    // rank > n_positives.
    ConformalThreshold good{0.2, 4, 4, 0.4, "lexical"};
    EXPECT_NO_THROW(validate(good));

    ConformalThreshold bad_rank{0.2, 4, 3, 0.4, "lexical"};
    EXPECT_THROW(validate(bad_rank), SchemaError);

    ConformalThreshold bad_sentinel{0.05, 1, 2, 0.4, "lexical"};
    EXPECT_THROW(validate(bad_sentinel), SchemaError);
}

TEST(Snippet, SliceInvariantCheckedAgainstParent) {
    Document doc{"d1", "q1", "Hello snippet world", std::nullopt};
    Snippet ok{"d1:6-13", "d1", "q1", "snippet", 6, 13};
    EXPECT_NO_THROW(validate_against_parent(ok, doc));

    Snippet wrong_text{"d1:6-13", "d1", "q1", "snipped", 6, 13};
    EXPECT_THROW(validate_against_parent(wrong_text, doc), SchemaError);
}

TEST(Snippet, SliceInvariantCountsScalarValues) {
    // Parent text is CJK; offsets count scalar values, not bytes.
    Document doc{"d2", "q1", "\xE4\xBD\xA0\xE5\xA5\xBD\xE4\xB8\x96\xE7\x95\x8C",
                 std::nullopt};  // 4 chars
    Snippet ok{"d2:1-3", "d2", "q1", "\xE5\xA5\xBD\xE4\xB8\x96", 1, 3};
    EXPECT_NO_THROW(validate_against_parent(ok, doc));
}

TEST(CoverageReportJson, UndefinedCoverageIsNull) {
    CoverageReport r;
    r.alpha = 0.2;
    r.scorer_id = "lexical";
    r.n_relevant = 0;
    r.n_relevant_retained = 0;
    r.empirical_coverage.reset();
    r.n_total = 5;
    r.n_removed = 2;
    r.removal_rate = 0.4;
    const nlohmann::json j = r;
    EXPECT_TRUE(j.at("empirical_coverage").is_null());
    const auto back = j.get<CoverageReport>();
    EXPECT_FALSE(back.empirical_coverage.has_value());
}

TEST(FilterOutcomeJson, RoundTripsNestedThreshold) {
    ConformalThreshold t{0.2, 4, 4, 0.4, "lexical"};
    FilterOutcome o{"q1", "s1", 0.3, true, t};
    const nlohmann::json j = o;
    const auto back = j.get<FilterOutcome>();
    EXPECT_EQ(back.threshold.rank, 4);
    EXPECT_EQ(back.threshold.scorer_id, "lexical");
    EXPECT_TRUE(back.retained);
}

TEST(DocumentJson, RankIsOptional) {
    const auto with = nlohmann::json::parse(
        R"({"id":"d1","query_id":"q1","text":"t","rank":3})").get<Document>();
    EXPECT_EQ(with.rank, 3);
    const auto without = nlohmann::json::parse(
        R"({"id":"d1","query_id":"q1","text":"t"})").get<Document>();
    EXPECT_FALSE(without.rank.has_value());
}

}  // namespace
}  // namespace confilter
