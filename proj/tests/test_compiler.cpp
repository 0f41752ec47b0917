#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aq/compiler.hpp"
#include "aq/plan.hpp"
#include "aq/rng.hpp"
#include "support/testing.hpp"

#include <fstream>
#include <sstream>
#include <string>

using namespace aq;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "missing file: " << path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::string golden_path(const char* name) {
    return std::string(AQ_TEST_GOLDEN_DIR) + "/" + name;
}

RetrievalPlan lookup_plan() {
    return parse_plan(read_file(golden_path("keyword_speaker_lookup.plan.json")));
}

}  // namespace

TEST_CASE("the keyword+speaker lookup compiles to the expected IR") {
    const QueryIR ir = compile(lookup_plan());
    REQUIRE(ir.scans.size() == 2);
    CHECK(ir.anchor() == StreamKind::transcript);
    CHECK(ir.tau == 2.5);

    CHECK(ir.scans[0].kind == StreamKind::transcript);
    CHECK(ir.scans[0].inner_join);
    REQUIRE(ir.scans[0].predicate.has_value());
    CHECK(*ir.scans[0].predicate == FilterPredicate{KeywordFilter{"employment"}});

    CHECK(ir.scans[1].kind == StreamKind::speaker);
    CHECK(ir.scans[1].inner_join);
    CHECK(*ir.scans[1].predicate == FilterPredicate{SpeakerEquals{"SPEAKER_02"}});

    CHECK(ir.projection.return_fields ==
          std::vector<ReturnField>{ReturnField::start, ReturnField::end, ReturnField::speaker,
                                   ReturnField::text});
}

TEST_CASE("the lookup SQL matches the golden file byte for byte") {
    const std::string expected = read_file(golden_path("keyword_speaker_lookup.sql"));
    const std::string actual = emit_sql(compile(lookup_plan()));
    CHECK(actual == expected);
}

TEST_CASE("SQL emission is deterministic") {
    const QueryIR ir = compile(lookup_plan());
    const std::string first = emit_sql(ir);
    for (int i = 0; i < 20; ++i) CHECK(emit_sql(ir) == first);
}

TEST_CASE("single-stream plans emit no join") {
    const RetrievalPlan plan = parse_plan(R"({
        "streams": ["speaker"],
        "filters": {"time_window": {"start": 0, "end": 300}},
        "fusion": {"anchor": "speaker"},
        "output": {"return_fields": ["start", "end", "speaker"]},
        "answer_schema": {
            "properties": {"events": {"type": "array", "items": {"type": "object"}}},
            "required": ["events"]
        }
    })");
    const std::string sql = emit_sql(compile(plan));
    CHECK(sql.find("JOIN") == std::string::npos);
    CHECK(sql.find("WHERE (start <= 300 AND end >= 0)") != std::string::npos);
    CHECK(sql.find("FROM sp") != std::string::npos);
}

TEST_CASE("a window alone keeps non-anchor streams optional") {
    const RetrievalPlan plan = parse_plan(R"({
        "streams": ["transcript", "emotion"],
        "filters": {"time_window": {"start": 10, "end": 20}},
        "fusion": {"anchor": "transcript"},
        "output": {"return_fields": ["start", "end", "text", "emotion"]},
        "answer_schema": {
            "properties": {"answer": {"type": "string"}}, "required": ["answer"]
        }
    })");
    const QueryIR ir = compile(plan);
    CHECK_FALSE(ir.scans[0].inner_join);
    CHECK_FALSE(ir.scans[1].inner_join);
    CHECK(emit_sql(ir).find("LEFT JOIN em") != std::string::npos);
}

TEST_CASE("a content filter on a non-anchor stream makes its join required") {
    const RetrievalPlan plan = parse_plan(R"({
        "streams": ["transcript", "emotion"],
        "filters": {"emotion_labels": ["Happy"]},
        "fusion": {"anchor": "transcript"},
        "output": {"return_fields": ["start", "text", "emotion"]},
        "answer_schema": {
            "properties": {"answer": {"type": "string"}}, "required": ["answer"]
        }
    })");
    const QueryIR ir = compile(plan);
    CHECK(ir.scans[1].inner_join);
    const std::string sql = emit_sql(ir);
    CHECK(sql.find("\nJOIN em ON temporal_overlap(tx, em, 2.5)") != std::string::npos);
    CHECK(sql.find("WHERE label IN ('Happy')") != std::string::npos);
}

TEST_CASE("event scans always carry the score floor but join optionally") {
    RetrievalPlan plan = parse_plan(R"({
        "streams": ["transcript", "sound_event"],
        "filters": {},
        "fusion": {"anchor": "transcript"},
        "output": {"return_fields": ["start", "text", "event", "score"]},
        "answer_schema": {
            "properties": {"answer": {"type": "string"}}, "required": ["answer"]
        }
    })");
    QueryIR ir = compile(plan);
    // Default floor filters noise; absence of a label list keeps the join LEFT.
    CHECK_FALSE(ir.scans[1].inner_join);
    std::string sql = emit_sql(ir);
    CHECK(sql.find("WHERE score >= 0.5") != std::string::npos);
    CHECK(sql.find("LEFT JOIN ev") != std::string::npos);

    plan.filters.event_labels = std::vector<std::string>{"Dog bark", "Music"};
    ir = compile(plan);
    CHECK(ir.scans[1].inner_join);
    sql = emit_sql(ir);
    CHECK(sql.find("WHERE label IN ('Dog bark', 'Music')") != std::string::npos);
    CHECK(sql.find("    AND score >= 0.5") != std::string::npos);
    CHECK(sql.find("\nJOIN ev") != std::string::npos);
}

TEST_CASE("an explicit zero score floor drops the score clause") {
    RetrievalPlan plan = parse_plan(R"({
        "streams": ["sound_event"],
        "filters": {"event_labels": ["Music"], "event_score_min": 0.0},
        "fusion": {"anchor": "sound_event"},
        "output": {"return_fields": ["start", "end", "event"]},
        "answer_schema": {
            "properties": {"events": {"type": "array", "items": {"type": "object"}}},
            "required": ["events"]
        }
    })");
    const std::string sql = emit_sql(compile(plan));
    CHECK(sql.find("score >=") == std::string::npos);
    CHECK(sql.find("WHERE label IN ('Music')") != std::string::npos);
}

TEST_CASE("quotes in phrases are doubled in SQL literals") {
    RetrievalPlan plan = lookup_plan();
    plan.filters.text = "driver's license";
    const std::string sql = emit_sql(compile(plan));
    CHECK(sql.find("text ILIKE '%driver''s license%'") != std::string::npos);
}

TEST_CASE("tau appears verbatim in the join clause") {
    RetrievalPlan plan = lookup_plan();
    plan.fusion.tau = 10.0;
    CHECK(emit_sql(compile(plan)).find("temporal_overlap(tx, sp, 10)") != std::string::npos);
    plan.fusion.tau = 0.5;
    CHECK(emit_sql(compile(plan)).find("temporal_overlap(tx, sp, 0.5)") != std::string::npos);
}

TEST_CASE("compilation commutes with canonicalization") {
    SeededRng rng(7);
    for (int i = 0; i < 300; ++i) {
        const RetrievalPlan plan = aqtest::random_valid_plan(rng);
        const QueryIR direct = compile(plan);
        const QueryIR via_canonical = compile(canonicalize(plan));
        CHECK(direct == via_canonical);
        CHECK(emit_sql(direct) == emit_sql(via_canonical));
    }
}

TEST_CASE("adding a stream extends the query without rewriting existing CTEs") {
    RetrievalPlan narrow = lookup_plan();
    RetrievalPlan wide = narrow;
    wide.streams.push_back(StreamKind::emotion);

    const std::string narrow_sql = emit_sql(compile(narrow));
    const std::string wide_sql = emit_sql(compile(wide));

    // Each CTE body survives verbatim.
    const auto cte_body = [](const std::string& sql, const std::string& name) {
        const auto begin = sql.find(name + " AS (");
        REQUIRE(begin != std::string::npos);
        return sql.substr(begin, sql.find(')', begin) - begin + 1);
    };
    CHECK(cte_body(narrow_sql, "tx") == cte_body(wide_sql, "tx"));
    CHECK(cte_body(narrow_sql, "sp") == cte_body(wide_sql, "sp"));

    // Exactly one new CTE and one new join.
    const auto count = [](const std::string& sql, const std::string& token) {
        std::size_t n = 0;
        for (auto p = sql.find(token); p != std::string::npos; p = sql.find(token, p + 1)) ++n;
        return n;
    };
    CHECK(count(wide_sql, " AS (") == count(narrow_sql, " AS (") + 1);
    CHECK(count(wide_sql, "temporal_overlap") == count(narrow_sql, "temporal_overlap") + 1);
}

TEST_CASE("compile validates its input") {
    RetrievalPlan plan = lookup_plan();
    plan.streams = {StreamKind::speaker};  // text filter left dangling
    CHECK_THROWS_AS(compile(plan), ValidationError);
    CHECK_THROWS_AS(emit_sql(QueryIR{}), CompileError);
}

TEST_CASE("every random valid plan compiles and emits well-formed SQL") {
    SeededRng rng(8);
    for (int i = 0; i < 300; ++i) {
        const RetrievalPlan plan = aqtest::random_valid_plan(rng);
        const QueryIR ir = compile(plan);
        REQUIRE(ir.scans.size() == plan.streams.size());
        CHECK(ir.anchor() == plan.fusion.anchor);
        const std::string sql = emit_sql(ir);
        CHECK(sql.rfind("WITH\n", 0) == 0);
        CHECK(sql.find(";\n") == sql.size() - 2);
        CHECK(sql.find("SELECT\n  ") != std::string::npos);
    }
}
