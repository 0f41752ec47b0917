#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aq/plan.hpp"
#include "aq/rng.hpp"
#include "support/testing.hpp"

#include <nlohmann/json.hpp>

#include <string>

using namespace aq;
using nlohmann::json;

namespace {

// The two-stream keyword+speaker lookup used across the compiler docs.
const char* kReferencePlan = R"({
  "streams": ["transcription", "speaker"],
  "filters": {"text": "employment", "speaker": "SPEAKER_02"},
  "fusion": {"anchor": "transcript"},
  "output": {"return_fields": ["start", "end", "speaker", "text"]},
  "answer_schema": {
    "properties": {"answer": {"type": "string", "enum": ["A", "B", "C", "D"]}},
    "required": ["answer"]
  }
})";

json reference_doc() {
    return json::parse(kReferencePlan);
}

std::string rule_of(const std::function<void()>& thrower) {
    try {
        thrower();
    } catch (const ValidationError& e) {
        return e.rule;
    }
    return "";
}

}  // namespace

TEST_CASE("the reference plan parses into the expected structure") {
    const RetrievalPlan plan = parse_plan(kReferencePlan);
    REQUIRE(plan.streams.size() == 2);
    CHECK(plan.streams[0] == StreamKind::transcript);  // alias resolved
    CHECK(plan.streams[1] == StreamKind::speaker);
    CHECK(plan.filters.text == "employment");
    CHECK(plan.filters.speaker == "SPEAKER_02");
    CHECK_FALSE(plan.filters.time_window.has_value());
    CHECK(plan.fusion.anchor == StreamKind::transcript);
    CHECK_FALSE(plan.fusion.tau.has_value());  // left implicit until canonicalized
    CHECK(plan.output.return_fields ==
          std::vector<ReturnField>{ReturnField::start, ReturnField::end, ReturnField::speaker,
                                   ReturnField::text});
    CHECK(plan.answer_schema.kind == AnswerKind::enum_choice);
    CHECK(plan.answer_schema.enum_values == std::vector<std::string>{"A", "B", "C", "D"});
    CHECK_FALSE(plan.answer_schema.abstainable);
}

TEST_CASE("malformed JSON reports a parse error with position info") {
    CHECK_THROWS_AS(parse_plan("{\"streams\": ["), ParseError);
    try {
        parse_plan("not json at all");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("plan document") != std::string::npos);
    }
}

TEST_CASE("every top-level key is required and no extras are allowed") {
    for (const char* key : {"streams", "filters", "fusion", "output", "answer_schema"}) {
        json doc = reference_doc();
        doc.erase(key);
        CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "missing_key");
    }
    json doc = reference_doc();
    doc["mode"] = "fast";
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "unknown_key");
}

TEST_CASE("stream list violations are rejected by name") {
    json doc = reference_doc();
    doc["streams"] = json::array();
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "empty_streams");

    doc = reference_doc();
    doc["streams"] = {"transcript", "video"};
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "unknown_stream");

    doc = reference_doc();
    doc["streams"] = {"transcript", "transcript"};
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "duplicate_stream");

    // Alias and canonical name refer to the same stream.
    doc = reference_doc();
    doc["streams"] = {"transcription", "transcript"};
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "duplicate_stream");

    doc = reference_doc();
    doc["streams"] = "transcript";
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "type_error");
}

TEST_CASE("filters must be backed by their stream") {
    json doc = reference_doc();
    doc["streams"] = {"transcript"};
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "filter_without_stream");

    doc = reference_doc();
    doc["filters"] = {{"event_score_min", 0.7}};
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "filter_without_stream");

    doc = reference_doc();
    doc["filters"]["volume"] = 3;
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "unknown_key");

    doc = reference_doc();
    doc["filters"]["text"] = "";
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "empty_value");
}

TEST_CASE("score and window bounds are validated") {
    json doc = reference_doc();
    doc["streams"] = {"transcript", "speaker", "sound_event"};
    doc["filters"]["event_score_min"] = 1.5;
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "invalid_score");

    doc = reference_doc();
    doc["filters"]["time_window"] = {{"start", 200.0}, {"end", 100.0}};
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "invalid_window");

    doc = reference_doc();
    doc["filters"]["time_window"] = {{"start", -5.0}, {"end", 100.0}};
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "invalid_window");

    doc = reference_doc();
    doc["filters"]["time_window"] = {{"start", 0.0}, {"end", 100.0}, {"tau", 1.0}};
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "unknown_key");
}

TEST_CASE("fusion anchor must be selected and tau positive") {
    json doc = reference_doc();
    doc["fusion"]["anchor"] = "emotion";
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "anchor_not_selected");

    doc = reference_doc();
    doc["fusion"]["anchor"] = "loudness";
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "unknown_stream");

    for (double tau : {0.0, -2.5}) {
        doc = reference_doc();
        doc["fusion"]["tau"] = tau;
        CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "invalid_tau");
    }
}

TEST_CASE("return fields must be non-empty, unique and resolvable") {
    json doc = reference_doc();
    doc["output"]["return_fields"] = json::array();
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "empty_fields");

    doc = reference_doc();
    doc["output"]["return_fields"] = {"start", "start"};
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "duplicate_field");

    doc = reference_doc();
    doc["output"]["return_fields"] = {"start", "volume"};
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "unknown_field");

    // `event` needs the sound_event stream; `score` accepts emotion too.
    doc = reference_doc();
    doc["output"]["return_fields"] = {"start", "event"};
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "unresolvable_field");

    doc = reference_doc();
    doc["output"]["return_fields"] = {"start", "score"};
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "unresolvable_field");

    doc = reference_doc();
    doc["streams"] = {"transcript", "speaker", "emotion"};
    doc["output"]["return_fields"] = {"start", "score"};
    CHECK_NOTHROW(parse_plan(doc.dump()));
}

TEST_CASE("answer schema shapes are strict") {
    json doc = reference_doc();
    doc["answer_schema"]["properties"] = json::object();
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "schema_shape");

    doc = reference_doc();
    doc["answer_schema"]["required"] = {"other"};
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "schema_shape");

    doc = reference_doc();
    doc["answer_schema"]["properties"]["answer"]["enum"] = json::array();
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "empty_array");

    doc = reference_doc();
    doc["answer_schema"]["properties"]["answer"]["enum"] = {"A", "A"};
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "duplicate_value");

    doc = reference_doc();
    doc["answer_schema"]["properties"]["answer"] = {{"type", "integer"}, {"enum", {"A"}}};
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "schema_shape");

    doc = reference_doc();
    doc["answer_schema"]["properties"] = {
        {"order",
         {{"type", "array"}, {"items", {{"type", "integer"}}}, {"minItems", 3}, {"maxItems", 4}}}};
    doc["answer_schema"]["required"] = {"order"};
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "schema_shape");

    doc = reference_doc();
    doc["answer_schema"]["abstainable"] = "yes";
    CHECK(rule_of([&] { parse_plan(doc.dump()); }) == "type_error");
}

TEST_CASE("ordering, label-list and event-list schemas parse") {
    json doc = reference_doc();
    doc["answer_schema"] = {
        {"properties",
         {{"order",
           {{"type", "array"}, {"items", {{"type", "integer"}}}, {"minItems", 3},
            {"maxItems", 3}}}}},
        {"required", {"order"}}};
    RetrievalPlan plan = parse_plan(doc.dump());
    CHECK(plan.answer_schema.kind == AnswerKind::ordering);
    CHECK(plan.answer_schema.ordering_size == 3);

    doc["answer_schema"] = {
        {"properties", {{"labels", {{"type", "array"}, {"items", {{"type", "string"}}}}}}},
        {"required", {"labels"}}};
    plan = parse_plan(doc.dump());
    CHECK(plan.answer_schema.kind == AnswerKind::label_list);

    doc["answer_schema"] = {
        {"properties", {{"events", {{"type", "array"}, {"items", {{"type", "object"}}}}}}},
        {"required", {"events"}},
        {"abstainable", true}};
    plan = parse_plan(doc.dump());
    CHECK(plan.answer_schema.kind == AnswerKind::span_list);
    CHECK(plan.answer_schema.abstainable);
}

TEST_CASE("validate_plan catches violations in programmatically built plans") {
    RetrievalPlan plan = parse_plan(kReferencePlan);

    RetrievalPlan bad = plan;
    bad.streams = {StreamKind::speaker, StreamKind::speaker};
    CHECK(rule_of([&] { validate_plan(bad); }) == "duplicate_stream");

    bad = plan;
    bad.answer_schema.kind = AnswerKind::ordering;
    bad.answer_schema.enum_values.clear();
    bad.answer_schema.ordering_size = 1;
    CHECK(rule_of([&] { validate_plan(bad); }) == "invalid_ordering");

    bad = plan;
    bad.answer_schema.kind = AnswerKind::free_text;  // leaves enum values dangling
    CHECK(rule_of([&] { validate_plan(bad); }) == "schema_shape");
}

TEST_CASE("canonicalize orders streams anchor-first and fills defaults") {
    json doc = reference_doc();
    doc["streams"] = {"sound_event", "speaker", "transcript"};
    doc["fusion"]["anchor"] = "speaker";
    doc["filters"] = json::object();
    RetrievalPlan plan = canonicalize(parse_plan(doc.dump()));

    CHECK(plan.streams == std::vector<StreamKind>{StreamKind::speaker, StreamKind::transcript,
                                                  StreamKind::sound_event});
    CHECK(plan.fusion.tau == kDefaultTau);
    CHECK(plan.filters.event_score_min == kDefaultEventScoreMin);  // event stream selected

    // No sound_event stream: the score floor stays absent.
    RetrievalPlan reference = canonicalize(parse_plan(kReferencePlan));
    CHECK_FALSE(reference.filters.event_score_min.has_value());
    CHECK(reference.fusion.tau == kDefaultTau);
}

TEST_CASE("canonicalize deduplicates return fields built in code") {
    RetrievalPlan plan = parse_plan(kReferencePlan);
    plan.output.return_fields = {ReturnField::start, ReturnField::text, ReturnField::start};
    plan = canonicalize(std::move(plan));
    CHECK(plan.output.return_fields ==
          std::vector<ReturnField>{ReturnField::start, ReturnField::text});
}

TEST_CASE("canonicalize is idempotent") {
    SeededRng rng(41);
    for (int i = 0; i < 100; ++i) {
        const RetrievalPlan plan = aqtest::random_valid_plan(rng);
        const RetrievalPlan once = canonicalize(plan);
        const RetrievalPlan twice = canonicalize(once);
        CHECK(serialize_plan(once) == serialize_plan(twice));
    }
}

TEST_CASE("serialization round-trips through the parser onto the canonical form") {
    SeededRng rng(42);
    for (int i = 0; i < 200; ++i) {
        const RetrievalPlan plan = aqtest::random_valid_plan(rng);
        const std::string bytes = serialize_plan(plan);
        const RetrievalPlan reparsed = parse_plan(bytes);
        CHECK(serialize_plan(reparsed) == bytes);
        CHECK(serialize_plan(plan) == bytes);  // equal plans serialize identically
    }
}

TEST_CASE("serialized plans list keys in the contract order") {
    const std::string bytes = serialize_plan(parse_plan(kReferencePlan));
    const auto pos = [&](const char* key) { return bytes.find(key); };
    CHECK(pos("\"streams\"") < pos("\"filters\""));
    CHECK(pos("\"filters\"") < pos("\"fusion\""));
    CHECK(pos("\"fusion\"") < pos("\"output\""));
    CHECK(pos("\"output\"") < pos("\"answer_schema\""));
    CHECK(bytes.find("\"tau\":2.5") != std::string::npos);  // default materialized
}
