#pragma once

#include "aq/store.hpp"
#include "aq/timespan.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace aq {

inline constexpr double kDefaultTau = 2.5;
inline constexpr double kDefaultEventScoreMin = 0.5;

// Projected output columns of a retrieval plan.
enum class ReturnField { start, end, speaker, text, emotion, event, score };

std::string_view field_name(ReturnField field);
std::optional<ReturnField> parse_field_name(std::string_view name);

// Per-stream filters. At most one value per field; an absent optional means
// the stream is scanned unfiltered.
struct FilterSet {
    std::optional<std::string> text;                       // transcript keyword phrase
    std::optional<std::string> speaker;                    // exact speaker label
    std::optional<std::vector<std::string>> emotion_labels;
    std::optional<std::vector<std::string>> event_labels;
    std::optional<double> event_score_min;
    std::optional<TimeSpan> time_window;                   // applies to every scanned stream

    bool operator==(const FilterSet&) const = default;
};

struct FusionSpec {
    StreamKind anchor = StreamKind::transcript;
    std::optional<double> tau;  // seconds; kDefaultTau when absent

    bool operator==(const FusionSpec&) const = default;
};

struct OutputSpec {
    std::vector<ReturnField> return_fields;

    bool operator==(const OutputSpec&) const = default;
};

enum class AnswerKind { free_text, enum_choice, integer, span_list, label_list, ordering };

std::string_view answer_kind_name(AnswerKind kind);

// Output contract for the generation stage. `abstainable` wraps the kind with
// the fixed abstention reply; it cannot nest.
struct AnswerSchema {
    AnswerKind kind = AnswerKind::free_text;
    std::vector<std::string> enum_values;  // enum_choice only
    int ordering_size = 0;                 // ordering only
    bool abstainable = false;

    bool operator==(const AnswerSchema&) const = default;
};

struct RetrievalPlan {
    std::vector<StreamKind> streams;
    FilterSet filters;
    FusionSpec fusion;
    OutputSpec output;
    AnswerSchema answer_schema;

    bool operator==(const RetrievalPlan&) const = default;
};

// Parses and fully validates a plan document. Malformed JSON raises
// ParseError with the byte position; contract violations raise
// ValidationError naming the violated rule. Unknown keys are errors at
// every level.
RetrievalPlan parse_plan(std::string_view document);

// Cross-field rules shared by parse_plan and programmatic plan construction.
void validate_plan(const RetrievalPlan& plan);

// Normal form: anchor stream first and the rest in fixed stream order,
// return_fields deduplicated keeping first occurrence, tau and the event
// score floor materialized. Idempotent; never changes query semantics.
RetrievalPlan canonicalize(RetrievalPlan plan);

// Canonical single-line JSON; equal plans serialize to equal bytes and
// parse_plan(serialize_plan(p)) == canonicalize(p).
std::string serialize_plan(const RetrievalPlan& plan);

// The answer_schema subdocument alone, in its canonical JSON form.
std::string serialize_answer_schema(const AnswerSchema& schema);

}  // namespace aq
