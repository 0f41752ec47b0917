#pragma once

#include "aq/executor.hpp"
#include "aq/plan.hpp"
#include "aq/store.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace aq {

// Fixed reply for unanswerable speaker-constrained questions; compared verbatim.
inline constexpr std::string_view kAbstainReply = "This question is not answerable.";

struct DbMetadata {
    std::vector<StreamKind> streams;          // populated streams only
    double duration = 0.0;
    std::vector<std::string> speaker_labels;
    std::vector<std::string> event_labels;
};

DbMetadata db_metadata_from(const RecordingDatabase& db);

struct QueryRequest {
    std::string question;
    std::string recording_id;
    DbMetadata db_metadata;
};

// Generator output. `parsed` holds the schema-conforming value; exactly one
// of parsed / parse_failure is set.
struct Answer {
    std::string raw;
    std::optional<nlohmann::json> parsed;
    std::optional<std::string> parse_failure;

    bool ok() const { return parsed.has_value(); }
};

// Validates raw generator output against the schema. Abstention (when the
// schema allows it) parses to {"abstain": true}. Violations are recorded,
// never repaired.
Answer parse_answer(std::string raw, const AnswerSchema& schema);

class Planner {
public:
    virtual ~Planner() = default;
    // Returns a valid plan or throws (RemoteError / ValidationError).
    virtual RetrievalPlan plan(const QueryRequest& request) = 0;
};

class Generator {
public:
    virtual ~Generator() = default;
    virtual Answer generate(const std::string& question, const RetrievedSegments& context,
                            const AnswerSchema& schema) = 0;
};

// Deterministic planner matching the fixed question templates by anchored
// phrases; unmatched questions fall back to a transcript keyword plan built
// from the question's last content word.
class RuleTemplatePlanner : public Planner {
public:
    RetrievalPlan plan(const QueryRequest& request) override;
};

// Deterministic generator computing answers directly from the fused rows:
// distinct-count for integers, onset order for orderings, row spans for span
// lists, dominant label for label lists, option-in-context for enums, and
// concatenated retrieved text for free text.
class ExtractiveGenerator : public Generator {
public:
    Answer generate(const std::string& question, const RetrievedSegments& context,
                    const AnswerSchema& schema) override;
};

// Question-text helpers shared by the planner and the extractive generator.
struct McOption {
    std::string letter;
    std::string text;
};
std::vector<McOption> parse_mc_options(const std::string& question);
std::vector<std::string> parse_numbered_labels(const std::string& question);
std::optional<TimeSpan> parse_question_window(const std::string& question);
std::optional<std::string> extract_keyword(const std::string& question);

enum class Stage { plan, compile, execute, generate };
std::string_view stage_name(Stage stage);

struct PipelineTrace {
    std::string plan_json;
    std::string sql;
    std::size_t row_count = 0;
    std::size_t context_size = 0;
};

struct PipelineOptions {
    std::optional<double> tau_override;
};

struct PipelineResult {
    PipelineTrace trace;
    std::optional<Answer> answer;
    std::optional<Stage> failed_stage;
    std::string error;

    bool ok() const { return !failed_stage.has_value(); }
};

// plan -> canonicalize -> compile -> execute -> generate, with each stage
// failure tagged for error decomposition. Never throws for stage failures.
PipelineResult run_pipeline(const QueryRequest& request, const RecordingDatabase& db,
                            Planner& planner, Generator& generator,
                            const PipelineOptions& options = {});

}  // namespace aq
