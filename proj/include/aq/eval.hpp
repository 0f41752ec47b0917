#pragma once

#include "aq/benchmark.hpp"
#include "aq/gateway.hpp"
#include "aq/ingest.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace aq {

// Headline-metric conventions, all on a 0..100 scale except where noted:
// accuracy-style tasks score 100/0 per instance, Rouge-L and F1 are scaled
// by 100, rank correlation is scaled by 100 (and may be negative), and
// diarization reports an error rate where lower is better.
bool task_error_based(Task task);
// End-to-end contribution of a run that produced no scoreable answer.
double task_failure_floor(Task task);
// Default topline (a perfect system) used for normalization.
double task_perfect_score(Task task);

// One pipeline run joined with its instance and scored against ground truth.
struct ScoredRun {
    std::string instance_id;
    Task task = Task::qa1;
    std::string recording_id;
    int duration_minutes = 0;

    bool parseable = false;               // produced a schema-conforming answer
    bool parse_failure = false;           // generated output violated the schema
    std::optional<Stage> failed_stage;    // stage that threw, when one did
    std::string error;
    std::string answer_raw;

    double raw = 0.0;  // instance metric (percent scale), valid when parseable

    // Emotion runs pool into one macro-F1 at report time.
    std::vector<std::string> reference_labels;
    std::vector<std::string> predicted_labels;

    PipelineTrace trace;
};

ScoredRun score_run(const TaskInstance& instance, int duration_minutes,
                    const PipelineResult& result);

struct TaskReport {
    std::size_t total = 0;
    std::size_t parseable_count = 0;
    std::size_t parse_failures = 0;
    std::map<Stage, std::size_t> stage_failures;

    double parseable_metric = 0.0;   // over schema-conforming runs only
    double end_to_end_metric = 0.0;  // failed runs contribute the task floor
    double normalized = 0.0;         // end-to-end against the topline, 0..100
};

struct EvalReport {
    std::map<Task, TaskReport> by_task;
    std::map<int, std::map<Task, TaskReport>> by_duration;  // minutes -> task
};

// Aggregates scored runs into per-task and per-duration reports. Toplines
// default to a perfect system per task; entries in `toplines` override.
EvalReport decompose_errors(const std::vector<ScoredRun>& runs,
                            const std::map<Task, double>& toplines = {});

nlohmann::ordered_json report_to_json(const EvalReport& report);
std::string report_to_text(const EvalReport& report);
// One JSON line per run: ids, failure tags, metric, plan and SQL trace.
std::string runs_to_jsonl(const std::vector<ScoredRun>& runs);

std::map<std::string, RecordingDatabase> build_databases(
    const std::vector<ManifestEntry>& manifest, const std::filesystem::path& base_dir);

struct EvalOptions {
    int jobs = 1;
    PipelineOptions pipeline;
    std::map<Task, double> toplines;
};

struct EvalRun {
    std::vector<ScoredRun> runs;  // instance order
    EvalReport report;
};

// Runs the full pipeline over every instance (fanning out up to
// options.jobs workers; results are keyed by instance, so worker scheduling
// cannot change the report) and aggregates.
EvalRun run_eval(const std::vector<TaskInstance>& instances,
                 const std::map<std::string, RecordingDatabase>& databases, Planner& planner,
                 Generator& generator, const EvalOptions& options = {});

}  // namespace aq
