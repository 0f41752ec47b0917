#include "aq/eval.hpp"

#include "aq/errors.hpp"
#include "aq/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <thread>

namespace aq {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::vector<LabeledSpan> spans_from_json(const json& items) {
    std::vector<LabeledSpan> spans;
    for (const auto& item : items)
        spans.push_back({item.at("label").get<std::string>(),
                         {item.at("start").get<double>(), item.at("end").get<double>()}});
    return spans;
}

double score_rouge(const json& parsed, const json& ground_truth) {
    return 100.0 * rouge_l(parsed.at("answer").get<std::string>(),
                           ground_truth.at("reference").get<std::string>());
}

double score_diarization(const json& parsed, const json& ground_truth) {
    const auto reference = spans_from_json(ground_truth.at("segments"));
    const auto hypothesis = spans_from_json(parsed.at("events"));
    if (reference.empty()) return hypothesis.empty() ? 0.0 : 100.0;
    return der(reference, hypothesis);
}

double score_ordering(const json& parsed, const json& ground_truth) {
    const auto truth = ground_truth.at("order").get<std::vector<int>>();
    const auto predicted = parsed.at("order").get<std::vector<int>>();
    if (predicted.size() != truth.size()) return 0.0;  // wrong arity: no correlation
    return 100.0 * spearman_rho(truth, predicted);
}

double score_constrained(const json& parsed, const json& ground_truth) {
    if (ground_truth.at("answerable").get<bool>()) {
        return parsed.contains("answer") &&
                       parsed.at("answer").get<std::string>() ==
                           ground_truth.at("answer").get<std::string>()
                   ? 100.0
                   : 0.0;
    }
    return parsed.contains("abstain") && parsed.at("abstain").get<bool>() ? 100.0 : 0.0;
}

struct Accumulator {
    std::vector<const ScoredRun*> runs;

    TaskReport report(Task task, const std::map<Task, double>& toplines) const {
        TaskReport out;
        out.total = runs.size();

        std::vector<std::vector<std::string>> ref_labels, pred_labels;
        std::set<std::string> label_set;
        double parseable_sum = 0.0, end_to_end_sum = 0.0;
        const double floor = task_failure_floor(task);
        for (const ScoredRun* run : runs) {
            if (run->parseable) {
                ++out.parseable_count;
                parseable_sum += run->raw;
                end_to_end_sum += run->raw;
            } else {
                if (run->parse_failure)
                    ++out.parse_failures;
                else if (run->failed_stage)
                    ++out.stage_failures[*run->failed_stage];
                end_to_end_sum += floor;
            }
            if (task == Task::emotion) {
                ref_labels.push_back(run->reference_labels);
                pred_labels.push_back(run->parseable ? run->predicted_labels
                                                     : std::vector<std::string>{});
                for (const auto& l : run->reference_labels) label_set.insert(l);
                for (const auto& l : run->predicted_labels) label_set.insert(l);
            }
        }

        if (task == Task::emotion && !label_set.empty()) {
            const std::vector<std::string> labels(label_set.begin(), label_set.end());
            std::vector<std::vector<std::string>> ref_ok, pred_ok;
            for (const ScoredRun* run : runs) {
                if (!run->parseable) continue;
                ref_ok.push_back(run->reference_labels);
                pred_ok.push_back(run->predicted_labels);
            }
            out.parseable_metric =
                ref_ok.empty() ? 0.0 : 100.0 * macro_f1(ref_ok, pred_ok, labels);
            out.end_to_end_metric = 100.0 * macro_f1(ref_labels, pred_labels, labels);
        } else {
            out.parseable_metric = out.parseable_count
                                       ? parseable_sum / static_cast<double>(out.parseable_count)
                                       : 0.0;
            out.end_to_end_metric =
                out.total ? end_to_end_sum / static_cast<double>(out.total) : 0.0;
        }

        const auto topline_it = toplines.find(task);
        const double topline =
            topline_it == toplines.end() ? task_perfect_score(task) : topline_it->second;
        out.normalized =
            normalize_score(out.end_to_end_metric, topline, task_error_based(task));
        return out;
    }
};

void append_report_row(std::string& text, std::string_view name, const TaskReport& report) {
    char line[256];
    std::snprintf(line, sizeof(line),
                  "%-24.*s %6zu %10zu %10zu %10zu %11.2f %11.2f %11.2f\n",
                  static_cast<int>(name.size()), name.data(), report.total,
                  report.parseable_count, report.parse_failures,
                  report.total - report.parseable_count - report.parse_failures,
                  report.parseable_metric, report.end_to_end_metric, report.normalized);
    text += line;
}

ordered_json task_report_json(const TaskReport& report) {
    ordered_json stage_failures = ordered_json::object();
    for (const auto& [stage, count] : report.stage_failures)
        stage_failures[std::string(stage_name(stage))] = count;
    return ordered_json{{"total", report.total},
                        {"parseable", report.parseable_count},
                        {"parse_failures", report.parse_failures},
                        {"stage_failures", std::move(stage_failures)},
                        {"parseable_metric", report.parseable_metric},
                        {"end_to_end_metric", report.end_to_end_metric},
                        {"normalized", report.normalized}};
}

}  // namespace

bool task_error_based(Task task) {
    return task == Task::diarization;
}

double task_failure_floor(Task task) {
    if (task == Task::diarization) return 100.0;  // all reference speech missed
    return 0.0;  // no credit; for ordering this is zero correlation
}

double task_perfect_score(Task task) {
    return task == Task::diarization ? 0.0 : 100.0;
}

ScoredRun score_run(const TaskInstance& instance, int duration_minutes,
                    const PipelineResult& result) {
    ScoredRun run;
    run.instance_id = instance.instance_id;
    run.task = instance.task;
    run.recording_id = instance.recording_id;
    run.duration_minutes = duration_minutes;
    run.trace = result.trace;
    run.error = result.error;
    run.failed_stage = result.failed_stage;

    if (instance.task == Task::emotion && instance.ground_truth.contains("labels") &&
        instance.ground_truth.at("labels").is_array())
        run.reference_labels = instance.ground_truth.at("labels").get<std::vector<std::string>>();

    if (!result.ok()) return run;
    run.answer_raw = result.answer ? result.answer->raw : "";
    if (!result.answer || !result.answer->ok()) {
        run.parse_failure = true;
        if (result.answer && result.answer->parse_failure) run.error = *result.answer->parse_failure;
        return run;
    }

    const json& parsed = *result.answer->parsed;
    const json& truth = instance.ground_truth;
    try {
        switch (instance.task) {
            case Task::qa1:
            case Task::summarization:
                run.raw = parsed.contains("answer") ? score_rouge(parsed, truth) : 0.0;
                break;
            case Task::mcqa:
                run.raw = parsed.contains("answer") &&
                                  parsed.at("answer") == truth.at("answer")
                              ? 100.0
                              : 0.0;
                break;
            case Task::speaker_count:
                run.raw = parsed.contains("answer") &&
                                  parsed.at("answer").get<long long>() ==
                                      truth.at("answer").get<long long>()
                              ? 100.0
                              : 0.0;
                break;
            case Task::emotion: {
                run.predicted_labels = parsed.at("labels").get<std::vector<std::string>>();
                const std::set<std::string> ref(run.reference_labels.begin(),
                                                run.reference_labels.end());
                const std::set<std::string> pred(run.predicted_labels.begin(),
                                                 run.predicted_labels.end());
                run.raw = ref == pred ? 100.0 : 0.0;
                break;
            }
            case Task::diarization:
                run.raw = score_diarization(parsed, truth);
                break;
            case Task::sed:
                run.raw = 100.0 * event_f1(spans_from_json(truth.at("events")),
                                           spans_from_json(parsed.at("events")));
                break;
            case Task::event_ordering:
                run.raw = parsed.contains("order") ? score_ordering(parsed, truth)
                                                   : task_failure_floor(instance.task);
                break;
            case Task::speaker_constrained_qa:
                run.raw = score_constrained(parsed, truth);
                break;
        }
        run.parseable = true;
    } catch (const std::exception& e) {
        // A schema-conforming answer that still cannot be scored (e.g. an
        // abstention where the schema allowed one but the task expected a
        // value) counts against the parseable metric, not as a parse failure.
        run.parseable = true;
        run.raw = task_failure_floor(instance.task);
        run.error = std::string("scoring: ") + e.what();
    }
    return run;
}

EvalReport decompose_errors(const std::vector<ScoredRun>& runs,
                            const std::map<Task, double>& toplines) {
    std::map<Task, Accumulator> by_task;
    std::map<int, std::map<Task, Accumulator>> by_duration;
    for (const ScoredRun& run : runs) {
        by_task[run.task].runs.push_back(&run);
        by_duration[run.duration_minutes][run.task].runs.push_back(&run);
    }

    EvalReport report;
    for (const auto& [task, acc] : by_task) report.by_task[task] = acc.report(task, toplines);
    for (const auto& [minutes, tasks] : by_duration)
        for (const auto& [task, acc] : tasks)
            report.by_duration[minutes][task] = acc.report(task, toplines);
    return report;
}

ordered_json report_to_json(const EvalReport& report) {
    ordered_json tasks = ordered_json::object();
    for (const auto& [task, task_report] : report.by_task)
        tasks[std::string(task_name(task))] = task_report_json(task_report);
    ordered_json durations = ordered_json::object();
    for (const auto& [minutes, per_task] : report.by_duration) {
        ordered_json inner = ordered_json::object();
        for (const auto& [task, task_report] : per_task)
            inner[std::string(task_name(task))] = task_report_json(task_report);
        durations[std::to_string(minutes)] = std::move(inner);
    }
    return ordered_json{{"tasks", std::move(tasks)}, {"durations", std::move(durations)}};
}

std::string report_to_text(const EvalReport& report) {
    std::string text;
    char header[256];
    std::snprintf(header, sizeof(header), "%-24s %6s %10s %10s %10s %11s %11s %11s\n", "task",
                  "total", "parseable", "parse_fail", "stage_fail", "parseable_m", "end_to_end",
                  "normalized");
    text += header;
    for (const auto& [task, task_report] : report.by_task)
        append_report_row(text, task_name(task), task_report);
    for (const auto& [minutes, per_task] : report.by_duration) {
        text += "\n[" + std::to_string(minutes) + " min]\n";
        text += header;
        for (const auto& [task, task_report] : per_task)
            append_report_row(text, task_name(task), task_report);
    }
    return text;
}

std::string runs_to_jsonl(const std::vector<ScoredRun>& runs) {
    std::string out;
    for (const ScoredRun& run : runs) {
        ordered_json row;
        row["instance_id"] = run.instance_id;
        row["task"] = std::string(task_name(run.task));
        row["recording_id"] = run.recording_id;
        row["duration_minutes"] = run.duration_minutes;
        row["parseable"] = run.parseable;
        if (run.parse_failure) row["parse_failure"] = true;
        if (run.failed_stage) row["failed_stage"] = std::string(stage_name(*run.failed_stage));
        if (!run.error.empty()) row["error"] = run.error;
        if (run.parseable) row["metric"] = run.raw;
        if (!run.answer_raw.empty()) row["answer"] = run.answer_raw;
        row["plan"] = run.trace.plan_json;
        row["sql"] = run.trace.sql;
        row["rows"] = run.trace.row_count;
        row["context_size"] = run.trace.context_size;
        out += row.dump();
        out += '\n';
    }
    return out;
}

std::map<std::string, RecordingDatabase> build_databases(
    const std::vector<ManifestEntry>& manifest, const std::filesystem::path& base_dir) {
    std::map<std::string, RecordingDatabase> databases;
    for (const ManifestEntry& entry : manifest)
        databases.emplace(entry.recording_id, build_database(entry, base_dir));
    return databases;
}

EvalRun run_eval(const std::vector<TaskInstance>& instances,
                 const std::map<std::string, RecordingDatabase>& databases, Planner& planner,
                 Generator& generator, const EvalOptions& options) {
    for (const TaskInstance& instance : instances)
        if (!databases.count(instance.recording_id))
            throw IngestError("instance " + instance.instance_id +
                              " references unknown recording " + instance.recording_id);

    EvalRun eval;
    eval.runs.resize(instances.size());
    std::atomic<std::size_t> next{0};

    const auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= instances.size()) return;
            const TaskInstance& instance = instances[i];
            const RecordingDatabase& db = databases.at(instance.recording_id);
            QueryRequest request{instance.question, instance.recording_id, db_metadata_from(db)};
            PipelineResult result = run_pipeline(request, db, planner, generator, options.pipeline);
            const int minutes = static_cast<int>(std::lround(db.duration() / 60.0));
            eval.runs[i] = score_run(instance, minutes, result);
        }
    };

    const int jobs = std::max(1, options.jobs);
    if (jobs == 1 || instances.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const int count = std::min<int>(jobs, static_cast<int>(instances.size()));
        pool.reserve(static_cast<std::size_t>(count));
        for (int t = 0; t < count; ++t) pool.emplace_back(worker);
        for (std::thread& thread : pool) thread.join();
    }

    eval.report = decompose_errors(eval.runs, options.toplines);
    return eval;
}

}  // namespace aq
