#pragma once

#include "aq/ingest.hpp"
#include "aq/timespan.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace aq {

enum class Task {
    qa1,
    mcqa,
    summarization,
    diarization,
    emotion,
    sed,
    speaker_count,
    event_ordering,
    speaker_constrained_qa,
};

inline constexpr std::array<Task, 9> kAllTasks = {
    Task::qa1,           Task::mcqa,          Task::summarization,
    Task::diarization,   Task::emotion,       Task::sed,
    Task::speaker_count, Task::event_ordering, Task::speaker_constrained_qa,
};

std::string_view task_name(Task task);
std::optional<Task> parse_task(std::string_view name);

struct TaskInstance {
    std::string instance_id;
    Task task = Task::qa1;
    std::string recording_id;
    std::string question;
    std::optional<TimeSpan> window;
    nlohmann::json ground_truth;
};

struct BenchmarkSpec {
    int duration_minutes = 10;  // any positive multiple of the 10-minute source length
    std::vector<Task> tasks;    // empty selects every task
    std::uint64_t seed = 0;
    int recordings = 1;
};

struct GeneratedBenchmark {
    std::vector<ManifestEntry> manifest;
    std::vector<TaskInstance> instances;
};

// Synthesizes a deterministic long-form corpus (metadata files + manifest +
// instances) under out_dir. Recordings are concatenations of seeded
// 10-minute sources: a Markov speaker-turn process with filler text and
// per-turn emotion labels, plus inserted needle facts and sound events as
// the selected tasks require. Ground truths follow the same overlap and
// ordering rules the executor uses, so replaying them scores perfectly.
GeneratedBenchmark generate_benchmark(const BenchmarkSpec& spec,
                                      const std::filesystem::path& out_dir);

void save_instances(const std::vector<TaskInstance>& instances,
                    const std::filesystem::path& path);
std::vector<TaskInstance> load_instances(const std::filesystem::path& path);

}  // namespace aq
