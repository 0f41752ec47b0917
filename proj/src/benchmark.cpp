#include "aq/benchmark.hpp"

#include "aq/errors.hpp"
#include "aq/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace aq {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

namespace fs = std::filesystem;

constexpr double kSourceSeconds = 600.0;
constexpr double kBlockSeconds = 1800.0;  // ordering/event label blocks: three sources
// Unanswerable speaker-constrained instances require the designated speaker
// to stay this far from the fact turn, so no fusion tolerance up to 10 s can
// attach them.
constexpr double kAbstainGuardSeconds = 10.0;

// Word pools. Topic nouns are the retrieval keywords: a unit test asserts
// that no pool word contains another pool's word as a substring, which keeps
// needle keyword matches unique within a recording.
const std::vector<std::string>& filler_words() {
    static const std::vector<std::string> words = {
        "today",   "again",   "maybe",    "really",   "think",    "agree",    "point",
        "start",   "next",    "after",    "before",   "during",   "while",    "every",
        "often",   "never",   "always",   "better",   "small",    "large",    "quick",
        "slow",    "early",   "late",     "open",     "close",    "begin",    "finish",
        "continue", "change",  "remain",   "report",   "update",   "review",   "discuss",
        "explain", "describe", "mention",  "suggest",  "propose",  "accept",   "refuse",
        "consider", "prepare", "present",  "attend",   "arrange",  "manage",   "handle",
        "deliver", "receive", "provide",  "require",  "include",  "improve",  "reduce",
        "increase", "measure", "compare",  "observe",  "notice",   "follow",   "remind",
        "repeat",  "listen",  "speak",    "write",    "share",    "split",    "merge",
        "align",   "shift",   "check",    "verify",   "confirm",  "adjust",   "outline",
        "schedule", "budget",  "detail"};
    return words;
}

const std::vector<std::string>& topic_adjectives() {
    static const std::vector<std::string> words = {
        "amber",  "azure",   "bronze", "coral",  "crimson", "dusty",   "gilded",
        "golden", "hazel",   "indigo", "ivory",  "jade",    "maroon",  "olive",
        "russet", "scarlet", "silver", "teal",   "umber",   "violet"};
    return words;
}

const std::vector<std::string>& topic_nouns() {
    static const std::vector<std::string> words = {
        "harbor",    "garden",    "bridge",    "castle",    "meadow",    "valley",
        "lantern",   "anchor",    "barrel",    "basket",    "beacon",    "blanket",
        "bottle",    "bucket",    "cabin",     "camera",    "candle",    "canyon",
        "carpet",    "cellar",    "chapel",    "chimney",   "circus",    "cistern",
        "citadel",   "compass",   "copper",    "cottage",   "cradle",    "crater",
        "crystal",   "curtain",   "dagger",    "desert",    "diamond",   "dolphin",
        "donkey",    "dragon",    "drawer",    "eagle",     "engine",    "falcon",
        "feather",   "fiddle",    "forest",    "fountain",  "furnace",   "galaxy",
        "garnet",    "glacier",   "goblet",    "granite",   "guitar",    "hammer",
        "hammock",   "harvest",   "helmet",    "hollow",    "hornet",    "island",
        "jacket",    "jungle",    "kettle",    "kitchen",   "ladder",    "lagoon",
        "locket",    "marble",    "market",    "mirror",    "mosaic",    "mountain",
        "museum",    "needle",    "oasis",     "orchard",   "palace",    "parrot",
        "pasture",   "pebble",    "pendulum",  "pigeon",    "pillar",    "pistol",
        "plateau",   "prairie",   "quarry",    "quill",     "rabbit",    "rafter",
        "ravine",    "reef",      "ribbon",    "saddle",    "sapphire",  "satchel",
        "shovel",    "shrine",    "sledge",    "spindle",   "squirrel",  "stable",
        "statue",    "steeple",   "summit",    "sundial",   "swamp",     "tavern",
        "telescope", "temple",    "theater",   "thicket",   "tower",     "trestle",
        "tunnel",    "turbine",   "turret",    "velvet",    "vessel",    "village",
        "vineyard",  "volcano",   "wagon",     "walnut",    "wharf",     "willow",
        "windmill",  "woodpecker"};
    return words;
}

const std::vector<std::string>& code_stems() {
    static const std::vector<std::string> words = {
        "zephyr",   "quartz",  "nimbus",   "embercoal", "cobalt",   "lumen",
        "onyx",     "pixel",   "ravenwing", "sonnet",   "talonmark", "umbra",
        "vortex",   "fablecode", "glyph",   "jasperite", "krypton",  "lattice",
        "meridian", "nectar",  "obelisk",  "parallax",  "quasar",   "rosette",
        "solstice", "tandem",  "tundra",   "vertexon",  "axiom",    "cipher"};
    return words;
}

const std::vector<std::string>& emotion_labels() {
    static const std::vector<std::string> labels = {"Neutral", "Happy", "Sad", "Angry"};
    return labels;
}

const std::vector<std::string>& event_label_pool() {
    static const std::vector<std::string> labels = {
        "Music",
        "Bird flight, flapping wings",
        "Change ringing",
        "Flamenco",
        "Doorbell",
        "Applause",
        "Laughter",
        "Telephone bell ringing",
        "Dog bark",
        "Car horn",
        "Siren",
        "Thunder",
        "Rain on surface",
        "Footsteps",
        "Typing",
        "Glass clink",
        "Camera shutter",
        "Church bell",
        "Train whistle",
        "Helicopter",
        "Chainsaw",
        "Crowd cheering",
        "Water tap running",
        "Wind chime"};
    return labels;
}

double round4(double value) {
    return std::round(value * 10000.0) / 10000.0;
}

std::string fixed3(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", value);
    return buf;
}

struct TurnDraft {
    std::size_t source = 0;
    TimeSpan local;
    std::string speaker;
    std::string text;
    std::string emotion_top;
    double emotion_top_score = 0.0;
    std::string emotion_second;
    double emotion_second_score = 0.0;
};

struct EventDraft {
    std::size_t source = 0;
    std::size_t block = 0;
    TimeSpan local;
    std::string label;
    double score = 0.0;
};

struct FactDraft {
    std::size_t turn = 0;
    std::string adjective;
    std::string noun;
    std::string secret;
    std::string sentence;
    std::string speaker;
};

struct RecordingDraft {
    std::string id;
    double duration = 0.0;
    std::vector<std::string> source_ids;
    std::vector<std::string> speaker_pool;
    std::vector<TurnDraft> turns;
    std::vector<EventDraft> events;
    std::vector<FactDraft> facts;
    std::vector<std::string> spare_secrets;  // MCQA distractor reserve

    double offset(std::size_t source) const { return static_cast<double>(source) * kSourceSeconds; }
    TimeSpan global(std::size_t source, const TimeSpan& local) const {
        return {round_ms(local.start + offset(source)), round_ms(local.end + offset(source))};
    }
    TimeSpan turn_span(const TurnDraft& turn) const { return global(turn.source, turn.local); }
    TimeSpan event_span(const EventDraft& event) const {
        return global(event.source, event.local);
    }
};

bool spans_overlap(const TimeSpan& a, const TimeSpan& b) {
    return a.overlaps(b);  // closed interval, matching predicate semantics
}

std::string make_secret(SeededRng& rng, std::set<std::string>& used) {
    for (;;) {
        const std::string candidate = rng.pick(code_stems()) +
                                      std::to_string(rng.next_int(10, 99));
        if (used.insert(candidate).second) return candidate;
    }
}

void generate_turns(SeededRng& rng, RecordingDraft& draft) {
    const std::size_t pool = draft.speaker_pool.size();
    for (std::size_t source = 0; source < draft.source_ids.size(); ++source) {
        std::vector<std::size_t> order(pool);
        for (std::size_t i = 0; i < pool; ++i) order[i] = i;
        rng.shuffle(order);
        const std::size_t active =
            static_cast<std::size_t>(rng.next_int(2, static_cast<std::int64_t>(std::min<std::size_t>(4, pool))));
        order.resize(active);

        double t = rng.next_real(0.3, 1.0);
        std::size_t current = rng.next_index(active);
        for (;;) {
            const double length = rng.next_real(2.0, 8.0);
            if (t + length > kSourceSeconds - 0.5) break;
            if (active > 1 && !rng.next_bool(0.35)) {
                std::size_t other = rng.next_index(active - 1);
                if (other >= current) ++other;
                current = other;
            }
            TurnDraft turn;
            turn.source = source;
            turn.local = {round_ms(t), round_ms(t + length)};
            turn.speaker = draft.speaker_pool[order[current]];
            const std::size_t words = static_cast<std::size_t>(rng.next_int(6, 12));
            for (std::size_t w = 0; w < words; ++w) {
                if (w) turn.text += ' ';
                turn.text += rng.pick(filler_words());
            }
            turn.emotion_top = rng.pick(emotion_labels());
            turn.emotion_top_score = round4(rng.next_real(0.60, 0.95));
            do {
                turn.emotion_second = rng.pick(emotion_labels());
            } while (turn.emotion_second == turn.emotion_top);
            turn.emotion_second_score = round4(rng.next_real(0.05, 0.40));
            draft.turns.push_back(std::move(turn));
            t += length + rng.next_real(0.2, 1.0);
        }
    }
}

// Six distinct labels per full three-source block, two inserted events per
// source, onsets spaced far enough apart that first-occurrence order is
// unambiguous.
void generate_events(SeededRng& rng, RecordingDraft& draft) {
    const std::size_t sources = draft.source_ids.size();
    for (std::size_t block_start = 0; block_start < sources; block_start += 3) {
        const std::size_t block_end = std::min(block_start + 3, sources);
        const std::size_t block = block_start / 3;
        std::vector<std::string> labels = event_label_pool();
        rng.shuffle(labels);
        labels.resize(2 * (block_end - block_start));

        std::size_t label_index = 0;
        for (std::size_t source = block_start; source < block_end; ++source) {
            std::vector<double> onsets;
            for (int j = 0; j < 2; ++j) {
                double onset = 10.0 + static_cast<double>(j) * 300.0;
                for (int attempt = 0; attempt < 100; ++attempt) {
                    const double candidate = rng.next_real(10.0, 550.0);
                    const bool spaced = std::all_of(onsets.begin(), onsets.end(), [&](double o) {
                        return std::abs(o - candidate) >= 20.0;
                    });
                    if (spaced) {
                        onset = candidate;
                        break;
                    }
                }
                onsets.push_back(onset);
                EventDraft event;
                event.source = source;
                event.block = block;
                event.local = {round_ms(onset), round_ms(onset + rng.next_real(3.0, 8.0))};
                event.label = labels[label_index++];
                event.score = round4(rng.next_real(0.62, 0.95));
                draft.events.push_back(std::move(event));
            }
        }
    }
}

void generate_facts(SeededRng& rng, RecordingDraft& draft, std::set<std::string>& used_secrets) {
    std::vector<std::string> nouns = topic_nouns();
    rng.shuffle(nouns);
    std::size_t noun_index = 0;

    for (std::size_t source = 0; source < draft.source_ids.size(); ++source) {
        for (int half = 0; half < 2; ++half) {
            const double lo = half * 300.0 + kAbstainGuardSeconds;
            const double hi = (half + 1) * 300.0 - kAbstainGuardSeconds;
            std::vector<std::size_t> eligible;
            for (std::size_t i = 0; i < draft.turns.size(); ++i) {
                const TurnDraft& turn = draft.turns[i];
                if (turn.source != source) continue;
                if (turn.local.start >= lo && turn.local.end <= hi) eligible.push_back(i);
            }
            if (eligible.empty() || noun_index >= nouns.size()) continue;
            const std::size_t turn_index = eligible[rng.next_index(eligible.size())];

            FactDraft fact;
            fact.turn = turn_index;
            fact.adjective = rng.pick(topic_adjectives());
            fact.noun = nouns[noun_index++];
            fact.secret = make_secret(rng, used_secrets);
            fact.speaker = draft.turns[turn_index].speaker;
            fact.sentence = "The secret word for the " + fact.adjective + " " + fact.noun +
                            " is " + fact.secret + ".";
            draft.turns[turn_index].text = fact.sentence;
            draft.facts.push_back(std::move(fact));
        }
    }
    for (int i = 0; i < 6; ++i) draft.spare_secrets.push_back(make_secret(rng, used_secrets));
}

RecordingDraft make_recording(SeededRng& rng, int index, int minutes, bool want_events,
                              bool want_facts) {
    RecordingDraft draft;
    char id[32];
    std::snprintf(id, sizeof(id), "rec%03d", index);
    draft.id = id;
    draft.duration = minutes * 60.0;

    const int sources = minutes / 10;
    for (int s = 0; s < sources; ++s) {
        char source_id[48];
        std::snprintf(source_id, sizeof(source_id), "%s_src%02d", draft.id.c_str(), s);
        draft.source_ids.push_back(source_id);
    }

    const std::size_t pool = static_cast<std::size_t>(rng.next_int(3, 6));
    for (std::size_t p = 0; p < pool; ++p) {
        char speaker[24];
        std::snprintf(speaker, sizeof(speaker), "SPEAKER_%02zu", p);
        draft.speaker_pool.push_back(speaker);
    }

    generate_turns(rng, draft);
    if (want_events) generate_events(rng, draft);
    if (want_facts) {
        std::set<std::string> used_secrets;
        generate_facts(rng, draft, used_secrets);
    }
    return draft;
}

ManifestEntry write_recording(const RecordingDraft& draft, const fs::path& out_dir) {
    const fs::path metadata_dir = out_dir / "metadata";
    fs::create_directories(metadata_dir);

    const auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream output(metadata_dir / name, std::ios::binary | std::ios::trunc);
        if (!output) throw IngestError("cannot write " + (metadata_dir / name).string());
        output << content;
    };

    std::string rttm;
    std::string transcript;
    std::string emotion;
    for (const TurnDraft& turn : draft.turns) {
        const std::string& source = draft.source_ids[turn.source];
        rttm += "SPEAKER " + source + " 1 " + fixed3(turn.local.start) + " " +
                fixed3(turn.local.length()) + " <NA> <NA> " + turn.speaker + " <NA> <NA>\n";
        ordered_json text_row;
        text_row["start"] = turn.local.start;
        text_row["end"] = turn.local.end;
        text_row["text"] = turn.text;
        text_row["source"] = source;
        transcript += text_row.dump();
        transcript += '\n';
        ordered_json emotion_row;
        emotion_row["start"] = turn.local.start;
        emotion_row["end"] = turn.local.end;
        emotion_row["labels"] =
            ordered_json::array({ordered_json{{"label", turn.emotion_top},
                                              {"score", turn.emotion_top_score}},
                                 ordered_json{{"label", turn.emotion_second},
                                              {"score", turn.emotion_second_score}}});
        emotion_row["source"] = source;
        emotion += emotion_row.dump();
        emotion += '\n';
    }
    std::string events;
    for (const EventDraft& event : draft.events) {
        ordered_json row;
        row["start"] = event.local.start;
        row["end"] = event.local.end;
        row["labels"] =
            ordered_json::array({ordered_json{{"label", event.label}, {"score", event.score}}});
        row["source"] = draft.source_ids[event.source];
        events += row.dump();
        events += '\n';
    }

    write(draft.id + ".rttm", rttm);
    write(draft.id + ".transcript.jsonl", transcript);
    write(draft.id + ".emotion.jsonl", emotion);
    write(draft.id + ".events.jsonl", events);

    ManifestEntry entry;
    entry.recording_id = draft.id;
    entry.duration = draft.duration;
    entry.rttm_path = "metadata/" + draft.id + ".rttm";
    entry.transcript_path = "metadata/" + draft.id + ".transcript.jsonl";
    entry.emotion_path = "metadata/" + draft.id + ".emotion.jsonl";
    entry.events_path = "metadata/" + draft.id + ".events.jsonl";
    for (std::size_t s = 0; s < draft.source_ids.size(); ++s)
        entry.sources.push_back({draft.source_ids[s], draft.offset(s), kSourceSeconds});
    return entry;
}

std::string mcqa_options_suffix(const std::vector<std::string>& options) {
    std::string suffix;
    for (std::size_t i = 0; i < options.size(); ++i) {
        suffix += " ";
        suffix += static_cast<char>('A' + i);
        suffix += ") " + options[i];
    }
    return suffix;
}

// Shuffled four-option set for a fact: the right secret plus distractors from
// the recording's other facts, padded from the spare reserve when the
// recording is too short to supply three.
std::pair<std::vector<std::string>, std::string> make_options(SeededRng& rng,
                                                              const RecordingDraft& draft,
                                                              std::size_t fact_index) {
    std::vector<std::string> distractors;
    for (std::size_t i = 0; i < draft.facts.size(); ++i)
        if (i != fact_index) distractors.push_back(draft.facts[i].secret);
    rng.shuffle(distractors);
    for (const std::string& spare : draft.spare_secrets) {
        if (distractors.size() >= 3) break;
        distractors.push_back(spare);
    }
    distractors.resize(std::min<std::size_t>(3, distractors.size()));

    std::vector<std::string> options = {draft.facts[fact_index].secret};
    options.insert(options.end(), distractors.begin(), distractors.end());
    rng.shuffle(options);
    const auto it = std::find(options.begin(), options.end(), draft.facts[fact_index].secret);
    const std::string letter(1, static_cast<char>('A' + (it - options.begin())));
    return {options, letter};
}

std::string qa_question(const FactDraft& fact) {
    return "Given the context, answer the following question in a short sentence: "
           "What is the secret word for the " +
           fact.adjective + " " + fact.noun + "?";
}

json span_json(const std::string& label, const TimeSpan& span) {
    return json{{"label", label}, {"start", span.start}, {"end", span.end}};
}

}  // namespace

std::string_view task_name(Task task) {
    switch (task) {
        case Task::qa1: return "qa1";
        case Task::mcqa: return "mcqa";
        case Task::summarization: return "summarization";
        case Task::diarization: return "diarization";
        case Task::emotion: return "emotion";
        case Task::sed: return "sed";
        case Task::speaker_count: return "speaker_count";
        case Task::event_ordering: return "event_ordering";
        case Task::speaker_constrained_qa: return "speaker_constrained_qa";
    }
    return "?";
}

std::optional<Task> parse_task(std::string_view name) {
    for (Task task : kAllTasks)
        if (task_name(task) == name) return task;
    return std::nullopt;
}

GeneratedBenchmark generate_benchmark(const BenchmarkSpec& spec, const fs::path& out_dir) {
    if (spec.duration_minutes <= 0 || spec.duration_minutes % 10 != 0)
        throw IngestError("duration " + std::to_string(spec.duration_minutes) +
                          " min is not expressible from 10-minute sources");
    if (spec.recordings <= 0) throw IngestError("need at least one recording");

    std::vector<Task> tasks;
    for (Task task : kAllTasks) {
        if (spec.tasks.empty() ||
            std::find(spec.tasks.begin(), spec.tasks.end(), task) != spec.tasks.end())
            tasks.push_back(task);
    }
    const auto wants = [&](Task task) {
        return std::find(tasks.begin(), tasks.end(), task) != tasks.end();
    };
    const bool want_events = wants(Task::sed) || wants(Task::event_ordering);
    const bool want_facts =
        wants(Task::qa1) || wants(Task::mcqa) || wants(Task::speaker_constrained_qa);

    SeededRng rng(spec.seed);
    GeneratedBenchmark bench;
    std::vector<RecordingDraft> drafts;
    for (int r = 0; r < spec.recordings; ++r) {
        drafts.push_back(make_recording(rng, r, spec.duration_minutes, want_events, want_facts));
        bench.manifest.push_back(write_recording(drafts.back(), out_dir));
    }

    const double duration = spec.duration_minutes * 60.0;
    for (Task task : tasks) {
        for (const RecordingDraft& draft : drafts) {
            std::size_t counter = 0;
            const auto add = [&](std::string question, std::optional<TimeSpan> window,
                                 json ground_truth) {
                TaskInstance instance;
                instance.instance_id = std::string(task_name(task)) + "-" + draft.id + "-" +
                                       std::to_string(counter++);
                instance.task = task;
                instance.recording_id = draft.id;
                instance.question = std::move(question);
                instance.window = window;
                instance.ground_truth = std::move(ground_truth);
                bench.instances.push_back(std::move(instance));
            };

            switch (task) {
                case Task::qa1:
                    for (const FactDraft& fact : draft.facts)
                        add(qa_question(fact), std::nullopt, json{{"reference", fact.sentence}});
                    break;

                case Task::mcqa:
                    for (std::size_t f = 0; f < draft.facts.size(); ++f) {
                        const auto [options, letter] = make_options(rng, draft, f);
                        add(qa_question(draft.facts[f]) + mcqa_options_suffix(options),
                            std::nullopt, json{{"answer", letter}});
                    }
                    break;

                case Task::summarization:
                    for (double w = 0.0; w + kSourceSeconds <= duration + 1e-9;
                         w += kSourceSeconds) {
                        const TimeSpan window{w, w + kSourceSeconds};
                        std::string reference;
                        for (const TurnDraft& turn : draft.turns) {
                            if (!spans_overlap(draft.turn_span(turn), window)) continue;
                            if (!reference.empty()) reference += ' ';
                            reference += turn.text;
                        }
                        add("Please summarize the conversation starting from " +
                                format_number(window.start) + " sec to " +
                                format_number(window.end) + " sec.",
                            window, json{{"reference", reference}});
                    }
                    break;

                case Task::diarization:
                    for (double w = 0.0; w + 300.0 <= duration + 1e-9; w += 300.0) {
                        const TimeSpan window{w, w + 300.0};
                        json segments = json::array();
                        for (const TurnDraft& turn : draft.turns) {
                            const TimeSpan span = draft.turn_span(turn);
                            if (spans_overlap(span, window))
                                segments.push_back(span_json(turn.speaker, span));
                        }
                        add("Perform speaker diarization for the audio segment spanning " +
                                format_number(window.start) + " to " + format_number(window.end) +
                                " seconds. Return JSON in the format {\"events\": [{\"label\": "
                                "\"SPEAKER_00\", \"start\": 0.0, \"end\": 1.0}]}.",
                            window, json{{"segments", std::move(segments)}});
                    }
                    break;

                case Task::emotion:
                    for (double w = 0.0; w + 300.0 <= duration + 1e-9; w += 300.0) {
                        const TimeSpan window{w, w + 300.0};
                        std::vector<std::size_t> inside;
                        for (std::size_t i = 0; i < draft.turns.size(); ++i) {
                            const TimeSpan span = draft.turn_span(draft.turns[i]);
                            if (span.start >= window.start && span.end <= window.end)
                                inside.push_back(i);
                        }
                        if (inside.empty()) continue;
                        const TurnDraft& turn = draft.turns[inside[rng.next_index(inside.size())]];
                        const TimeSpan span = draft.turn_span(turn);
                        add("You are doing emotion recognition. Analyze the audio between " +
                                format_number(span.start) + " and " + format_number(span.end) +
                                " seconds and respond with the most likely emotion label. "
                                "Return JSON in the format {\"labels\": [\"Neutral\"]}.",
                            span, json{{"labels", json::array({turn.emotion_top})}});
                    }
                    break;

                case Task::sed: {
                    std::vector<std::string> seen;
                    for (const EventDraft& event : draft.events) {
                        if (std::find(seen.begin(), seen.end(), event.label) != seen.end())
                            continue;
                        seen.push_back(event.label);
                        json hits = json::array();
                        for (const EventDraft& other : draft.events)
                            if (other.label == event.label)
                                hits.push_back(span_json(other.label, draft.event_span(other)));
                        add("Detect occurrences of the following sound event label(s): " +
                                event.label +
                                " in the audio clip. Return JSON in the format {\"events\": "
                                "[{\"label\": \"X\", \"start\": 0.0, \"end\": 1.0}]}. Fewer "
                                "events are preferred.",
                            std::nullopt, json{{"events", std::move(hits)}});
                    }
                    break;
                }

                case Task::speaker_count:
                    for (double w = 0.0; w + kSourceSeconds <= duration + 1e-9;
                         w += kSourceSeconds) {
                        const TimeSpan window{w, w + kSourceSeconds};
                        std::set<std::string> speakers;
                        for (const TurnDraft& turn : draft.turns)
                            if (spans_overlap(draft.turn_span(turn), window))
                                speakers.insert(turn.speaker);
                        add("You should count the number of speakers starting from " +
                                format_number(window.start) + " sec to " +
                                format_number(window.end) + " sec.",
                            window, json{{"answer", static_cast<int>(speakers.size())}});
                    }
                    break;

                case Task::event_ordering:
                    for (double w = 0.0; w < duration - 1e-9; w += kBlockSeconds) {
                        const TimeSpan window{w, std::min(w + kBlockSeconds, duration)};
                        const std::size_t block = static_cast<std::size_t>(w / kBlockSeconds);
                        std::map<std::string, double> first_onset;
                        for (const EventDraft& event : draft.events) {
                            if (event.block != block) continue;
                            const double onset = draft.event_span(event).start;
                            const auto it = first_onset.find(event.label);
                            if (it == first_onset.end() || onset < it->second)
                                first_onset[event.label] = onset;
                        }
                        if (first_onset.size() < 3) continue;
                        std::vector<std::string> labels;
                        for (const auto& [label, onset] : first_onset) labels.push_back(label);
                        rng.shuffle(labels);
                        labels.resize(3);

                        std::vector<int> order = {1, 2, 3};
                        std::sort(order.begin(), order.end(), [&](int a, int b) {
                            return first_onset[labels[a - 1]] < first_onset[labels[b - 1]];
                        });
                        std::string question = "You are given the following sound event labels:";
                        for (std::size_t i = 0; i < labels.size(); ++i)
                            question += "\n(" + std::to_string(i + 1) + ") " + labels[i];
                        question +=
                            "\nDetermine the correct chronological order of these events based "
                            "on their first occurrence in the audio clip (" +
                            format_number(window.start) + " to " + format_number(window.end) +
                            " seconds). Return JSON in the format {\"order\": [1, 2, 3]}.";
                        add(std::move(question), window, json{{"order", order}});
                    }
                    break;

                case Task::speaker_constrained_qa:
                    for (std::size_t f = 0; f < draft.facts.size(); f += 2) {
                        const FactDraft& fact = draft.facts[f];
                        const TimeSpan fact_span = draft.turn_span(draft.turns[fact.turn]);
                        const TimeSpan guard{fact_span.start - kAbstainGuardSeconds,
                                             fact_span.end + kAbstainGuardSeconds};
                        std::vector<std::string> absent;
                        for (const std::string& candidate : draft.speaker_pool) {
                            if (candidate == fact.speaker) continue;
                            const bool nearby = std::any_of(
                                draft.turns.begin(), draft.turns.end(), [&](const TurnDraft& t) {
                                    return t.speaker == candidate &&
                                           spans_overlap(draft.turn_span(t), guard);
                                });
                            if (!nearby) absent.push_back(candidate);
                        }
                        if (absent.empty()) continue;
                        const std::string other = absent[rng.next_index(absent.size())];

                        const auto [options, letter] = make_options(rng, draft, f);
                        const std::string core = qa_question(fact) + mcqa_options_suffix(options);
                        const auto constrained = [&](const std::string& speaker) {
                            return "## Task\nYou should work on the utterance from speaker " +
                                   speaker +
                                   ". If you cannot answer the question from the given speaker, "
                                   "just reply \"This question is not answerable.\"\n\n"
                                   "## Question\n" +
                                   core + "\n\n## Answer";
                        };
                        add(constrained(fact.speaker), std::nullopt,
                            json{{"answerable", true}, {"answer", letter}});
                        add(constrained(other), std::nullopt, json{{"answerable", false}});
                    }
                    break;
            }
        }
    }

    save_manifest(bench.manifest, out_dir / "manifest.json");
    save_instances(bench.instances, out_dir / "instances.jsonl");
    return bench;
}

void save_instances(const std::vector<TaskInstance>& instances, const fs::path& path) {
    std::ofstream output(path, std::ios::binary | std::ios::trunc);
    if (!output) throw IngestError("cannot write " + path.string());
    for (const TaskInstance& instance : instances) {
        ordered_json row;
        row["instance_id"] = instance.instance_id;
        row["task"] = std::string(task_name(instance.task));
        row["recording_id"] = instance.recording_id;
        row["question"] = instance.question;
        if (instance.window)
            row["window"] = ordered_json{{"start", instance.window->start},
                                         {"end", instance.window->end}};
        row["ground_truth"] = instance.ground_truth;
        output << row.dump() << "\n";
    }
}

std::vector<TaskInstance> load_instances(const fs::path& path) {
    std::ifstream input(path, std::ios::binary);
    if (!input) throw IngestError("cannot open " + path.string());
    std::vector<TaskInstance> instances;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(input, line)) {
        ++line_number;
        if (line.empty()) continue;
        const std::string where = path.filename().string() + ":" + std::to_string(line_number);
        json row = json::parse(line, nullptr, false);
        if (row.is_discarded() || !row.is_object())
            throw IngestError(where + ": malformed JSON");
        TaskInstance instance;
        try {
            instance.instance_id = row.at("instance_id").get<std::string>();
            const auto task = parse_task(row.at("task").get<std::string>());
            if (!task) throw IngestError(where + ": unknown task");
            instance.task = *task;
            instance.recording_id = row.at("recording_id").get<std::string>();
            instance.question = row.at("question").get<std::string>();
            if (row.contains("window"))
                instance.window = TimeSpan{row.at("window").at("start").get<double>(),
                                           row.at("window").at("end").get<double>()};
            instance.ground_truth = row.at("ground_truth");
        } catch (const json::exception& e) {
            throw IngestError(where + ": " + e.what());
        }
        instances.push_back(std::move(instance));
    }
    return instances;
}

}  // namespace aq
