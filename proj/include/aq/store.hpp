#pragma once

#include "aq/errors.hpp"
#include "aq/predicate.hpp"
#include "aq/timespan.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace aq {

// The four modality streams. transcript, speaker and emotion share the
// diarization-defined span boundaries; sound_event runs at its own resolution.
enum class StreamKind { transcript, speaker, emotion, sound_event };

inline constexpr std::array<StreamKind, 4> kAllStreams = {
    StreamKind::transcript, StreamKind::speaker, StreamKind::emotion, StreamKind::sound_event};

std::string_view stream_name(StreamKind kind);

// Accepts the canonical names plus the legacy "transcription" alias.
std::optional<StreamKind> parse_stream_name(std::string_view name);

struct LabelScore {
    std::string label;
    double score = 0.0;
    bool operator==(const LabelScore&) const = default;
};

struct Utterance {
    std::string text;
    bool operator==(const Utterance&) const = default;
};
struct SpeakerTag {
    std::string label;
    bool operator==(const SpeakerTag&) const = default;
};
using LabelList = std::vector<LabelScore>;

// One time-span observation in a modality stream.
struct Record {
    TimeSpan span;
    std::variant<Utterance, SpeakerTag, LabelList> payload;

    static Record utterance(TimeSpan span, std::string text);
    static Record speaker(TimeSpan span, std::string label);
    // Labels are sorted by descending score on construction; ties keep the
    // given order. Scores outside [0, 1] and empty labels are rejected.
    static Record labeled(TimeSpan span, LabelList labels);

    const std::string& text() const { return std::get<Utterance>(payload).text; }
    const std::string& speaker_label() const { return std::get<SpeakerTag>(payload).label; }
    const LabelList& labels() const { return std::get<LabelList>(payload); }

    bool payload_matches(StreamKind kind) const;

    bool operator==(const Record&) const = default;
};

// Time-aligned per-recording database over the four modality streams.
// Write path: insert_record() then finalize(); afterwards the database is
// immutable and safe for concurrent readers.
class RecordingDatabase {
public:
    RecordingDatabase(std::string recording_id, double duration_seconds);

    const std::string& recording_id() const { return recording_id_; }
    double duration() const { return duration_; }
    bool finalized() const { return finalized_; }

    // Appends one record; spans are rounded onto the 1 ms grid here.
    void insert_record(StreamKind kind, Record record);

    // Sorts every stream by (start, end), checks the shared-boundary
    // invariant across the populated speech-aligned streams, and freezes
    // the database. An empty stream means the modality is absent and is
    // exempt from the boundary check.
    void finalize();

    const std::vector<Record>& records(StreamKind kind) const;

    // Records satisfying `predicate`, in span order.
    std::vector<Record> scan(StreamKind kind, const FilterPredicate& predicate) const;

    // Records whose span intersects [anchor.start - tau, anchor.end + tau],
    // closed interval: touching endpoints count. tau must be >= 0.
    std::vector<Record> overlap_candidates(StreamKind kind, const TimeSpan& anchor,
                                           double tau) const;

private:
    const std::vector<Record>& stream(StreamKind kind) const;

    std::string recording_id_;
    double duration_;
    bool finalized_ = false;
    std::array<std::vector<Record>, 4> streams_;
};

}  // namespace aq
