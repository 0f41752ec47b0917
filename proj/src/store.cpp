#include "aq/store.hpp"

#include <algorithm>
#include <utility>

namespace aq {

namespace {

std::size_t index_of(StreamKind kind) {
    return static_cast<std::size_t>(kind);
}

void check_labels(const LabelList& labels) {
    for (const auto& ls : labels) {
        if (ls.label.empty()) throw StoreError("label-score pair has an empty label");
        if (!(ls.score >= 0.0 && ls.score <= 1.0))
            throw StoreError("label score " + format_number(ls.score) + " outside [0, 1]");
    }
}

}  // namespace

std::string_view stream_name(StreamKind kind) {
    switch (kind) {
        case StreamKind::transcript: return "transcript";
        case StreamKind::speaker: return "speaker";
        case StreamKind::emotion: return "emotion";
        case StreamKind::sound_event: return "sound_event";
    }
    return "?";
}

std::optional<StreamKind> parse_stream_name(std::string_view name) {
    if (name == "transcript" || name == "transcription") return StreamKind::transcript;
    if (name == "speaker") return StreamKind::speaker;
    if (name == "emotion") return StreamKind::emotion;
    if (name == "sound_event") return StreamKind::sound_event;
    return std::nullopt;
}

Record Record::utterance(TimeSpan span, std::string text) {
    return Record{span, Utterance{std::move(text)}};
}

Record Record::speaker(TimeSpan span, std::string label) {
    if (label.empty()) throw StoreError("speaker record has an empty label");
    return Record{span, SpeakerTag{std::move(label)}};
}

Record Record::labeled(TimeSpan span, LabelList labels) {
    check_labels(labels);
    std::stable_sort(labels.begin(), labels.end(),
                     [](const LabelScore& a, const LabelScore& b) { return a.score > b.score; });
    return Record{span, std::move(labels)};
}

bool Record::payload_matches(StreamKind kind) const {
    switch (kind) {
        case StreamKind::transcript: return std::holds_alternative<Utterance>(payload);
        case StreamKind::speaker: return std::holds_alternative<SpeakerTag>(payload);
        case StreamKind::emotion:
        case StreamKind::sound_event: return std::holds_alternative<LabelList>(payload);
    }
    return false;
}

RecordingDatabase::RecordingDatabase(std::string recording_id, double duration_seconds)
    : recording_id_(std::move(recording_id)), duration_(duration_seconds) {
    if (recording_id_.empty()) throw StoreError("recording id must not be empty");
    if (!(duration_ > 0.0)) throw StoreError("recording duration must be positive");
}

void RecordingDatabase::insert_record(StreamKind kind, Record record) {
    if (finalized_) throw StoreError("insert after finalize");
    record.span.start = round_ms(record.span.start);
    record.span.end = round_ms(record.span.end);
    if (!record.span.valid())
        throw StoreError("invalid span [" + format_number(record.span.start) + ", " +
                         format_number(record.span.end) + "] in stream " +
                         std::string(stream_name(kind)));
    if (record.span.end > duration_ + 1e-9)
        throw StoreError("span end " + format_number(record.span.end) +
                         " exceeds recording duration " + format_number(duration_));
    if (!record.payload_matches(kind))
        throw StoreError("payload kind does not match stream " + std::string(stream_name(kind)));
    streams_[index_of(kind)].push_back(std::move(record));
}

void RecordingDatabase::finalize() {
    if (finalized_) throw StoreError("finalize called twice");
    for (auto& records : streams_) {
        std::stable_sort(records.begin(), records.end(),
                         [](const Record& a, const Record& b) { return span_less(a.span, b.span); });
    }

    // Shared-boundary invariant: every populated stream among transcript,
    // speaker and emotion must carry exactly the diarization span sequence.
    const std::array<StreamKind, 3> aligned = {StreamKind::transcript, StreamKind::speaker,
                                               StreamKind::emotion};
    const std::vector<Record>* reference = nullptr;
    StreamKind reference_kind = StreamKind::transcript;
    for (StreamKind kind : aligned) {
        const auto& records = streams_[index_of(kind)];
        if (records.empty()) continue;
        if (!reference) {
            reference = &records;
            reference_kind = kind;
            continue;
        }
        const std::size_t n = std::min(reference->size(), records.size());
        for (std::size_t i = 0; i < n; ++i) {
            if ((*reference)[i].span != records[i].span) {
                throw StoreError(
                    "shared-boundary violation: " + std::string(stream_name(reference_kind)) +
                    " span [" + format_number((*reference)[i].span.start) + ", " +
                    format_number((*reference)[i].span.end) + "] vs " +
                    std::string(stream_name(kind)) + " span [" +
                    format_number(records[i].span.start) + ", " +
                    format_number(records[i].span.end) + "] at position " + std::to_string(i));
            }
        }
        if (reference->size() != records.size()) {
            throw StoreError("shared-boundary violation: " +
                             std::string(stream_name(reference_kind)) + " has " +
                             std::to_string(reference->size()) + " spans but " +
                             std::string(stream_name(kind)) + " has " +
                             std::to_string(records.size()));
        }
    }
    finalized_ = true;
}

const std::vector<Record>& RecordingDatabase::stream(StreamKind kind) const {
    return streams_[index_of(kind)];
}

const std::vector<Record>& RecordingDatabase::records(StreamKind kind) const {
    if (!finalized_) throw StoreError("records() before finalize");
    return stream(kind);
}

std::vector<Record> RecordingDatabase::scan(StreamKind kind,
                                            const FilterPredicate& predicate) const {
    if (!finalized_) throw StoreError("scan before finalize");
    std::vector<Record> out;
    for (const Record& record : stream(kind)) {
        if (matches(predicate, kind, record)) out.push_back(record);
    }
    return out;
}

std::vector<Record> RecordingDatabase::overlap_candidates(StreamKind kind, const TimeSpan& anchor,
                                                          double tau) const {
    if (!finalized_) throw StoreError("overlap_candidates before finalize");
    if (tau < 0.0) throw StoreError("tau must be >= 0");
    const TimeSpan widened{anchor.start - tau, anchor.end + tau};
    std::vector<Record> out;
    for (const Record& record : stream(kind)) {
        if (record.span.start > widened.end) break;  // streams are span-sorted
        if (record.span.overlaps(widened)) out.push_back(record);
    }
    return out;
}

}  // namespace aq
