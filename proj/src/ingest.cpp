#include "aq/ingest.hpp"

#include "aq/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace aq {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
    std::ifstream input(path, std::ios::binary);
    if (!input) throw IngestError("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << input.rdbuf();
    return buffer.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream output(path, std::ios::binary | std::ios::trunc);
    if (!output) throw IngestError("cannot write " + path.string());
    output << content;
}

double parse_double_token(const std::string& token, const std::string& where) {
    errno = 0;
    char* end = nullptr;
    const double value = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size() || token.empty() || errno == ERANGE)
        throw IngestError(where + ": malformed number '" + token + "'");
    return value;
}

fs::path resolve(const std::string& path, const fs::path& base_dir) {
    const fs::path p(path);
    return p.is_absolute() ? p : base_dir / p;
}

void parse_manifest_fields(const json& doc, ManifestEntry& entry);

ManifestEntry manifest_entry_from_json(const json& doc) {
    if (!doc.is_object()) throw IngestError("manifest entry must be an object");
    ManifestEntry entry;
    try {
        parse_manifest_fields(doc, entry);
    } catch (const json::exception& e) {
        throw IngestError(std::string("manifest entry: ") + e.what());
    }
    if (entry.recording_id.empty()) throw IngestError("manifest entry missing recording_id");
    if (!(entry.duration > 0.0))
        throw IngestError("recording " + entry.recording_id + " needs a positive duration");
    if (entry.rttm_path.empty())
        throw IngestError("recording " + entry.recording_id + " missing rttm path");

    double previous_offset = 0.0;
    std::set<std::string> ids;
    for (const SourceSegment& segment : entry.sources) {
        if (segment.source_id.empty())
            throw IngestError(entry.recording_id + ": source with empty id");
        if (!ids.insert(segment.source_id).second)
            throw IngestError(entry.recording_id + ": duplicate source id " + segment.source_id);
        if (segment.offset < previous_offset)
            throw IngestError(entry.recording_id + ": source offsets must be non-decreasing");
        if (!(segment.duration > 0.0))
            throw IngestError(entry.recording_id + ": source durations must be positive");
        if (segment.offset + segment.duration > entry.duration + 1e-9)
            throw IngestError(entry.recording_id + ": source " + segment.source_id +
                              " extends past the recording duration");
        previous_offset = segment.offset;
    }
    return entry;
}

void parse_manifest_fields(const json& doc, ManifestEntry& entry) {
    for (const auto& item : doc.items()) {
        const std::string& key = item.key();
        const json& value = item.value();
        if (key == "recording_id") entry.recording_id = value.get<std::string>();
        else if (key == "duration") entry.duration = value.get<double>();
        else if (key == "rttm") entry.rttm_path = value.get<std::string>();
        else if (key == "transcript") entry.transcript_path = value.get<std::string>();
        else if (key == "emotion") entry.emotion_path = value.get<std::string>();
        else if (key == "events") entry.events_path = value.get<std::string>();
        else if (key == "sources") {
            if (!value.is_array()) throw IngestError("sources must be an array");
            for (const json& source : value) {
                SourceSegment segment;
                segment.source_id = source.at("source_id").get<std::string>();
                segment.offset = source.at("offset").get<double>();
                segment.duration = source.at("duration").get<double>();
                entry.sources.push_back(std::move(segment));
            }
        } else {
            throw IngestError("manifest entry has unknown key '" + key + "'");
        }
    }
}

ordered_json manifest_entry_to_json(const ManifestEntry& entry) {
    ordered_json doc;
    doc["recording_id"] = entry.recording_id;
    doc["duration"] = entry.duration;
    doc["rttm"] = entry.rttm_path;
    if (!entry.transcript_path.empty()) doc["transcript"] = entry.transcript_path;
    if (!entry.emotion_path.empty()) doc["emotion"] = entry.emotion_path;
    if (!entry.events_path.empty()) doc["events"] = entry.events_path;
    if (!entry.sources.empty()) {
        ordered_json sources = ordered_json::array();
        for (const SourceSegment& segment : entry.sources)
            sources.push_back(ordered_json{{"source_id", segment.source_id},
                                           {"offset", segment.offset},
                                           {"duration", segment.duration}});
        doc["sources"] = std::move(sources);
    }
    return doc;
}

LabelList labels_from_json(const json& value, const std::string& where) {
    if (!value.is_array()) throw IngestError(where + ": labels must be an array");
    LabelList labels;
    for (const json& pair : value) {
        if (!pair.is_object() || !pair.contains("label") || !pair.contains("score") ||
            pair.size() != 2)
            throw IngestError(where + ": each label entry needs exactly label and score");
        labels.push_back({pair.at("label").get<std::string>(), pair.at("score").get<double>()});
    }
    return labels;
}

struct JsonlRow {
    TimeSpan span;          // local timestamps as written
    std::string source_id;  // empty when absent
    json payload;           // "text" string or "labels" array
    bool is_text = false;
    std::string where;      // file:line for diagnostics
};

std::vector<JsonlRow> load_jsonl_rows(const fs::path& path) {
    const std::string content = read_file(path);
    std::vector<JsonlRow> rows;
    std::istringstream lines(content);
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(lines, line)) {
        ++line_number;
        if (line.empty()) continue;
        const std::string where = path.filename().string() + ":" + std::to_string(line_number);
        json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded()) throw IngestError(where + ": malformed JSON");
        if (!doc.is_object()) throw IngestError(where + ": row must be an object");
        JsonlRow row;
        row.where = where;
        try {
            for (const auto& item : doc.items()) {
                const std::string& key = item.key();
                if (key == "start") row.span.start = item.value().get<double>();
                else if (key == "end") row.span.end = item.value().get<double>();
                else if (key == "source") row.source_id = item.value().get<std::string>();
                else if (key == "text") {
                    if (!item.value().is_string())
                        throw IngestError(where + ": text must be a string");
                    row.payload = item.value();
                    row.is_text = true;
                } else if (key == "labels") {
                    row.payload = item.value();
                } else {
                    throw IngestError(where + ": unknown key '" + key + "'");
                }
            }
        } catch (const json::exception& e) {
            throw IngestError(where + ": " + e.what());
        }
        if (!doc.contains("start") || !doc.contains("end"))
            throw IngestError(where + ": row needs start and end");
        if (row.payload.is_null()) throw IngestError(where + ": row needs text or labels");
        rows.push_back(std::move(row));
    }
    return rows;
}

// Offset lookup for concatenated recordings. Single-source recordings use
// global timestamps directly.
class OffsetMap {
public:
    explicit OffsetMap(const ManifestEntry& entry) {
        for (const SourceSegment& segment : entry.sources)
            offsets_[segment.source_id] = segment.offset;
    }

    bool concatenated() const { return !offsets_.empty(); }

    double offset_for(const std::string& source_id, const std::string& where) const {
        if (!concatenated()) {
            if (!source_id.empty())
                throw IngestError(where + ": source '" + source_id +
                                  "' given but the manifest lists no sources");
            return 0.0;
        }
        if (source_id.empty())
            throw IngestError(where + ": concatenated recording requires a source id per row");
        const auto it = offsets_.find(source_id);
        if (it == offsets_.end())
            throw IngestError(where + ": unknown source id '" + source_id + "'");
        return it->second;
    }

private:
    std::map<std::string, double> offsets_;
};

}  // namespace

std::vector<ManifestEntry> load_manifest(const fs::path& path) {
    const std::string content = read_file(path);
    json doc = json::parse(content, nullptr, false);
    if (doc.is_discarded()) throw ParseError("manifest " + path.string() + ": malformed JSON");
    if (!doc.is_object() || !doc.contains("recordings") || !doc.at("recordings").is_array())
        throw IngestError("manifest " + path.string() + " must contain a recordings array");
    std::vector<ManifestEntry> entries;
    std::set<std::string> ids;
    for (const json& item : doc.at("recordings")) {
        ManifestEntry entry = manifest_entry_from_json(item);
        if (!ids.insert(entry.recording_id).second)
            throw IngestError("duplicate recording id " + entry.recording_id);
        entries.push_back(std::move(entry));
    }
    return entries;
}

void save_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
    ordered_json doc;
    ordered_json recordings = ordered_json::array();
    for (const ManifestEntry& entry : entries) recordings.push_back(manifest_entry_to_json(entry));
    doc["recordings"] = std::move(recordings);
    write_file(path, doc.dump(2) + "\n");
}

std::vector<RttmEntry> parse_rttm_entries(std::istream& input, const std::string& origin) {
    std::vector<RttmEntry> entries;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(input, line)) {
        ++line_number;
        const std::string where = origin + ":" + std::to_string(line_number);
        std::istringstream fields(line);
        std::vector<std::string> tokens;
        std::string token;
        while (fields >> token) tokens.push_back(token);
        if (tokens.empty()) continue;
        if (tokens.front() != "SPEAKER") continue;  // other record types are not ours
        if (tokens.size() < 8)
            throw IngestError(where + ": SPEAKER line has " + std::to_string(tokens.size()) +
                              " fields, need at least 8");
        const double onset = parse_double_token(tokens[3], where);
        const double duration = parse_double_token(tokens[4], where);
        if (onset < 0.0) throw IngestError(where + ": negative onset");
        if (duration < 0.0) throw IngestError(where + ": negative duration");
        entries.push_back({tokens[1], TimeSpan{onset, onset + duration}, tokens[7]});
    }
    return entries;
}

std::vector<Record> parse_rttm(const std::string& text) {
    std::istringstream input(text);
    std::vector<Record> records;
    for (const RttmEntry& entry : parse_rttm_entries(input, "rttm"))
        records.push_back(Record::speaker(entry.span, entry.label));
    return records;
}

RecordingDatabase build_database(const ManifestEntry& entry, const fs::path& base_dir,
                                 std::vector<std::string>* warnings) {
    RecordingDatabase db(entry.recording_id, entry.duration);
    const OffsetMap offsets(entry);

    const fs::path rttm_path = resolve(entry.rttm_path, base_dir);
    const std::string rttm_text = read_file(rttm_path);
    std::istringstream rttm_stream(rttm_text);
    const auto rttm_entries = parse_rttm_entries(rttm_stream, rttm_path.filename().string());

    // Diarization defines the span grid that transcript/emotion rows key to.
    std::set<std::pair<double, double>> diarization_spans;
    struct Placed {
        TimeSpan span;
        std::string label;
    };
    std::vector<Placed> placed;
    for (const RttmEntry& rttm : rttm_entries) {
        const std::string where = rttm_path.filename().string();
        const double offset =
            offsets.offset_for(offsets.concatenated() ? rttm.file_id : "", where);
        const TimeSpan span{round_ms(rttm.span.start + offset), round_ms(rttm.span.end + offset)};
        diarization_spans.insert({span.start, span.end});
        placed.push_back({span, rttm.label});
        try {
            db.insert_record(StreamKind::speaker, Record::speaker(span, rttm.label));
        } catch (const StoreError& e) {
            throw IngestError(where + ": " + e.what());
        }
    }

    // Same speaker overlapping itself is suspicious input, not fatal.
    std::sort(placed.begin(), placed.end(),
              [](const Placed& a, const Placed& b) { return span_less(a.span, b.span); });
    std::map<std::string, double> last_end;
    for (const Placed& p : placed) {
        const auto it = last_end.find(p.label);
        if (it != last_end.end() && p.span.start < it->second) {
            const std::string warning = entry.recording_id + ": speaker " + p.label +
                                        " overlaps itself near " + format_number(p.span.start);
            if (warnings) warnings->push_back(warning);
        }
        last_end[p.label] = std::max(last_end[p.label], p.span.end);
    }

    const auto insert_keyed = [&](const fs::path& path, StreamKind kind) {
        for (const JsonlRow& row : load_jsonl_rows(path)) {
            const double offset = offsets.offset_for(row.source_id, row.where);
            const TimeSpan span{round_ms(row.span.start + offset),
                                round_ms(row.span.end + offset)};
            if (!diarization_spans.contains({span.start, span.end}))
                throw IngestError(row.where + ": span [" + format_number(span.start) + ", " +
                                  format_number(span.end) + "] has no matching diarization span");
            try {
                if (kind == StreamKind::transcript) {
                    if (!row.is_text) throw IngestError(row.where + ": transcript row needs text");
                    db.insert_record(kind,
                                     Record::utterance(span, row.payload.get<std::string>()));
                } else {
                    db.insert_record(
                        kind, Record::labeled(span, labels_from_json(row.payload, row.where)));
                }
            } catch (const StoreError& e) {
                throw IngestError(row.where + ": " + e.what());
            }
        }
    };

    if (!entry.transcript_path.empty())
        insert_keyed(resolve(entry.transcript_path, base_dir), StreamKind::transcript);
    if (!entry.emotion_path.empty())
        insert_keyed(resolve(entry.emotion_path, base_dir), StreamKind::emotion);

    if (!entry.events_path.empty()) {
        const fs::path path = resolve(entry.events_path, base_dir);
        for (const JsonlRow& row : load_jsonl_rows(path)) {
            const double offset = offsets.offset_for(row.source_id, row.where);
            const TimeSpan span{round_ms(row.span.start + offset),
                                round_ms(row.span.end + offset)};
            if (row.is_text) throw IngestError(row.where + ": event row needs labels");
            try {
                db.insert_record(StreamKind::sound_event,
                                 Record::labeled(span, labels_from_json(row.payload, row.where)));
            } catch (const StoreError& e) {
                throw IngestError(row.where + ": " + e.what());
            }
        }
    }

    db.finalize();
    return db;
}

void save_database(const RecordingDatabase& db, const fs::path& dir) {
    fs::create_directories(dir);
    ordered_json meta;
    meta["recording_id"] = db.recording_id();
    meta["duration"] = db.duration();
    write_file(dir / "meta.json", meta.dump(2) + "\n");

    for (StreamKind kind : kAllStreams) {
        std::string content;
        for (const Record& record : db.records(kind)) {
            ordered_json row;
            row["start"] = record.span.start;
            row["end"] = record.span.end;
            switch (kind) {
                case StreamKind::transcript: row["text"] = record.text(); break;
                case StreamKind::speaker: row["label"] = record.speaker_label(); break;
                case StreamKind::emotion:
                case StreamKind::sound_event: {
                    ordered_json labels = ordered_json::array();
                    for (const LabelScore& ls : record.labels())
                        labels.push_back(ordered_json{{"label", ls.label}, {"score", ls.score}});
                    row["labels"] = std::move(labels);
                    break;
                }
            }
            content += row.dump();
            content += '\n';
        }
        write_file(dir / (std::string(stream_name(kind)) + ".jsonl"), content);
    }
}

RecordingDatabase load_database(const fs::path& dir) {
    const std::string meta_text = read_file(dir / "meta.json");
    json meta = json::parse(meta_text, nullptr, false);
    if (meta.is_discarded() || !meta.is_object() || !meta.contains("recording_id") ||
        !meta.contains("duration"))
        throw IngestError(dir.string() + "/meta.json is malformed");
    RecordingDatabase db(meta.at("recording_id").get<std::string>(),
                         meta.at("duration").get<double>());

    for (StreamKind kind : kAllStreams) {
        const fs::path path = dir / (std::string(stream_name(kind)) + ".jsonl");
        const std::string content = read_file(path);
        std::istringstream lines(content);
        std::string line;
        std::size_t line_number = 0;
        while (std::getline(lines, line)) {
            ++line_number;
            if (line.empty()) continue;
            const std::string where = path.filename().string() + ":" +
                                      std::to_string(line_number);
            json row = json::parse(line, nullptr, false);
            if (row.is_discarded() || !row.is_object())
                throw IngestError(where + ": malformed JSON");
            const TimeSpan span{row.at("start").get<double>(), row.at("end").get<double>()};
            try {
                switch (kind) {
                    case StreamKind::transcript:
                        db.insert_record(kind,
                                         Record::utterance(span, row.at("text").get<std::string>()));
                        break;
                    case StreamKind::speaker:
                        db.insert_record(kind,
                                         Record::speaker(span, row.at("label").get<std::string>()));
                        break;
                    case StreamKind::emotion:
                    case StreamKind::sound_event:
                        db.insert_record(kind,
                                         Record::labeled(span, labels_from_json(row.at("labels"),
                                                                                where)));
                        break;
                }
            } catch (const StoreError& e) {
                throw IngestError(where + ": " + e.what());
            } catch (const json::exception& e) {
                throw IngestError(where + ": " + e.what());
            }
        }
    }
    db.finalize();
    return db;
}

}  // namespace aq
