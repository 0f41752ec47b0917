#pragma once

#include "aq/store.hpp"

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

namespace aq {

// One source recording placed inside a concatenated long-form recording.
struct SourceSegment {
    std::string source_id;
    double offset = 0.0;    // seconds from the start of the long-form recording
    double duration = 0.0;  // source length in seconds

    bool operator==(const SourceSegment&) const = default;
};

struct ManifestEntry {
    std::string recording_id;
    double duration = 0.0;
    std::string rttm_path;        // required
    std::string transcript_path;  // optional, "" = absent
    std::string emotion_path;
    std::string events_path;
    // Empty for single-source recordings with global timestamps. When set,
    // every metadata row carries local timestamps plus its source id (RTTM
    // uses the file-id field), and offsets are applied at build time.
    std::vector<SourceSegment> sources;

    bool operator==(const ManifestEntry&) const = default;
};

// Manifest document: {"recordings": [...]}. Relative paths are kept as
// written; build_database resolves them against the manifest directory.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::vector<ManifestEntry>& entries,
                   const std::filesystem::path& path);

struct RttmEntry {
    std::string file_id;
    TimeSpan span;  // [onset, onset + duration]
    std::string label;
};

// SPEAKER lines only; other record types are skipped. Errors carry the
// 1-based line number.
std::vector<RttmEntry> parse_rttm_entries(std::istream& input, const std::string& origin);

// Convenience form over a whole document; file ids are dropped.
std::vector<Record> parse_rttm(const std::string& text);

// Builds and finalizes the database: diarization from RTTM; transcript and
// emotion rows keyed to diarization spans (error when no span matches);
// events loaded at their own resolution; concatenation offsets applied.
// Overlapping identical-speaker spans produce warnings, not errors.
RecordingDatabase build_database(const ManifestEntry& entry,
                                 const std::filesystem::path& base_dir,
                                 std::vector<std::string>* warnings = nullptr);

// Canonical on-disk form: meta.json plus one JSON-lines file per stream.
// Byte-deterministic for a given database.
void save_database(const RecordingDatabase& db, const std::filesystem::path& dir);
RecordingDatabase load_database(const std::filesystem::path& dir);

}  // namespace aq
