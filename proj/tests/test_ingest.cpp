#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aq/ingest.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace aq;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("aq_ingest_test_" + std::to_string(
                    std::chrono::steady_clock::now().time_since_epoch().count()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

std::string read(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

// One source, two turns, one event; spans on the millisecond grid.
ManifestEntry write_single_source(const fs::path& dir) {
    write(dir / "rec.rttm",
          "SPEAKER rec 1 2.000 3.500 <NA> <NA> SPEAKER_00 <NA> <NA>\n"
          "SPEAKER rec 1 7.250 2.000 <NA> <NA> SPEAKER_01 <NA> <NA>\n");
    write(dir / "transcript.jsonl",
          R"({"start": 2.0, "end": 5.5, "text": "hello world"})" "\n"
          R"({"start": 7.25, "end": 9.25, "text": "goodbye"})" "\n");
    write(dir / "emotion.jsonl",
          R"({"start": 2.0, "end": 5.5, "labels": [{"label": "Neutral", "score": 0.8}, {"label": "Happy", "score": 0.2}]})" "\n"
          R"({"start": 7.25, "end": 9.25, "labels": [{"label": "Sad", "score": 0.6}]})" "\n");
    write(dir / "events.jsonl",
          R"({"start": 4.0, "end": 6.0, "labels": [{"label": "Music", "score": 0.9}]})" "\n");
    ManifestEntry entry;
    entry.recording_id = "rec";
    entry.duration = 20.0;
    entry.rttm_path = "rec.rttm";
    entry.transcript_path = "transcript.jsonl";
    entry.emotion_path = "emotion.jsonl";
    entry.events_path = "events.jsonl";
    return entry;
}

}  // namespace

TEST_CASE("RTTM parsing keeps SPEAKER lines and skips other record types") {
    std::istringstream input(
        "SPEAKER fileA 1 0.500 1.250 <NA> <NA> SPEAKER_00 <NA> <NA>\n"
        "LEXEME fileA 1 0.500 0.100 <NA> <NA> word <NA> <NA>\n"
        "\n"
        "SPEAKER fileB 1 3.000 2.000 <NA> <NA> SPEAKER_01 <NA> <NA>\n");
    const auto entries = parse_rttm_entries(input, "test.rttm");
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].file_id == "fileA");
    CHECK(entries[0].span == TimeSpan{0.5, 1.75});
    CHECK(entries[0].label == "SPEAKER_00");
    CHECK(entries[1].file_id == "fileB");
    CHECK(entries[1].label == "SPEAKER_01");
}

TEST_CASE("RTTM errors carry the origin and line number") {
    std::istringstream bad_float("SPEAKER f 1 abc 1.0 <NA> <NA> S <NA> <NA>\n");
    CHECK_THROWS_WITH_AS(parse_rttm_entries(bad_float, "x.rttm"),
                         doctest::Contains("x.rttm:1"), IngestError);

    std::istringstream negative("SPEAKER f 1 5.0 -1.0 <NA> <NA> S <NA> <NA>\n");
    CHECK_THROWS_WITH_AS(parse_rttm_entries(negative, "x.rttm"),
                         doctest::Contains("negative duration"), IngestError);

    std::istringstream truncated("SPEAKER f 1 5.0\n");
    CHECK_THROWS_WITH_AS(parse_rttm_entries(truncated, "x.rttm"),
                         doctest::Contains("need at least 8"), IngestError);
}

TEST_CASE("manifests round-trip through save and load") {
    TempDir tmp;
    ManifestEntry a;
    a.recording_id = "rec000";
    a.duration = 600.0;
    a.rttm_path = "metadata/rec000.rttm";
    a.transcript_path = "metadata/rec000.transcript.jsonl";
    a.sources = {{"rec000_src00", 0.0, 600.0}};
    ManifestEntry b;
    b.recording_id = "rec001";
    b.duration = 300.0;
    b.rttm_path = "rec001.rttm";

    save_manifest({a, b}, tmp.path / "manifest.json");
    const auto loaded = load_manifest(tmp.path / "manifest.json");
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0] == a);
    CHECK(loaded[1] == b);
}

TEST_CASE("manifest validation rejects malformed documents") {
    TempDir tmp;
    const fs::path path = tmp.path / "manifest.json";

    write(path, "{\"recordings\": [{\"recording_id\": \"r\", \"duration\": 10, "
                "\"rttm\": \"a.rttm\", \"codec\": \"flac\"}]}");
    CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("unknown key"), IngestError);

    write(path, "{\"recordings\": [{\"recording_id\": \"r\", \"duration\": 10, \"rttm\": \"a\"},"
                "{\"recording_id\": \"r\", \"duration\": 10, \"rttm\": \"a\"}]}");
    CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("duplicate recording id"),
                         IngestError);

    write(path, "{\"recordings\": [{\"recording_id\": \"r\", \"duration\": -10, \"rttm\": \"a\"}]}");
    CHECK_THROWS_AS(load_manifest(path), IngestError);

    write(path, "not json");
    CHECK_THROWS_AS(load_manifest(path), ParseError);
}

TEST_CASE("a single-source recording builds with diarization-keyed streams") {
    TempDir tmp;
    const ManifestEntry entry = write_single_source(tmp.path);
    const RecordingDatabase db = build_database(entry, tmp.path);

    CHECK(db.recording_id() == "rec");
    REQUIRE(db.records(StreamKind::speaker).size() == 2);
    CHECK(db.records(StreamKind::speaker)[0].span == TimeSpan{2.0, 5.5});
    CHECK(db.records(StreamKind::speaker)[1].span == TimeSpan{7.25, 9.25});
    CHECK(db.records(StreamKind::transcript)[0].text() == "hello world");
    // Label lists arrive sorted by descending score.
    CHECK(db.records(StreamKind::emotion)[0].labels()[0].label == "Neutral");
    REQUIRE(db.records(StreamKind::sound_event).size() == 1);
    CHECK(db.records(StreamKind::sound_event)[0].span == TimeSpan{4.0, 6.0});
}

TEST_CASE("transcript rows must land exactly on a diarization span") {
    TempDir tmp;
    ManifestEntry entry = write_single_source(tmp.path);
    write(tmp.path / "transcript.jsonl",
          R"({"start": 2.0, "end": 5.4, "text": "off grid"})" "\n");
    CHECK_THROWS_WITH_AS(build_database(entry, tmp.path),
                         doctest::Contains("no matching diarization span"), IngestError);
}

TEST_CASE("metadata row errors carry file and line") {
    TempDir tmp;
    ManifestEntry entry = write_single_source(tmp.path);
    write(tmp.path / "transcript.jsonl",
          R"({"start": 2.0, "end": 5.5, "text": "ok"})" "\n"
          "{broken\n");
    CHECK_THROWS_WITH_AS(build_database(entry, tmp.path),
                         doctest::Contains("transcript.jsonl:2"), IngestError);

    write(tmp.path / "transcript.jsonl",
          R"({"start": 2.0, "end": 5.5, "text": "ok", "volume": 3})" "\n");
    CHECK_THROWS_WITH_AS(build_database(entry, tmp.path),
                         doctest::Contains("unknown key 'volume'"), IngestError);

    write(tmp.path / "transcript.jsonl", R"({"start": 2.0, "end": 5.5})" "\n");
    CHECK_THROWS_WITH_AS(build_database(entry, tmp.path),
                         doctest::Contains("needs text or labels"), IngestError);
}

TEST_CASE("event rows must carry labels, not text") {
    TempDir tmp;
    ManifestEntry entry = write_single_source(tmp.path);
    write(tmp.path / "events.jsonl",
          R"({"start": 1.0, "end": 2.0, "text": "oops"})" "\n");
    CHECK_THROWS_WITH_AS(build_database(entry, tmp.path),
                         doctest::Contains("event row needs labels"), IngestError);
}

TEST_CASE("same-speaker overlap is a warning, not an error") {
    TempDir tmp;
    ManifestEntry entry = write_single_source(tmp.path);
    write(tmp.path / "rec.rttm",
          "SPEAKER rec 1 2.000 3.500 <NA> <NA> SPEAKER_00 <NA> <NA>\n"
          "SPEAKER rec 1 7.250 2.000 <NA> <NA> SPEAKER_01 <NA> <NA>\n"
          "SPEAKER rec 1 3.000 1.000 <NA> <NA> SPEAKER_00 <NA> <NA>\n");
    // The extra span breaks the shared-boundary match with the transcript, so
    // drop the aligned streams for this check.
    entry.transcript_path.clear();
    entry.emotion_path.clear();

    std::vector<std::string> warnings;
    const RecordingDatabase db = build_database(entry, tmp.path, &warnings);
    CHECK(db.records(StreamKind::speaker).size() == 3);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("overlaps itself") != std::string::npos);
}

TEST_CASE("concatenated recordings apply per-source offsets everywhere") {
    TempDir tmp;
    write(tmp.path / "rec.rttm",
          "SPEAKER src00 1 1.000 2.000 <NA> <NA> SPEAKER_00 <NA> <NA>\n"
          "SPEAKER src01 1 1.500 1.000 <NA> <NA> SPEAKER_01 <NA> <NA>\n");
    write(tmp.path / "transcript.jsonl",
          R"({"start": 1.0, "end": 3.0, "text": "first source", "source": "src00"})" "\n"
          R"({"start": 1.5, "end": 2.5, "text": "second source", "source": "src01"})" "\n");
    write(tmp.path / "events.jsonl",
          R"({"start": 0.5, "end": 1.5, "labels": [{"label": "Music", "score": 0.9}], "source": "src01"})" "\n");
    ManifestEntry entry;
    entry.recording_id = "rec";
    entry.duration = 20.0;
    entry.rttm_path = "rec.rttm";
    entry.transcript_path = "transcript.jsonl";
    entry.events_path = "events.jsonl";
    entry.sources = {{"src00", 0.0, 10.0}, {"src01", 10.0, 10.0}};

    const RecordingDatabase db = build_database(entry, tmp.path);
    const auto& speakers = db.records(StreamKind::speaker);
    REQUIRE(speakers.size() == 2);
    CHECK(speakers[0].span == TimeSpan{1.0, 3.0});
    CHECK(speakers[1].span == TimeSpan{11.5, 12.5});  // 10 s offset applied
    CHECK(db.records(StreamKind::transcript)[1].text() == "second source");
    CHECK(db.records(StreamKind::sound_event)[0].span == TimeSpan{10.5, 11.5});

    SUBCASE("rows without a source id are rejected") {
        write(tmp.path / "transcript.jsonl",
              R"({"start": 1.0, "end": 3.0, "text": "first source"})" "\n");
        CHECK_THROWS_WITH_AS(build_database(entry, tmp.path),
                             doctest::Contains("requires a source id"), IngestError);
    }
    SUBCASE("unknown source ids are rejected") {
        write(tmp.path / "transcript.jsonl",
              R"({"start": 1.0, "end": 3.0, "text": "x", "source": "src99"})" "\n");
        CHECK_THROWS_WITH_AS(build_database(entry, tmp.path),
                             doctest::Contains("unknown source id"), IngestError);
    }
}

TEST_CASE("single-source rows must not name a source") {
    TempDir tmp;
    ManifestEntry entry = write_single_source(tmp.path);
    write(tmp.path / "transcript.jsonl",
          R"({"start": 2.0, "end": 5.5, "text": "x", "source": "rec"})" "\n");
    CHECK_THROWS_WITH_AS(build_database(entry, tmp.path),
                         doctest::Contains("lists no sources"), IngestError);
}

TEST_CASE("manifest source lists are validated") {
    TempDir tmp;
    const fs::path path = tmp.path / "manifest.json";
    const auto manifest_with_sources = [&](const std::string& sources) {
        write(path, "{\"recordings\": [{\"recording_id\": \"r\", \"duration\": 20, "
                    "\"rttm\": \"a.rttm\", \"sources\": " + sources + "}]}");
    };

    manifest_with_sources(R"([{"source_id": "a", "offset": 0, "duration": 10},
                              {"source_id": "a", "offset": 10, "duration": 10}])");
    CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("duplicate source id"),
                         IngestError);

    manifest_with_sources(R"([{"source_id": "a", "offset": 10, "duration": 10},
                              {"source_id": "b", "offset": 0, "duration": 10}])");
    CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("non-decreasing"), IngestError);

    manifest_with_sources(R"([{"source_id": "a", "offset": 0, "duration": -1}])");
    CHECK_THROWS_AS(load_manifest(path), IngestError);
}

TEST_CASE("databases survive a save/load round trip byte-deterministically") {
    TempDir tmp;
    const ManifestEntry entry = write_single_source(tmp.path);
    const RecordingDatabase db = build_database(entry, tmp.path);

    const fs::path out1 = tmp.path / "db1";
    const fs::path out2 = tmp.path / "db2";
    save_database(db, out1);
    save_database(db, out2);

    const RecordingDatabase reloaded = load_database(out1);
    CHECK(reloaded.recording_id() == db.recording_id());
    CHECK(reloaded.duration() == db.duration());
    for (StreamKind kind : kAllStreams) {
        REQUIRE(reloaded.records(kind).size() == db.records(kind).size());
        for (std::size_t i = 0; i < db.records(kind).size(); ++i)
            CHECK(reloaded.records(kind)[i] == db.records(kind)[i]);
    }

    for (const auto& file : fs::directory_iterator(out1)) {
        const fs::path other = out2 / file.path().filename();
        REQUIRE(fs::exists(other));
        CHECK(read(file.path()) == read(other));
    }
}

TEST_CASE("loading a database from a missing or damaged directory fails cleanly") {
    TempDir tmp;
    CHECK_THROWS_AS(load_database(tmp.path / "nowhere"), IngestError);

    const ManifestEntry entry = write_single_source(tmp.path);
    save_database(build_database(entry, tmp.path), tmp.path / "db");
    write(tmp.path / "db" / "meta.json", "{broken");
    CHECK_THROWS_AS(load_database(tmp.path / "db"), IngestError);
}
