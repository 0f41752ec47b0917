#pragma once

#include "aq/timespan.hpp"

#include <string>
#include <variant>
#include <vector>

namespace aq {

struct Record;
enum class StreamKind;

// Case-insensitive substring match on transcript text. A multi-word phrase
// matches as one contiguous substring.
struct KeywordFilter {
    std::string phrase;
    bool operator==(const KeywordFilter&) const = default;
};

// Exact speaker-label equality.
struct SpeakerEquals {
    std::string label;
    bool operator==(const SpeakerEquals&) const = default;
};

// Label/score constraint for the label-score streams. On sound_event any
// stored pair may satisfy it; on emotion only the top-scored label counts.
// An empty label list constrains score only.
struct LabelIn {
    std::vector<std::string> labels;
    double score_min = 0.0;
    bool operator==(const LabelIn&) const = default;
};

// Closed-interval overlap with a time window.
struct WindowOverlap {
    TimeSpan window;
    bool operator==(const WindowOverlap&) const = default;
};

using AtomicPredicate = std::variant<KeywordFilter, SpeakerEquals, LabelIn, WindowOverlap>;

// Conjunction of atoms, the only composite form. Must be non-empty.
struct Conjunction {
    std::vector<AtomicPredicate> terms;
    bool operator==(const Conjunction&) const = default;
};

using FilterPredicate =
    std::variant<KeywordFilter, SpeakerEquals, LabelIn, WindowOverlap, Conjunction>;

// True when `record`, taken from a stream of `kind`, satisfies the predicate.
// Throws StoreError when the predicate references a field the stream lacks.
bool matches(const AtomicPredicate& predicate, StreamKind kind, const Record& record);
bool matches(const FilterPredicate& predicate, StreamKind kind, const Record& record);

// ASCII case-insensitive substring test, shared by predicate evaluation and
// the extractive answer stage.
bool contains_ci(std::string_view haystack, std::string_view needle);
std::string to_lower_ascii(std::string_view text);

}  // namespace aq
