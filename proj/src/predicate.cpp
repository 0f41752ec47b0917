#include "aq/predicate.hpp"

#include "aq/store.hpp"

#include <algorithm>
#include <cctype>

namespace aq {

std::string to_lower_ascii(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return true;
    if (needle.size() > haystack.size()) return false;
    const auto eq = [](unsigned char a, unsigned char b) {
        return std::tolower(a) == std::tolower(b);
    };
    const auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(),
                                [&](char a, char b) {
                                    return eq(static_cast<unsigned char>(a),
                                              static_cast<unsigned char>(b));
                                });
    return it != haystack.end();
}

namespace {

bool label_in_matches(const LabelIn& filter, StreamKind kind, const Record& record) {
    if (kind != StreamKind::emotion && kind != StreamKind::sound_event)
        throw StoreError("label filter applied to stream " + std::string(stream_name(kind)));
    const LabelList& labels = record.labels();
    if (labels.empty()) return false;
    const auto admits = [&](const LabelScore& ls) {
        if (ls.score < filter.score_min) return false;
        if (filter.labels.empty()) return true;
        return std::find(filter.labels.begin(), filter.labels.end(), ls.label) !=
               filter.labels.end();
    };
    if (kind == StreamKind::emotion) {
        // Emotion is scored on its dominant label only.
        return admits(labels.front());
    }
    return std::any_of(labels.begin(), labels.end(), admits);
}

}  // namespace

bool matches(const AtomicPredicate& predicate, StreamKind kind, const Record& record) {
    if (const auto* kw = std::get_if<KeywordFilter>(&predicate)) {
        if (kind != StreamKind::transcript)
            throw StoreError("keyword filter applied to stream " +
                             std::string(stream_name(kind)));
        return contains_ci(record.text(), kw->phrase);
    }
    if (const auto* sp = std::get_if<SpeakerEquals>(&predicate)) {
        if (kind != StreamKind::speaker)
            throw StoreError("speaker filter applied to stream " +
                             std::string(stream_name(kind)));
        return record.speaker_label() == sp->label;
    }
    if (const auto* li = std::get_if<LabelIn>(&predicate)) {
        return label_in_matches(*li, kind, record);
    }
    const auto& wo = std::get<WindowOverlap>(predicate);
    return record.span.overlaps(wo.window);
}

bool matches(const FilterPredicate& predicate, StreamKind kind, const Record& record) {
    if (const auto* conj = std::get_if<Conjunction>(&predicate)) {
        if (conj->terms.empty()) throw StoreError("empty conjunction");
        return std::all_of(conj->terms.begin(), conj->terms.end(), [&](const AtomicPredicate& t) {
            return matches(t, kind, record);
        });
    }
    if (const auto* kw = std::get_if<KeywordFilter>(&predicate))
        return matches(AtomicPredicate{*kw}, kind, record);
    if (const auto* sp = std::get_if<SpeakerEquals>(&predicate))
        return matches(AtomicPredicate{*sp}, kind, record);
    if (const auto* li = std::get_if<LabelIn>(&predicate))
        return matches(AtomicPredicate{*li}, kind, record);
    return matches(AtomicPredicate{std::get<WindowOverlap>(predicate)}, kind, record);
}

}  // namespace aq
