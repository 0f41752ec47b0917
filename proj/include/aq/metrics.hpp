#pragma once

#include "aq/timespan.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace aq {

// A diarization segment or a detected sound event, depending on context.
struct LabeledSpan {
    std::string label;
    TimeSpan span;

    bool operator==(const LabeledSpan&) const = default;
};

// LCS-based F-score over lowercased whitespace tokens. Empty-vs-nonempty is
// 0; empty-vs-empty is 1.
double rouge_l(std::string_view candidate, std::string_view reference);

// Diarization error rate as a percentage: (missed + false alarm + confusion
// speech time) / reference speech time * 100, after the optimal one-to-one
// relabeling of hypothesis speakers. No forgiveness collar; overlapped speech
// is scored. Throws Error when the reference contains no speech.
double der(const std::vector<LabeledSpan>& reference, const std::vector<LabeledSpan>& hypothesis);

// Optimal assignment used by der's speaker mapping; exposed so tests can
// check it against exhaustive permutation search. cost is rectangular
// (rows x cols); returns the column picked per row (cols >= rows required),
// minimizing total cost.
std::vector<std::size_t> min_cost_assignment(const std::vector<std::vector<double>>& cost);

// Event-detection F1 with one-to-one same-label matching, pairing greedily by
// ascending onset under |onset difference| <= tolerance.
double event_f1(const std::vector<LabeledSpan>& reference,
                const std::vector<LabeledSpan>& hypothesis, double tolerance = 5.0);

// Spearman rank correlation between two permutations of 1..n (n >= 2):
// 1 - 6*sum(d^2) / (n(n^2-1)). Throws Error on length mismatch or
// non-permutation input.
double spearman_rho(const std::vector<int>& truth_order, const std::vector<int>& predicted_order);

// Unweighted mean of per-label F1 over label_set; reference[i]/predicted[i]
// are the label sets of instance i. Labels in label_set that occur in neither
// reference nor prediction are excluded from the mean (their F1 is
// undefined). Throws Error on an empty label_set or labels outside it.
double macro_f1(const std::vector<std::vector<std::string>>& reference,
                const std::vector<std::vector<std::string>>& predicted,
                const std::vector<std::string>& label_set);

// Maps a raw metric onto 0..100 against a topline value: with
// t(x) = 100-x for error-based metrics and t(x) = x otherwise, the score is
// 100 * t(raw) / t(topline), clamped to [0,100]. Throws Error when
// t(topline) <= 0.
double normalize_score(double raw, double topline, bool error_based);

}  // namespace aq
