#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aq/metrics.hpp"
#include "aq/rng.hpp"
#include "support/testing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

using namespace aq;

namespace {

std::vector<LabeledSpan> segments(std::initializer_list<LabeledSpan> list) {
    return list;
}

// Random diarization-like segment set over a short timeline.
std::vector<LabeledSpan> random_segments(SeededRng& rng, std::int64_t max_labels) {
    std::vector<LabeledSpan> out;
    const auto n = rng.next_int(1, 8);
    double cursor = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        cursor += rng.next_real(0.0, 3.0);
        const double len = rng.next_real(0.5, 4.0);
        out.push_back({"S" + std::to_string(rng.next_int(0, max_labels - 1)),
                       {cursor, cursor + len}});
        cursor += len * rng.next_real(0.0, 1.0);  // sometimes overlap the next one
    }
    return out;
}

}  // namespace

TEST_CASE("text overlap scores reward the longest common subsequence") {
    CHECK(rouge_l("the cat sat on the mat", "the cat sat on the mat") == 1.0);
    CHECK(rouge_l("", "") == 1.0);
    CHECK(rouge_l("something", "") == 0.0);
    CHECK(rouge_l("", "reference text") == 0.0);
    CHECK(rouge_l("alpha beta", "gamma delta") == 0.0);

    // LCS "the cat" = 2 tokens; P = 2/3, R = 2/2 -> F = 0.8.
    CHECK(rouge_l("the cat meowed", "the cat") == doctest::Approx(0.8));

    // Case-insensitive tokenization.
    CHECK(rouge_l("The Cat", "the cat") == 1.0);

    // Order matters: scrambled tokens lose subsequence length.
    CHECK(rouge_l("mat the on sat cat the", "the cat sat on the mat") < 1.0);
}

TEST_CASE("diarization error is zero for a perfect hypothesis") {
    const auto ref = segments({{"A", {0.0, 10.0}}, {"B", {10.0, 20.0}}});
    CHECK(der(ref, ref) == 0.0);
}

TEST_CASE("diarization error is label-permutation invariant") {
    const auto ref = segments({{"A", {0.0, 10.0}}, {"B", {10.0, 20.0}}});
    const auto swapped = segments({{"X", {0.0, 10.0}}, {"Y", {10.0, 20.0}}});
    CHECK(der(ref, swapped) == 0.0);
}

TEST_CASE("missed and inserted speech are both charged") {
    const auto ref = segments({{"A", {0.0, 10.0}}});
    // Half the reference missed: 5 s error over 10 s of speech.
    CHECK(der(ref, segments({{"A", {0.0, 5.0}}})) == doctest::Approx(50.0));
    // Insertion outside reference speech.
    CHECK(der(ref, segments({{"A", {0.0, 10.0}}, {"A", {20.0, 25.0}}})) ==
          doctest::Approx(50.0));
    // Empty hypothesis misses everything.
    CHECK(der(ref, {}) == doctest::Approx(100.0));
}

TEST_CASE("overlapped reference speech is scored, not collapsed") {
    // Two speakers talking at once for the whole span: a single-speaker
    // hypothesis can recover at most half the speech.
    const auto ref = segments({{"A", {0.0, 10.0}}, {"B", {0.0, 10.0}}});
    const auto hyp = segments({{"A", {0.0, 10.0}}});
    CHECK(der(ref, hyp) == doctest::Approx(50.0));
}

TEST_CASE("a reference without speech is rejected") {
    CHECK_THROWS_AS(der({}, segments({{"A", {0.0, 1.0}}})), Error);
}

TEST_CASE("diarization error matches the exhaustive-mapping oracle") {
    SeededRng rng(301);
    for (int i = 0; i < 200; ++i) {
        const auto ref = random_segments(rng, rng.next_int(1, 4));
        const auto hyp = rng.next_bool(0.15) ? std::vector<LabeledSpan>{}
                                             : random_segments(rng, rng.next_int(1, 4));
        const double got = der(ref, hyp);
        const double want = aqtest::brute_force_der(ref, hyp);
        CHECK(got == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("the assignment solver matches exhaustive search") {
    SeededRng rng(302);
    for (int i = 0; i < 300; ++i) {
        const std::size_t rows = static_cast<std::size_t>(rng.next_int(1, 6));
        const std::size_t cols = rows + static_cast<std::size_t>(rng.next_int(0, 3));
        std::vector<std::vector<double>> cost(rows, std::vector<double>(cols));
        for (auto& row : cost)
            for (double& cell : row) cell = rng.next_real(-10.0, 10.0);

        const auto assignment = min_cost_assignment(cost);
        double total = 0.0;
        std::vector<bool> used(cols, false);
        REQUIRE(assignment.size() == rows);
        for (std::size_t r = 0; r < rows; ++r) {
            REQUIRE(assignment[r] < cols);
            CHECK_FALSE(used[assignment[r]]);  // one column per row
            used[assignment[r]] = true;
            total += cost[r][assignment[r]];
        }
        CHECK(total == doctest::Approx(aqtest::brute_force_assignment(cost)).epsilon(1e-9));
    }
    CHECK_THROWS_AS(min_cost_assignment({{1.0, 2.0}, {3.0}}), Error);
    CHECK_THROWS_AS(min_cost_assignment({{1.0}, {2.0}}), Error);  // rows > cols
}

TEST_CASE("event detection pairs predictions within the onset tolerance") {
    const std::vector<LabeledSpan> ref = {{"Music", {100.0, 104.0}}};
    CHECK(event_f1(ref, {{"Music", {103.0, 107.0}}}) == 1.0);   // |delta| = 3 <= 5
    CHECK(event_f1(ref, {{"Music", {106.0, 110.0}}}) == 0.0);   // |delta| = 6
    CHECK(event_f1(ref, {{"Music", {105.0, 109.0}}}) == 1.0);   // boundary included
    CHECK(event_f1(ref, {{"Siren", {100.0, 104.0}}}) == 0.0);   // labels must agree
    CHECK(event_f1(ref, {{"Music", {103.0, 107.0}}}, 1.0) == 0.0);  // tighter tolerance
    CHECK(event_f1({}, {}) == 1.0);
    CHECK(event_f1(ref, {}) == 0.0);
}

TEST_CASE("each prediction matches at most one reference event") {
    const std::vector<LabeledSpan> ref = {{"Music", {100.0, 101.0}},
                                          {"Music", {102.0, 103.0}}};
    const std::vector<LabeledSpan> hyp = {{"Music", {101.0, 102.0}}};
    // One true positive, one miss: P = 1, R = 0.5 -> F = 2/3.
    CHECK(event_f1(ref, hyp) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("greedy event matching is optimal when onsets are well separated") {
    SeededRng rng(303);
    const double tolerance = 5.0;
    for (int i = 0; i < 200; ++i) {
        // Same-label onsets at least 2x tolerance apart, like the generated
        // corpora guarantee.
        std::vector<LabeledSpan> ref;
        std::vector<LabeledSpan> hyp;
        for (const char* label : {"a", "b"}) {
            double cursor = rng.next_real(0.0, 20.0);
            const int n = rng.next_int(0, 4);
            for (int k = 0; k < n; ++k) {
                ref.push_back({label, {cursor, cursor + 2.0}});
                if (rng.next_bool(0.7)) {
                    const double jitter = rng.next_real(-4.9, 4.9);
                    hyp.push_back({label, {cursor + jitter, cursor + jitter + 2.0}});
                }
                if (rng.next_bool(0.2))
                    hyp.push_back({label, {cursor + 30.0, cursor + 31.0}});
                cursor += rng.next_real(2.0 * tolerance + 0.2, 40.0);
            }
        }
        rng.shuffle(hyp);
        const std::size_t optimal = aqtest::optimal_event_matches(ref, hyp, tolerance);
        const double p = hyp.empty() ? 0.0 : static_cast<double>(optimal) / hyp.size();
        const double r = ref.empty() ? 0.0 : static_cast<double>(optimal) / ref.size();
        const double expected = (ref.empty() && hyp.empty()) ? 1.0
                                : (p + r == 0.0)             ? 0.0
                                                             : 2 * p * r / (p + r);
        CHECK(event_f1(ref, hyp, tolerance) == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("greedy event matching never beats the optimal matching") {
    SeededRng rng(304);
    for (int i = 0; i < 300; ++i) {
        // Dense clusters where greedy can genuinely differ from optimal.
        std::vector<LabeledSpan> ref;
        std::vector<LabeledSpan> hyp;
        const int n = rng.next_int(1, 6);
        for (int k = 0; k < n; ++k) {
            ref.push_back({"x", {rng.next_real(0.0, 20.0), 21.0}});
            if (rng.next_bool(0.8)) hyp.push_back({"x", {rng.next_real(0.0, 20.0), 21.0}});
        }
        const std::size_t optimal = aqtest::optimal_event_matches(ref, hyp, 5.0);
        // Reconstruct the greedy match count from the score.
        const double f1 = event_f1(ref, hyp, 5.0);
        const double denom = static_cast<double>(ref.size() + hyp.size());
        const double greedy_matches = f1 * denom / 2.0;
        CHECK(greedy_matches <= static_cast<double>(optimal) + 1e-9);
    }
}

TEST_CASE("rank correlation is exact on small permutations") {
    CHECK(spearman_rho({1, 2, 3}, {1, 2, 3}) == 1.0);
    CHECK(spearman_rho({1, 2, 3}, {3, 2, 1}) == -1.0);
    CHECK(spearman_rho({1, 2, 3}, {1, 3, 2}) == doctest::Approx(0.5));
    CHECK(spearman_rho({1, 2}, {2, 1}) == -1.0);
    CHECK(spearman_rho({2, 1, 3, 4}, {2, 1, 3, 4}) == 1.0);
}

TEST_CASE("rank correlation validates its inputs") {
    CHECK_THROWS_AS(spearman_rho({1}, {1}), Error);            // needs n >= 2
    CHECK_THROWS_AS(spearman_rho({1, 2}, {1, 2, 3}), Error);   // length mismatch
    CHECK_THROWS_AS(spearman_rho({1, 1, 2}, {1, 2, 3}), Error);  // not a permutation
    CHECK_THROWS_AS(spearman_rho({0, 1, 2}, {1, 2, 3}), Error);  // out of range
}

TEST_CASE("complementing ranks negates the rank correlation") {
    SeededRng rng(305);
    for (int i = 0; i < 100; ++i) {
        const int n = static_cast<int>(rng.next_int(2, 8));
        std::vector<int> truth(static_cast<std::size_t>(n));
        std::vector<int> predicted(static_cast<std::size_t>(n));
        std::iota(truth.begin(), truth.end(), 1);
        std::iota(predicted.begin(), predicted.end(), 1);
        rng.shuffle(truth);
        rng.shuffle(predicted);
        const double rho = spearman_rho(truth, predicted);
        std::vector<int> complemented(predicted.size());
        for (std::size_t k = 0; k < predicted.size(); ++k)
            complemented[k] = n + 1 - predicted[k];
        CHECK(spearman_rho(truth, complemented) == doctest::Approx(-rho).epsilon(1e-12));
        CHECK(spearman_rho(predicted, truth) == doctest::Approx(rho).epsilon(1e-12));
        CHECK(rho >= -1.0);
        CHECK(rho <= 1.0);
    }
}

TEST_CASE("macro F1 averages per-label scores without frequency weighting") {
    using Lists = std::vector<std::vector<std::string>>;
    const std::vector<std::string> labels = {"Happy", "Sad", "Neutral"};
    CHECK(macro_f1(Lists{{"Happy"}, {"Sad"}}, Lists{{"Happy"}, {"Sad"}}, labels) == 1.0);
    // Happy: tp=3 fp=1 -> F1 6/7. Sad: fn=1 -> F1 0. Neutral never occurs.
    CHECK(macro_f1(Lists{{"Happy"}, {"Happy"}, {"Happy"}, {"Sad"}},
                   Lists{{"Happy"}, {"Happy"}, {"Happy"}, {"Happy"}}, labels) ==
          doctest::Approx((6.0 / 7.0 + 0.0) / 2.0));
    CHECK(macro_f1(Lists{{"Happy"}}, Lists{{"Sad"}}, labels) == 0.0);

    // Labels absent from both reference and prediction do not dilute the mean.
    CHECK(macro_f1(Lists{{"Happy"}}, Lists{{"Happy"}}, labels) == 1.0);

    // A failed prediction pools as an empty list and costs recall only.
    CHECK(macro_f1(Lists{{"Happy"}, {"Happy"}}, Lists{{"Happy"}, {}}, labels) ==
          doctest::Approx(2.0 / 3.0));

    // Multi-label rows score per label.
    CHECK(macro_f1(Lists{{"Happy", "Sad"}}, Lists{{"Happy", "Sad"}}, labels) == 1.0);

    CHECK_THROWS_AS(macro_f1(Lists{{"Happy"}}, Lists{{"Happy"}}, {}), Error);
    CHECK_THROWS_AS(macro_f1(Lists{{"Confused"}}, Lists{{"Happy"}}, labels), Error);
    CHECK_THROWS_AS(macro_f1(Lists{{"Happy"}}, Lists{{"Confused"}}, labels), Error);
    CHECK_THROWS_AS(macro_f1(Lists{{"Happy"}}, Lists{{"Happy"}, {"Sad"}}, labels),
                    Error);  // row-count mismatch
}

TEST_CASE("score normalization maps raw metrics onto a 0..100 ladder") {
    CHECK(normalize_score(80.0, 80.0, false) == 100.0);
    CHECK(normalize_score(40.0, 80.0, false) == 50.0);
    CHECK(normalize_score(0.0, 80.0, false) == 0.0);

    // Error-based metrics invert before scaling.
    CHECK(normalize_score(16.16, 10.55, true) == doctest::Approx(93.73).epsilon(0.0001));
    CHECK(normalize_score(10.55, 10.55, true) == doctest::Approx(100.0));
    CHECK(normalize_score(100.0, 10.55, true) == 0.0);

    // Results clamp into [0, 100] even when the raw beats the topline.
    CHECK(normalize_score(90.0, 80.0, false) == 100.0);
    CHECK(normalize_score(120.0, 80.0, true) == 0.0);

    CHECK_THROWS_AS(normalize_score(10.0, 0.0, false), Error);
    CHECK_THROWS_AS(normalize_score(10.0, 100.0, true), Error);
}

TEST_CASE("normalization is monotone in the raw score") {
    SeededRng rng(306);
    for (int i = 0; i < 200; ++i) {
        const double topline = rng.next_real(1.0, 99.0);
        const bool error_based = rng.next_bool(0.5);
        double a = rng.next_real(0.0, 100.0);
        double b = rng.next_real(0.0, 100.0);
        if (a > b) std::swap(a, b);
        const double na = normalize_score(a, topline, error_based);
        const double nb = normalize_score(b, topline, error_based);
        if (error_based) CHECK(na >= nb);  // lower error is better
        else CHECK(na <= nb);
    }
}
