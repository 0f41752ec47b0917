#include "aq/metrics.hpp"

#include "aq/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace aq {

namespace {

std::vector<std::string> lower_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!current.empty()) tokens.push_back(std::move(current)), current.clear();
        } else {
            current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> row(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diagonal = 0;  // row[j-1] from the previous iteration of i
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t above = row[j];
            row[j] = (a[i - 1] == b[j - 1]) ? diagonal + 1 : std::max(row[j], row[j - 1]);
            diagonal = above;
        }
    }
    return row[b.size()];
}

double f_score(double tp, double fp, double fn) {
    const double denom = 2.0 * tp + fp + fn;
    return denom > 0.0 ? 2.0 * tp / denom : 0.0;
}

}  // namespace

double rouge_l(std::string_view candidate, std::string_view reference) {
    const auto cand = lower_tokens(candidate);
    const auto ref = lower_tokens(reference);
    if (cand.empty() && ref.empty()) return 1.0;
    if (cand.empty() || ref.empty()) return 0.0;
    const double lcs = static_cast<double>(lcs_length(cand, ref));
    const double precision = lcs / static_cast<double>(cand.size());
    const double recall = lcs / static_cast<double>(ref.size());
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

std::vector<std::size_t> min_cost_assignment(const std::vector<std::vector<double>>& cost) {
    const std::size_t n = cost.size();
    const std::size_t m = n == 0 ? 0 : cost.front().size();
    if (n == 0) return {};
    if (m < n) throw Error("assignment needs at least as many columns as rows");
    for (const auto& row : cost)
        if (row.size() != m) throw Error("assignment cost matrix is ragged");

    // Jonker-Volgenant style shortest augmenting paths with potentials.
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> match(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, kInf);
        std::vector<bool> used(m + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = match[j0];
            std::size_t j1 = 0;
            double delta = kInf;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (reduced < minv[j]) {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<std::size_t> assignment(n, m);
    for (std::size_t j = 1; j <= m; ++j)
        if (match[j] != 0) assignment[match[j] - 1] = j - 1;
    return assignment;
}

double der(const std::vector<LabeledSpan>& reference, const std::vector<LabeledSpan>& hypothesis) {
    // Elementary regions: between consecutive boundaries the active speaker
    // sets are constant, so scoring is exact.
    std::vector<double> bounds;
    for (const auto& seg : reference) bounds.push_back(seg.span.start), bounds.push_back(seg.span.end);
    for (const auto& seg : hypothesis) bounds.push_back(seg.span.start), bounds.push_back(seg.span.end);
    std::sort(bounds.begin(), bounds.end());
    bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());

    std::vector<std::string> ref_labels, hyp_labels;
    for (const auto& seg : reference) ref_labels.push_back(seg.label);
    for (const auto& seg : hypothesis) hyp_labels.push_back(seg.label);
    std::sort(ref_labels.begin(), ref_labels.end());
    ref_labels.erase(std::unique(ref_labels.begin(), ref_labels.end()), ref_labels.end());
    std::sort(hyp_labels.begin(), hyp_labels.end());
    hyp_labels.erase(std::unique(hyp_labels.begin(), hyp_labels.end()), hyp_labels.end());

    const auto ref_index = [&](const std::string& label) {
        return static_cast<std::size_t>(
            std::lower_bound(ref_labels.begin(), ref_labels.end(), label) - ref_labels.begin());
    };
    const auto hyp_index = [&](const std::string& label) {
        return static_cast<std::size_t>(
            std::lower_bound(hyp_labels.begin(), hyp_labels.end(), label) - hyp_labels.begin());
    };

    struct Region {
        double length = 0.0;
        std::vector<std::size_t> ref, hyp;  // active label indices
    };
    std::vector<Region> regions;
    for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
        Region region;
        region.length = bounds[b + 1] - bounds[b];
        if (region.length <= 0.0) continue;
        const double mid = 0.5 * (bounds[b] + bounds[b + 1]);
        std::set<std::size_t> active_ref, active_hyp;
        for (const auto& seg : reference)
            if (seg.span.start < mid && mid < seg.span.end) active_ref.insert(ref_index(seg.label));
        for (const auto& seg : hypothesis)
            if (seg.span.start < mid && mid < seg.span.end) active_hyp.insert(hyp_index(seg.label));
        if (active_ref.empty() && active_hyp.empty()) continue;
        region.ref.assign(active_ref.begin(), active_ref.end());
        region.hyp.assign(active_hyp.begin(), active_hyp.end());
        regions.push_back(std::move(region));
    }

    double ref_speech = 0.0;
    for (const Region& region : regions)
        ref_speech += region.length * static_cast<double>(region.ref.size());
    if (ref_speech <= 0.0) throw Error("reference contains no speech");

    // Optimal relabeling: maximize time where a reference speaker co-occurs
    // with its mapped hypothesis speaker.
    std::vector<std::vector<double>> overlap(ref_labels.size(),
                                             std::vector<double>(hyp_labels.size(), 0.0));
    for (const Region& region : regions)
        for (std::size_t r : region.ref)
            for (std::size_t h : region.hyp) overlap[r][h] += region.length;

    std::vector<std::size_t> ref_to_hyp(ref_labels.size(), hyp_labels.size());
    if (!ref_labels.empty() && !hyp_labels.empty()) {
        const bool transpose = ref_labels.size() > hyp_labels.size();
        const std::size_t rows = transpose ? hyp_labels.size() : ref_labels.size();
        const std::size_t cols = transpose ? ref_labels.size() : hyp_labels.size();
        std::vector<std::vector<double>> costs(rows, std::vector<double>(cols));
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
                costs[r][c] = -(transpose ? overlap[c][r] : overlap[r][c]);
        const auto assignment = min_cost_assignment(costs);
        for (std::size_t r = 0; r < rows; ++r) {
            if (transpose)
                ref_to_hyp[assignment[r]] = r;
            else
                ref_to_hyp[r] = assignment[r];
        }
    }

    double error_time = 0.0;
    for (const Region& region : regions) {
        std::size_t correct = 0;
        for (std::size_t r : region.ref) {
            const std::size_t mapped = ref_to_hyp[r];
            if (mapped < hyp_labels.size() &&
                std::find(region.hyp.begin(), region.hyp.end(), mapped) != region.hyp.end())
                ++correct;
        }
        const std::size_t worst = std::max(region.ref.size(), region.hyp.size());
        error_time += region.length * static_cast<double>(worst - correct);
    }
    return 100.0 * error_time / ref_speech;
}

double event_f1(const std::vector<LabeledSpan>& reference,
                const std::vector<LabeledSpan>& hypothesis, double tolerance) {
    if (tolerance < 0.0) throw Error("onset tolerance must be non-negative");
    std::map<std::string, std::vector<double>> ref_onsets, hyp_onsets;
    for (const auto& event : reference) ref_onsets[event.label].push_back(event.span.start);
    for (const auto& event : hypothesis) hyp_onsets[event.label].push_back(event.span.start);

    double tp = 0.0, fp = 0.0, fn = 0.0;
    for (auto& [label, onsets] : ref_onsets) std::sort(onsets.begin(), onsets.end());
    for (auto& [label, onsets] : hyp_onsets) std::sort(onsets.begin(), onsets.end());

    std::set<std::string> labels;
    for (const auto& [label, onsets] : ref_onsets) labels.insert(label);
    for (const auto& [label, onsets] : hyp_onsets) labels.insert(label);

    for (const std::string& label : labels) {
        const auto ref_it = ref_onsets.find(label);
        const auto hyp_it = hyp_onsets.find(label);
        const std::vector<double> empty;
        const std::vector<double>& ref = ref_it == ref_onsets.end() ? empty : ref_it->second;
        const std::vector<double>& hyp = hyp_it == hyp_onsets.end() ? empty : hyp_it->second;

        std::vector<bool> hyp_used(hyp.size(), false);
        std::size_t matched = 0;
        for (double onset : ref) {
            for (std::size_t h = 0; h < hyp.size(); ++h) {
                if (hyp_used[h]) continue;
                if (std::abs(hyp[h] - onset) <= tolerance) {
                    hyp_used[h] = true;
                    ++matched;
                    break;
                }
                if (hyp[h] > onset + tolerance) break;  // sorted: no later candidate fits
            }
        }
        tp += static_cast<double>(matched);
        fn += static_cast<double>(ref.size() - matched);
        fp += static_cast<double>(hyp.size() - matched);
    }
    if (reference.empty() && hypothesis.empty()) return 1.0;
    return f_score(tp, fp, fn);
}

double spearman_rho(const std::vector<int>& truth_order, const std::vector<int>& predicted_order) {
    const std::size_t n = truth_order.size();
    if (n < 2 || predicted_order.size() != n)
        throw Error("rank correlation needs two equal-length sequences of at least 2");
    const auto check_permutation = [n](const std::vector<int>& values) {
        std::vector<bool> seen(n, false);
        for (int value : values) {
            if (value < 1 || static_cast<std::size_t>(value) > n || seen[value - 1])
                throw Error("sequence is not a permutation of 1..n");
            seen[value - 1] = true;
        }
    };
    check_permutation(truth_order);
    check_permutation(predicted_order);

    double sum_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(truth_order[i] - predicted_order[i]);
        sum_sq += d * d;
    }
    const double dn = static_cast<double>(n);
    return 1.0 - 6.0 * sum_sq / (dn * (dn * dn - 1.0));
}

double macro_f1(const std::vector<std::vector<std::string>>& reference,
                const std::vector<std::vector<std::string>>& predicted,
                const std::vector<std::string>& label_set) {
    if (label_set.empty()) throw Error("empty label set");
    if (reference.size() != predicted.size())
        throw Error("reference and prediction counts differ");
    const std::set<std::string> allowed(label_set.begin(), label_set.end());

    std::map<std::string, double> tp, fp, fn;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const std::set<std::string> ref(reference[i].begin(), reference[i].end());
        const std::set<std::string> pred(predicted[i].begin(), predicted[i].end());
        for (const std::string& label : ref)
            if (!allowed.count(label)) throw Error("reference label outside label set: " + label);
        for (const std::string& label : pred)
            if (!allowed.count(label)) throw Error("predicted label outside label set: " + label);
        for (const std::string& label : ref) {
            if (pred.count(label))
                tp[label] += 1.0;
            else
                fn[label] += 1.0;
        }
        for (const std::string& label : pred)
            if (!ref.count(label)) fp[label] += 1.0;
    }

    double sum = 0.0;
    std::size_t counted = 0;
    for (const std::string& label : allowed) {
        const double t = tp.count(label) ? tp.at(label) : 0.0;
        const double p = fp.count(label) ? fp.at(label) : 0.0;
        const double n = fn.count(label) ? fn.at(label) : 0.0;
        if (t + p + n == 0.0) continue;  // label never occurred; F1 undefined
        sum += f_score(t, p, n);
        ++counted;
    }
    return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

double normalize_score(double raw, double topline, bool error_based) {
    const auto transform = [error_based](double x) { return error_based ? 100.0 - x : x; };
    const double top = transform(topline);
    if (top <= 0.0) throw Error("topline transform must be positive");
    const double score = 100.0 * transform(raw) / top;
    return std::clamp(score, 0.0, 100.0);
}

}  // namespace aq
