#pragma once

#include "aq/plan.hpp"
#include "aq/predicate.hpp"
#include "aq/store.hpp"

#include <optional>
#include <string>
#include <vector>

namespace aq {

// One per-stream scan of a compiled query. An absent predicate is an
// unfiltered scan. `inner_join` records whether the plan put an explicit
// content filter on this stream: matching rows are then required (drop the
// fused row on no match) instead of retained with nulls. The global time
// window and the default event score floor do not affect the join mode.
struct ScanNode {
    StreamKind kind = StreamKind::transcript;
    std::optional<FilterPredicate> predicate;
    bool inner_join = false;

    bool operator==(const ScanNode&) const = default;
};

// Compiled form of a plan: the anchor scan first and the remaining scans in
// canonical stream order, one fusion step, one projection.
struct QueryIR {
    std::vector<ScanNode> scans;
    double tau = kDefaultTau;
    OutputSpec projection;

    StreamKind anchor() const { return scans.front().kind; }

    bool operator==(const QueryIR&) const = default;
};

// Validates, canonicalizes and lowers the plan. Deterministic: equal plans
// produce equal IR, and compile(p) == compile(canonicalize(p)).
QueryIR compile(const RetrievalPlan& plan);

// Renders the IR as one merged SQL query: one CTE per scan (tx/sp/em/ev, in
// scan order) and a single SELECT joining them with temporal_overlap().
// Byte-deterministic. See docs/sql_dialect.md for the layout contract.
std::string emit_sql(const QueryIR& ir);

}  // namespace aq
