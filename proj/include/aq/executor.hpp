#pragma once

#include "aq/compiler.hpp"
#include "aq/store.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace aq {

// Projected cell value. monostate renders as an explicit null (a retained
// anchor row whose target stream had no fused match).
using FieldValue = std::variant<std::monostate, double, std::string>;

struct FusedRow {
    TimeSpan anchor_span;
    std::vector<FieldValue> values;   // parallel to the projection fields
    std::array<bool, 4> matched{};    // per StreamKind: fused partner found

    bool operator==(const FusedRow&) const = default;
};

struct RetrievedSegments {
    std::vector<ReturnField> projection;
    std::vector<FusedRow> rows;       // sorted by anchor (start, end)
    std::string context_text;
    std::size_t context_size = 0;     // estimated tokens: ceil(bytes / 4)
};

// Deterministic execution: per-stream scans, nearest-midpoint fusion against
// the anchor, drop-or-retain per scan join mode, projection, serialization.
RetrievedSegments execute(const QueryIR& ir, const RecordingDatabase& db);

// Among targets overlapping [anchor.start - tau, anchor.end + tau] (closed
// interval), returns the one minimizing |mid(anchor) - mid(target)|; ties
// prefer the earlier (start, end) span. Targets must come from one stream.
std::optional<Record> temporal_fuse(const Record& anchor, const std::vector<Record>& targets,
                                    double tau);

// One line per row: `field=value` pairs in projection order joined by tabs,
// rows joined by newlines. Numbers use fixed two decimals; nulls render as
// "null". Returns the text and its ceil(bytes/4) token estimate.
std::pair<std::string, std::size_t> serialize_context(const std::vector<FusedRow>& rows,
                                                      const std::vector<ReturnField>& projection);

// UTF-8 CSV with a header row, for diffing against an external SQL engine
// running the emitted query. Nulls become empty cells.
std::string rows_to_csv(const std::vector<FusedRow>& rows,
                        const std::vector<ReturnField>& projection);

}  // namespace aq
