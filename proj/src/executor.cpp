#include "aq/executor.hpp"

#include "aq/errors.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace aq {

namespace {

std::size_t index_of(StreamKind kind) {
    return static_cast<std::size_t>(kind);
}

std::optional<std::size_t> fuse_index(const Record& anchor, const std::vector<Record>& targets,
                                      double tau) {
    const TimeSpan widened{anchor.span.start - tau, anchor.span.end + tau};
    const double anchor_mid = anchor.span.midpoint();
    std::optional<std::size_t> best;
    double best_dist = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const TimeSpan& span = targets[i].span;
        if (!span.overlaps(widened)) continue;
        const double dist = std::abs(anchor_mid - span.midpoint());
        if (!best || dist < best_dist ||
            (dist == best_dist && span_less(span, targets[*best].span))) {
            best = i;
            best_dist = dist;
        }
    }
    return best;
}

// Highest-scored label satisfying the scan's label constraint; the scan
// predicate admitted the record, so a satisfying pair normally exists.
const LabelScore* pick_label(const LabelList& labels, const LabelIn* constraint) {
    if (labels.empty()) return nullptr;
    if (constraint) {
        for (const LabelScore& ls : labels) {
            if (ls.score < constraint->score_min) continue;
            if (!constraint->labels.empty() &&
                std::find(constraint->labels.begin(), constraint->labels.end(), ls.label) ==
                    constraint->labels.end())
                continue;
            return &ls;
        }
    }
    return &labels.front();
}

const LabelIn* event_constraint_of(const QueryIR& ir) {
    for (const ScanNode& scan : ir.scans) {
        if (scan.kind != StreamKind::sound_event || !scan.predicate) continue;
        if (const auto* li = std::get_if<LabelIn>(&*scan.predicate)) return li;
        if (const auto* conj = std::get_if<Conjunction>(&*scan.predicate)) {
            for (const AtomicPredicate& term : conj->terms)
                if (const auto* t = std::get_if<LabelIn>(&term)) return t;
        }
    }
    return nullptr;
}

FieldValue field_value(ReturnField field, const Record& anchor,
                       const std::array<const Record*, 4>& chosen, bool have_event_scan,
                       const LabelIn* event_constraint) {
    const Record* speaker = chosen[index_of(StreamKind::speaker)];
    const Record* transcript = chosen[index_of(StreamKind::transcript)];
    const Record* emotion = chosen[index_of(StreamKind::emotion)];
    const Record* event = chosen[index_of(StreamKind::sound_event)];
    switch (field) {
        case ReturnField::start: return anchor.span.start;
        case ReturnField::end: return anchor.span.end;
        case ReturnField::speaker:
            if (speaker) return speaker->speaker_label();
            return std::monostate{};
        case ReturnField::text:
            if (transcript) return transcript->text();
            return std::monostate{};
        case ReturnField::emotion:
            if (emotion && !emotion->labels().empty()) return emotion->labels().front().label;
            return std::monostate{};
        case ReturnField::event:
            if (event) {
                if (const LabelScore* ls = pick_label(event->labels(), event_constraint))
                    return ls->label;
            }
            return std::monostate{};
        case ReturnField::score:
            if (have_event_scan) {
                if (event) {
                    if (const LabelScore* ls = pick_label(event->labels(), event_constraint))
                        return ls->score;
                }
                return std::monostate{};
            }
            if (emotion && !emotion->labels().empty()) return emotion->labels().front().score;
            return std::monostate{};
    }
    throw ExecError("unresolvable projection field");
}

std::string render_context_value(const FieldValue& value) {
    if (std::holds_alternative<std::monostate>(value)) return "null";
    if (const double* num = std::get_if<double>(&value)) return format_seconds(*num);
    return std::get<std::string>(value);
}

std::string csv_escape(const std::string& cell) {
    if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

}  // namespace

std::optional<Record> temporal_fuse(const Record& anchor, const std::vector<Record>& targets,
                                    double tau) {
    if (tau < 0.0) throw ExecError("tau must be >= 0");
    const auto idx = fuse_index(anchor, targets, tau);
    if (!idx) return std::nullopt;
    return targets[*idx];
}

RetrievedSegments execute(const QueryIR& ir, const RecordingDatabase& db) {
    if (!db.finalized()) throw ExecError("database not finalized");
    if (ir.scans.empty()) throw ExecError("query has no scans");
    if (!(ir.tau > 0.0)) throw ExecError("tau must be positive");

    const ScanNode& anchor_scan = ir.scans.front();
    const std::vector<Record> anchors =
        anchor_scan.predicate ? db.scan(anchor_scan.kind, *anchor_scan.predicate)
                              : db.records(anchor_scan.kind);

    struct TargetStream {
        const ScanNode* scan;
        std::vector<Record> records;
    };
    std::vector<TargetStream> targets;
    for (std::size_t i = 1; i < ir.scans.size(); ++i) {
        const ScanNode& scan = ir.scans[i];
        targets.push_back({&scan, scan.predicate ? db.scan(scan.kind, *scan.predicate)
                                                 : db.records(scan.kind)});
    }

    const bool have_event_scan =
        std::any_of(ir.scans.begin(), ir.scans.end(),
                    [](const ScanNode& s) { return s.kind == StreamKind::sound_event; });
    const LabelIn* event_constraint = event_constraint_of(ir);

    RetrievedSegments out;
    out.projection = ir.projection.return_fields;
    for (const Record& anchor : anchors) {
        std::array<const Record*, 4> chosen{};
        FusedRow row;
        row.anchor_span = anchor.span;
        chosen[index_of(anchor_scan.kind)] = &anchor;
        row.matched[index_of(anchor_scan.kind)] = true;

        bool dropped = false;
        for (const TargetStream& target : targets) {
            const auto idx = fuse_index(anchor, target.records, ir.tau);
            if (idx) {
                chosen[index_of(target.scan->kind)] = &target.records[*idx];
                row.matched[index_of(target.scan->kind)] = true;
            } else if (target.scan->inner_join) {
                dropped = true;
                break;
            }
        }
        if (dropped) continue;

        for (ReturnField field : out.projection)
            row.values.push_back(
                field_value(field, anchor, chosen, have_event_scan, event_constraint));
        out.rows.push_back(std::move(row));
    }

    auto [text, size] = serialize_context(out.rows, out.projection);
    out.context_text = std::move(text);
    out.context_size = size;
    return out;
}

std::pair<std::string, std::size_t> serialize_context(
    const std::vector<FusedRow>& rows, const std::vector<ReturnField>& projection) {
    std::string text;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (r) text += '\n';
        for (std::size_t f = 0; f < projection.size(); ++f) {
            if (f) text += '\t';
            text += field_name(projection[f]);
            text += '=';
            text += render_context_value(rows[r].values[f]);
        }
    }
    const std::size_t size = (text.size() + 3) / 4;
    return {std::move(text), size};
}

std::string rows_to_csv(const std::vector<FusedRow>& rows,
                        const std::vector<ReturnField>& projection) {
    std::string out;
    for (std::size_t f = 0; f < projection.size(); ++f) {
        if (f) out += ',';
        out += field_name(projection[f]);
    }
    out += '\n';
    for (const FusedRow& row : rows) {
        for (std::size_t f = 0; f < projection.size(); ++f) {
            if (f) out += ',';
            const FieldValue& value = row.values[f];
            if (const double* num = std::get_if<double>(&value)) out += format_number(*num);
            else if (const std::string* str = std::get_if<std::string>(&value))
                out += csv_escape(*str);
        }
        out += '\n';
    }
    return out;
}

}  // namespace aq
