#include "aq/compiler.hpp"

#include "aq/errors.hpp"

#include <algorithm>
#include <sstream>

namespace aq {

namespace {

const char* cte_name(StreamKind kind) {
    switch (kind) {
        case StreamKind::transcript: return "tx";
        case StreamKind::speaker: return "sp";
        case StreamKind::emotion: return "em";
        case StreamKind::sound_event: return "ev";
    }
    return "?";
}

const char* table_name(StreamKind kind) {
    switch (kind) {
        case StreamKind::transcript: return "transcription";
        case StreamKind::speaker: return "speaker";
        case StreamKind::emotion: return "emotion";
        case StreamKind::sound_event: return "sound_event";
    }
    return "?";
}

const char* cte_columns(StreamKind kind) {
    switch (kind) {
        case StreamKind::transcript: return "start, end, text";
        case StreamKind::speaker: return "start, end, label";
        case StreamKind::emotion:
        case StreamKind::sound_event: return "start, end, label, score";
    }
    return "?";
}

// Single-quoted SQL literal; embedded quotes are doubled.
std::string sql_literal(const std::string& value) {
    std::string out = "'";
    for (char c : value) {
        if (c == '\'') out += "''";
        else out += c;
    }
    out += "'";
    return out;
}

std::vector<std::string> render_atom(const AtomicPredicate& atom) {
    std::vector<std::string> clauses;
    if (const auto* kw = std::get_if<KeywordFilter>(&atom)) {
        clauses.push_back("text ILIKE " + sql_literal("%" + kw->phrase + "%"));
    } else if (const auto* sp = std::get_if<SpeakerEquals>(&atom)) {
        clauses.push_back("label = " + sql_literal(sp->label));
    } else if (const auto* li = std::get_if<LabelIn>(&atom)) {
        if (!li->labels.empty()) {
            std::string in = "label IN (";
            for (std::size_t i = 0; i < li->labels.size(); ++i) {
                if (i) in += ", ";
                in += sql_literal(li->labels[i]);
            }
            in += ")";
            clauses.push_back(std::move(in));
        }
        if (li->score_min > 0.0 || li->labels.empty())
            clauses.push_back("score >= " + format_number(li->score_min));
    } else {
        const auto& wo = std::get<WindowOverlap>(atom);
        clauses.push_back("(start <= " + format_number(wo.window.end) +
                          " AND end >= " + format_number(wo.window.start) + ")");
    }
    return clauses;
}

std::vector<std::string> render_predicate(const FilterPredicate& predicate) {
    if (const auto* conj = std::get_if<Conjunction>(&predicate)) {
        std::vector<std::string> clauses;
        for (const AtomicPredicate& term : conj->terms) {
            auto rendered = render_atom(term);
            clauses.insert(clauses.end(), rendered.begin(), rendered.end());
        }
        return clauses;
    }
    if (const auto* kw = std::get_if<KeywordFilter>(&predicate)) return render_atom({*kw});
    if (const auto* sp = std::get_if<SpeakerEquals>(&predicate)) return render_atom({*sp});
    if (const auto* li = std::get_if<LabelIn>(&predicate)) return render_atom({*li});
    return render_atom({std::get<WindowOverlap>(predicate)});
}

const ScanNode* find_scan(const QueryIR& ir, StreamKind kind) {
    for (const ScanNode& scan : ir.scans)
        if (scan.kind == kind) return &scan;
    return nullptr;
}

std::string projection_expr(const QueryIR& ir, ReturnField field) {
    const char* anchor = cte_name(ir.anchor());
    switch (field) {
        case ReturnField::start: return std::string(anchor) + ".start";
        case ReturnField::end: return std::string(anchor) + ".end";
        case ReturnField::speaker: return "sp.label";
        case ReturnField::text: return "tx.text";
        case ReturnField::emotion: return "em.label";
        case ReturnField::event: return "ev.label";
        case ReturnField::score:
            return find_scan(ir, StreamKind::sound_event) ? "ev.score" : "em.score";
    }
    throw CompileError("unknown return field");
}

}  // namespace

QueryIR compile(const RetrievalPlan& input) {
    validate_plan(input);

    // Join mode must be decided before canonicalization materializes the
    // default event score floor, so compile(p) == compile(canonicalize(p)).
    const bool event_filtered = input.filters.event_labels.has_value();
    const RetrievalPlan plan = canonicalize(input);

    QueryIR ir;
    ir.tau = *plan.fusion.tau;
    ir.projection = plan.output;

    for (StreamKind kind : plan.streams) {
        ScanNode scan;
        scan.kind = kind;
        std::vector<AtomicPredicate> terms;
        if (plan.filters.time_window) terms.push_back(WindowOverlap{*plan.filters.time_window});
        switch (kind) {
            case StreamKind::transcript:
                if (plan.filters.text) {
                    terms.push_back(KeywordFilter{*plan.filters.text});
                    scan.inner_join = true;
                }
                break;
            case StreamKind::speaker:
                if (plan.filters.speaker) {
                    terms.push_back(SpeakerEquals{*plan.filters.speaker});
                    scan.inner_join = true;
                }
                break;
            case StreamKind::emotion:
                if (plan.filters.emotion_labels) {
                    terms.push_back(LabelIn{*plan.filters.emotion_labels, 0.0});
                    scan.inner_join = true;
                }
                break;
            case StreamKind::sound_event:
                // The score floor always applies to event scans; a label list
                // makes the stream required.
                terms.push_back(LabelIn{plan.filters.event_labels.value_or(
                                            std::vector<std::string>{}),
                                        *plan.filters.event_score_min});
                scan.inner_join = event_filtered;
                break;
        }
        if (terms.size() == 1) {
            scan.predicate = std::visit([](const auto& atom) { return FilterPredicate{atom}; },
                                        terms.front());
        } else if (terms.size() > 1) {
            scan.predicate = Conjunction{std::move(terms)};
        }
        ir.scans.push_back(std::move(scan));
    }
    return ir;
}

std::string emit_sql(const QueryIR& ir) {
    if (ir.scans.empty()) throw CompileError("query has no scans");
    std::ostringstream sql;

    sql << "WITH\n";
    for (std::size_t i = 0; i < ir.scans.size(); ++i) {
        const ScanNode& scan = ir.scans[i];
        sql << cte_name(scan.kind) << " AS (  -- " << stream_name(scan.kind) << " stream\n";
        sql << "  SELECT " << cte_columns(scan.kind) << "\n";
        sql << "  FROM " << table_name(scan.kind) << "\n";
        if (scan.predicate) {
            const auto clauses = render_predicate(*scan.predicate);
            for (std::size_t c = 0; c < clauses.size(); ++c) {
                sql << (c == 0 ? "  WHERE " : "    AND ") << clauses[c] << "\n";
            }
        }
        sql << ")" << (i + 1 < ir.scans.size() ? ",\n" : "\n");
    }

    sql << "SELECT\n  ";
    for (std::size_t i = 0; i < ir.projection.return_fields.size(); ++i) {
        if (i) sql << ", ";
        sql << projection_expr(ir, ir.projection.return_fields[i]);
    }
    sql << "\nFROM " << cte_name(ir.anchor());
    for (std::size_t i = 1; i < ir.scans.size(); ++i) {
        const ScanNode& scan = ir.scans[i];
        sql << "\n" << (scan.inner_join ? "JOIN " : "LEFT JOIN ") << cte_name(scan.kind)
            << " ON temporal_overlap(" << cte_name(ir.anchor()) << ", " << cte_name(scan.kind)
            << ", " << format_number(ir.tau) << ")";
    }
    sql << ";\n";
    return sql.str();
}

}  // namespace aq
