#include "aq/gateway.hpp"

#include "aq/errors.hpp"
#include "aq/predicate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <regex>
#include <set>

namespace aq {

using nlohmann::json;

namespace {

std::string trim(std::string_view text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    return std::string(text.substr(begin, end - begin));
}

std::optional<json> try_parse_json(const std::string& text) {
    json parsed = json::parse(text, nullptr, false);
    if (parsed.is_discarded()) return std::nullopt;
    return parsed;
}

bool keys_exactly(const json& obj, std::initializer_list<const char*> keys) {
    if (!obj.is_object() || obj.size() != keys.size()) return false;
    return std::all_of(keys.begin(), keys.end(),
                       [&](const char* k) { return obj.contains(k); });
}

const std::set<std::string>& stopwords() {
    static const std::set<std::string> words = {
        "the", "and", "for", "with", "from", "that", "this", "what", "who", "whom",
        "why", "how", "when", "where", "which", "does", "did", "was", "were", "are",
        "is", "be", "a", "an", "of", "to", "in", "on", "at", "about", "can", "you",
        "your", "its", "it", "answer", "question", "following", "given", "context",
        "short", "sentence", "please", "audio", "clip", "recording", "speaker",
        "second", "seconds", "sec", "reply", "just", "cannot", "should", "work",
        "utterance", "not", "answerable", "task"};
    return words;
}

void erase_matches(std::string& text, const std::regex& pattern) {
    text = std::regex_replace(text, pattern, " ");
}

// The fused-row field index of a return field, if projected.
std::optional<std::size_t> field_index(const std::vector<ReturnField>& projection,
                                       ReturnField field) {
    const auto it = std::find(projection.begin(), projection.end(), field);
    if (it == projection.end()) return std::nullopt;
    return static_cast<std::size_t>(it - projection.begin());
}

const std::string* string_value(const FusedRow& row, std::optional<std::size_t> index) {
    if (!index) return nullptr;
    return std::get_if<std::string>(&row.values[*index]);
}

std::string resolve_speaker_label(const std::string& token,
                                  const std::vector<std::string>& known) {
    if (std::find(known.begin(), known.end(), token) != known.end()) return token;
    for (const std::string& label : known) {
        if (label.size() > token.size() + 1 &&
            label.compare(label.size() - token.size(), token.size(), token) == 0 &&
            label[label.size() - token.size() - 1] == '_')
            return label;
    }
    return token;
}

std::vector<std::string> parse_sed_labels(const std::string& question) {
    static const std::string marker = "sound event label(s):";
    const std::string lowered = to_lower_ascii(question);
    std::size_t pos = lowered.find(marker);
    std::size_t skip = marker.size();
    if (pos == std::string::npos) return {};
    std::size_t begin = pos + skip;
    std::size_t end = question.size();
    for (const char* terminator : {" in the audio", "\n", ". Return", ". return"}) {
        const std::size_t t = question.find(terminator, begin);
        if (t != std::string::npos) end = std::min(end, t);
    }
    std::vector<std::string> labels;
    std::string segment = question.substr(begin, end - begin);
    std::size_t item_start = 0;
    while (item_start <= segment.size()) {
        const std::size_t sep = segment.find(';', item_start);
        const std::string label =
            trim(segment.substr(item_start, sep == std::string::npos ? std::string::npos
                                                                     : sep - item_start));
        if (!label.empty()) labels.push_back(label);
        if (sep == std::string::npos) break;
        item_start = sep + 1;
    }
    return labels;
}

std::optional<std::string> extract_speaker_token(const std::string& question) {
    static const std::string marker = "utterance from speaker ";
    const std::size_t pos = to_lower_ascii(question).find(marker);
    if (pos == std::string::npos) return std::nullopt;
    std::size_t begin = pos + marker.size();
    std::size_t end = begin;
    while (end < question.size() && question[end] != ' ' && question[end] != '\n' &&
           question[end] != ',' && question[end] != ';')
        ++end;
    std::string token = question.substr(begin, end - begin);
    while (!token.empty() && (token.back() == '.' || token.back() == '!' || token.back() == '?'))
        token.pop_back();
    if (token.empty()) return std::nullopt;
    return token;
}

RetrievalPlan base_plan(std::vector<StreamKind> streams, StreamKind anchor,
                        std::vector<ReturnField> fields, AnswerSchema schema) {
    RetrievalPlan plan;
    plan.streams = std::move(streams);
    plan.fusion.anchor = anchor;
    plan.output.return_fields = std::move(fields);
    plan.answer_schema = std::move(schema);
    return plan;
}

}  // namespace

namespace {

// Positions of "A)", "B)", ... markers at word boundaries, consecutive from A.
std::vector<std::pair<char, std::size_t>> mc_marker_positions(const std::string& question) {
    std::vector<std::pair<char, std::size_t>> markers;
    for (std::size_t i = 0; i + 1 < question.size(); ++i) {
        const char c = question[i];
        if (c < 'A' || c > 'F' || question[i + 1] != ')') continue;
        const bool boundary = i == 0 || question[i - 1] == ' ' || question[i - 1] == '\n' ||
                              question[i - 1] == '\t';
        if (!boundary) continue;
        if (c != static_cast<char>('A' + markers.size())) continue;  // consecutive from A
        markers.push_back({c, i});
    }
    return markers;
}

}  // namespace

std::vector<McOption> parse_mc_options(const std::string& question) {
    const auto markers = mc_marker_positions(question);
    std::vector<McOption> options;
    for (std::size_t k = 0; k < markers.size(); ++k) {
        const std::size_t begin = markers[k].second + 2;
        std::size_t end = k + 1 < markers.size() ? markers[k + 1].second : question.size();
        const std::size_t newline = question.find('\n', begin);  // options sit on one line
        if (newline != std::string::npos) end = std::min(end, newline);
        options.push_back({std::string(1, markers[k].first),
                           trim(question.substr(begin, end - begin))});
    }
    return options;
}

std::vector<std::string> parse_numbered_labels(const std::string& question) {
    std::vector<std::string> labels;
    std::size_t search_from = 0;
    for (int k = 1;; ++k) {
        const std::string marker = "(" + std::to_string(k) + ")";
        const std::size_t pos = question.find(marker, search_from);
        if (pos == std::string::npos) break;
        const std::size_t begin = pos + marker.size();
        std::size_t end = question.size();
        const std::string next_marker = "(" + std::to_string(k + 1) + ")";
        for (const std::string& terminator :
             {next_marker, std::string("\n"), std::string(" Determine")}) {
            const std::size_t t = question.find(terminator, begin);
            if (t != std::string::npos) end = std::min(end, t);
        }
        const std::string label = trim(question.substr(begin, end - begin));
        if (label.empty()) break;
        labels.push_back(label);
        search_from = begin;
    }
    return labels;
}

std::optional<TimeSpan> parse_question_window(const std::string& question) {
    static const std::array<std::regex, 4> patterns = {
        std::regex(R"(from\s+([0-9]+(?:\.[0-9]+)?)\s*sec(?:onds?)?\.?\s+to\s+([0-9]+(?:\.[0-9]+)?)\s*sec)",
                   std::regex::icase),
        std::regex(R"(between\s+([0-9]+(?:\.[0-9]+)?)\s+and\s+([0-9]+(?:\.[0-9]+)?)\s*sec)",
                   std::regex::icase),
        std::regex(R"(spanning\s+([0-9]+(?:\.[0-9]+)?)\s+to\s+([0-9]+(?:\.[0-9]+)?)\s*sec)",
                   std::regex::icase),
        std::regex(R"(\(([0-9]+(?:\.[0-9]+)?)\s+to\s+([0-9]+(?:\.[0-9]+)?)\s*seconds?\))",
                   std::regex::icase)};
    for (const std::regex& pattern : patterns) {
        std::smatch match;
        if (std::regex_search(question, match, pattern)) {
            TimeSpan window{std::stod(match[1].str()), std::stod(match[2].str())};
            if (window.valid()) return window;
        }
    }
    return std::nullopt;
}

std::optional<std::string> extract_keyword(const std::string& question) {
    std::string core = question;
    const auto markers = mc_marker_positions(core);
    if (!markers.empty()) core = core.substr(0, markers.front().second);
    static const std::regex speaker_sentence(
        R"(You should work on the utterance from speaker [^.\n]*\.)");
    static const std::regex abstain_sentence(
        R"(If you cannot answer[^"]*"[^"]*"\.?)");
    static const std::regex heading(R"(##\s*[A-Za-z]+)");
    static const std::regex qa_prefix(
        R"(Given the context, answer the following question in a short sentence:)");
    erase_matches(core, speaker_sentence);
    erase_matches(core, abstain_sentence);
    erase_matches(core, heading);
    erase_matches(core, qa_prefix);

    std::optional<std::string> keyword;
    std::string token;
    const auto flush = [&] {
        if (token.size() >= 3 && !stopwords().contains(token)) keyword = token;
        token.clear();
    };
    for (char c : core) {
        if (std::isalpha(static_cast<unsigned char>(c)))
            token += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        else
            flush();
    }
    flush();
    return keyword;
}

std::string_view stage_name(Stage stage) {
    switch (stage) {
        case Stage::plan: return "plan";
        case Stage::compile: return "compile";
        case Stage::execute: return "execute";
        case Stage::generate: return "generate";
    }
    return "?";
}

DbMetadata db_metadata_from(const RecordingDatabase& db) {
    DbMetadata meta;
    meta.duration = db.duration();
    std::set<std::string> speakers;
    std::set<std::string> events;
    for (StreamKind kind : kAllStreams) {
        const auto& records = db.records(kind);
        if (records.empty()) continue;
        meta.streams.push_back(kind);
        if (kind == StreamKind::speaker)
            for (const Record& r : records) speakers.insert(r.speaker_label());
        if (kind == StreamKind::sound_event)
            for (const Record& r : records)
                for (const LabelScore& ls : r.labels()) events.insert(ls.label);
    }
    meta.speaker_labels.assign(speakers.begin(), speakers.end());
    meta.event_labels.assign(events.begin(), events.end());
    return meta;
}

RetrievalPlan RuleTemplatePlanner::plan(const QueryRequest& request) {
    const std::string& q = request.question;
    if (trim(q).empty()) throw ValidationError("empty_question", "question must not be empty");
    const auto window = parse_question_window(q);
    RetrievalPlan plan;

    if (contains_ci(q, "utterance from speaker")) {
        const auto token = extract_speaker_token(q);
        if (!token)
            throw ValidationError("missing_speaker", "could not extract the designated speaker");
        const auto options = parse_mc_options(q);
        AnswerSchema schema;
        if (!options.empty()) {
            schema.kind = AnswerKind::enum_choice;
            for (const McOption& option : options) schema.enum_values.push_back(option.letter);
        }
        schema.abstainable = true;
        plan = base_plan({StreamKind::transcript, StreamKind::speaker}, StreamKind::transcript,
                         {ReturnField::start, ReturnField::end, ReturnField::speaker,
                          ReturnField::text},
                         std::move(schema));
        plan.filters.speaker = resolve_speaker_label(*token, request.db_metadata.speaker_labels);
        plan.filters.text = extract_keyword(q);
    } else if (contains_ci(q, "count the number of speakers")) {
        AnswerSchema schema;
        schema.kind = AnswerKind::integer;
        plan = base_plan({StreamKind::speaker}, StreamKind::speaker,
                         {ReturnField::start, ReturnField::end, ReturnField::speaker},
                         std::move(schema));
        plan.filters.time_window =
            window.value_or(TimeSpan{0.0, request.db_metadata.duration});
    } else if (contains_ci(q, "chronological order") && parse_numbered_labels(q).size() >= 2) {
        const auto labels = parse_numbered_labels(q);
        AnswerSchema schema;
        schema.kind = AnswerKind::ordering;
        schema.ordering_size = static_cast<int>(labels.size());
        plan = base_plan({StreamKind::sound_event}, StreamKind::sound_event,
                         {ReturnField::start, ReturnField::end, ReturnField::event,
                          ReturnField::score},
                         std::move(schema));
        plan.filters.event_labels = labels;
        plan.filters.time_window = window;
    } else if (!parse_sed_labels(q).empty()) {
        AnswerSchema schema;
        schema.kind = AnswerKind::span_list;
        plan = base_plan({StreamKind::sound_event}, StreamKind::sound_event,
                         {ReturnField::start, ReturnField::end, ReturnField::event,
                          ReturnField::score},
                         std::move(schema));
        plan.filters.event_labels = parse_sed_labels(q);
        plan.filters.time_window = window;
    } else if (contains_ci(q, "speaker diarization")) {
        AnswerSchema schema;
        schema.kind = AnswerKind::span_list;
        plan = base_plan({StreamKind::speaker}, StreamKind::speaker,
                         {ReturnField::start, ReturnField::end, ReturnField::speaker},
                         std::move(schema));
        plan.filters.time_window = window.value_or(TimeSpan{0.0, request.db_metadata.duration});
    } else if (contains_ci(q, "emotion")) {
        AnswerSchema schema;
        schema.kind = AnswerKind::label_list;
        plan = base_plan({StreamKind::emotion}, StreamKind::emotion,
                         {ReturnField::start, ReturnField::end, ReturnField::emotion,
                          ReturnField::score},
                         std::move(schema));
        plan.filters.time_window = window;
    } else if (contains_ci(q, "summar")) {
        AnswerSchema schema;
        plan = base_plan({StreamKind::transcript, StreamKind::speaker}, StreamKind::transcript,
                         {ReturnField::start, ReturnField::end, ReturnField::speaker,
                          ReturnField::text},
                         std::move(schema));
        plan.filters.time_window = window.value_or(TimeSpan{0.0, request.db_metadata.duration});
    } else {
        const auto options = parse_mc_options(q);
        AnswerSchema schema;
        if (!options.empty()) {
            schema.kind = AnswerKind::enum_choice;
            for (const McOption& option : options) schema.enum_values.push_back(option.letter);
        }
        plan = base_plan({StreamKind::transcript}, StreamKind::transcript,
                         {ReturnField::start, ReturnField::end, ReturnField::text},
                         std::move(schema));
        plan.filters.text = extract_keyword(q);
    }

    plan = canonicalize(std::move(plan));
    validate_plan(plan);
    return plan;
}

namespace {

std::string build_raw_answer(const std::string& question, const RetrievedSegments& context,
                             const AnswerSchema& schema) {
    if (schema.abstainable && context.rows.empty()) return std::string(kAbstainReply);

    const auto speaker_idx = field_index(context.projection, ReturnField::speaker);
    const auto text_idx = field_index(context.projection, ReturnField::text);
    const auto emotion_idx = field_index(context.projection, ReturnField::emotion);
    const auto event_idx = field_index(context.projection, ReturnField::event);

    switch (schema.kind) {
        case AnswerKind::integer: {
            std::set<std::string> distinct;
            for (const FusedRow& row : context.rows)
                if (const std::string* label = string_value(row, speaker_idx))
                    distinct.insert(*label);
            return json{{"answer", static_cast<int>(distinct.size())}}.dump();
        }
        case AnswerKind::ordering: {
            const auto labels = parse_numbered_labels(question);
            const double inf = std::numeric_limits<double>::infinity();
            std::vector<double> onset(labels.size(), inf);
            for (const FusedRow& row : context.rows) {
                const std::string* label = string_value(row, event_idx);
                if (!label) continue;
                for (std::size_t i = 0; i < labels.size(); ++i)
                    if (labels[i] == *label) onset[i] = std::min(onset[i], row.anchor_span.start);
            }
            std::vector<int> order(labels.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i + 1);
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                return onset[static_cast<std::size_t>(a - 1)] <
                       onset[static_cast<std::size_t>(b - 1)];
            });
            return json{{"order", order}}.dump();
        }
        case AnswerKind::span_list: {
            json events = json::array();
            for (const FusedRow& row : context.rows) {
                std::string label;
                for (const auto idx : {event_idx, speaker_idx, emotion_idx}) {
                    if (const std::string* value = string_value(row, idx)) {
                        label = *value;
                        break;
                    }
                }
                events.push_back(json{{"label", label},
                                      {"start", row.anchor_span.start},
                                      {"end", row.anchor_span.end}});
            }
            return json{{"events", std::move(events)}}.dump();
        }
        case AnswerKind::label_list: {
            std::vector<std::pair<std::string, int>> counts;  // first-seen order
            for (const FusedRow& row : context.rows) {
                const std::string* label = string_value(row, emotion_idx);
                if (!label) continue;
                auto it = std::find_if(counts.begin(), counts.end(),
                                       [&](const auto& c) { return c.first == *label; });
                if (it == counts.end()) counts.push_back({*label, 1});
                else ++it->second;
            }
            json labels = json::array();
            if (!counts.empty()) {
                const auto best = std::max_element(
                    counts.begin(), counts.end(),
                    [](const auto& a, const auto& b) { return a.second < b.second; });
                labels.push_back(best->first);  // max_element keeps first on ties
            }
            return json{{"labels", std::move(labels)}}.dump();
        }
        case AnswerKind::enum_choice: {
            const auto options = parse_mc_options(question);
            std::string choice = schema.enum_values.empty() ? "" : schema.enum_values.front();
            for (const McOption& option : options) {
                if (option.text.empty()) continue;
                if (contains_ci(context.context_text, option.text)) {
                    choice = option.letter;
                    break;
                }
            }
            return json{{"answer", choice}}.dump();
        }
        case AnswerKind::free_text: {
            std::string joined;
            for (const FusedRow& row : context.rows) {
                const std::string* text = string_value(row, text_idx);
                if (!text || text->empty()) continue;
                if (!joined.empty()) joined += ' ';
                joined += *text;
            }
            return joined;
        }
    }
    return "";
}

}  // namespace

Answer ExtractiveGenerator::generate(const std::string& question,
                                     const RetrievedSegments& context,
                                     const AnswerSchema& schema) {
    return parse_answer(build_raw_answer(question, context, schema), schema);
}

Answer parse_answer(std::string raw, const AnswerSchema& schema) {
    Answer answer;
    answer.raw = std::move(raw);
    const std::string trimmed = trim(answer.raw);

    if (schema.abstainable && trimmed == kAbstainReply) {
        answer.parsed = json{{"abstain", true}};
        return answer;
    }

    const auto fail = [&](const std::string& reason) {
        answer.parse_failure = reason;
        return answer;
    };
    const auto parsed_json = try_parse_json(trimmed);

    switch (schema.kind) {
        case AnswerKind::free_text: {
            if (parsed_json && keys_exactly(*parsed_json, {"answer"}) &&
                parsed_json->at("answer").is_string()) {
                answer.parsed = *parsed_json;
            } else {
                answer.parsed = json{{"answer", trimmed}};
            }
            return answer;
        }
        case AnswerKind::integer: {
            if (parsed_json && keys_exactly(*parsed_json, {"answer"}) &&
                parsed_json->at("answer").is_number_integer()) {
                answer.parsed = *parsed_json;
                return answer;
            }
            if (!trimmed.empty() && trimmed != "-" && trimmed.size() <= 18 &&
                std::all_of(trimmed.begin() + (trimmed.front() == '-' ? 1 : 0), trimmed.end(),
                            [](unsigned char c) { return std::isdigit(c); })) {
                answer.parsed = json{{"answer", std::stoll(trimmed)}};
                return answer;
            }
            return fail("expected an integer answer, got '" + trimmed + "'");
        }
        case AnswerKind::enum_choice: {
            std::string candidate = trimmed;
            if (parsed_json) {
                if (!keys_exactly(*parsed_json, {"answer"}) ||
                    !parsed_json->at("answer").is_string())
                    return fail("enum answer must be {\"answer\": \"<value>\"}");
                candidate = parsed_json->at("answer").get<std::string>();
            }
            if (std::find(schema.enum_values.begin(), schema.enum_values.end(), candidate) ==
                schema.enum_values.end())
                return fail("'" + candidate + "' is not an allowed choice");
            answer.parsed = json{{"answer", candidate}};
            return answer;
        }
        case AnswerKind::ordering: {
            if (!parsed_json || !keys_exactly(*parsed_json, {"order"}) ||
                !parsed_json->at("order").is_array())
                return fail("ordering answer must be {\"order\": [...]}");
            const json& order = parsed_json->at("order");
            const int n = schema.ordering_size;
            if (static_cast<int>(order.size()) != n)
                return fail("order must list exactly " + std::to_string(n) + " items");
            std::vector<bool> seen(static_cast<std::size_t>(n), false);
            for (const json& item : order) {
                if (!item.is_number_integer()) return fail("order items must be integers");
                const int v = item.get<int>();
                if (v < 1 || v > n || seen[static_cast<std::size_t>(v - 1)])
                    return fail("order must be a permutation of 1.." + std::to_string(n));
                seen[static_cast<std::size_t>(v - 1)] = true;
            }
            answer.parsed = *parsed_json;
            return answer;
        }
        case AnswerKind::label_list: {
            if (!parsed_json || !keys_exactly(*parsed_json, {"labels"}) ||
                !parsed_json->at("labels").is_array())
                return fail("label answer must be {\"labels\": [...]}");
            for (const json& item : parsed_json->at("labels"))
                if (!item.is_string()) return fail("labels must be strings");
            answer.parsed = *parsed_json;
            return answer;
        }
        case AnswerKind::span_list: {
            if (!parsed_json || !keys_exactly(*parsed_json, {"events"}) ||
                !parsed_json->at("events").is_array())
                return fail("event answer must be {\"events\": [...]}");
            for (const json& item : parsed_json->at("events")) {
                if (!keys_exactly(item, {"label", "start", "end"}) ||
                    !item.at("label").is_string() || !item.at("start").is_number() ||
                    !item.at("end").is_number())
                    return fail("each event needs label, start and end");
            }
            answer.parsed = *parsed_json;
            return answer;
        }
    }
    return fail("unknown answer kind");
}

PipelineResult run_pipeline(const QueryRequest& request, const RecordingDatabase& db,
                            Planner& planner, Generator& generator,
                            const PipelineOptions& options) {
    PipelineResult result;

    RetrievalPlan plan;
    try {
        plan = planner.plan(request);
        validate_plan(plan);  // canonicalize requires a valid plan
        plan = canonicalize(std::move(plan));
        if (options.tau_override) {
            if (!(*options.tau_override > 0.0))
                throw ValidationError("invalid_tau", "tau override must be positive");
            plan.fusion.tau = *options.tau_override;
        }
        result.trace.plan_json = serialize_plan(plan);
    } catch (const std::exception& e) {
        result.failed_stage = Stage::plan;
        result.error = e.what();
        return result;
    }

    QueryIR ir;
    try {
        ir = compile(plan);
        result.trace.sql = emit_sql(ir);
    } catch (const std::exception& e) {
        result.failed_stage = Stage::compile;
        result.error = e.what();
        return result;
    }

    RetrievedSegments segments;
    try {
        segments = execute(ir, db);
        result.trace.row_count = segments.rows.size();
        result.trace.context_size = segments.context_size;
    } catch (const std::exception& e) {
        result.failed_stage = Stage::execute;
        result.error = e.what();
        return result;
    }

    try {
        result.answer = generator.generate(request.question, segments, plan.answer_schema);
    } catch (const std::exception& e) {
        result.failed_stage = Stage::generate;
        result.error = e.what();
        return result;
    }
    return result;
}

}  // namespace aq
