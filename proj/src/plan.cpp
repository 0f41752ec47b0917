#include "aq/plan.hpp"

#include "aq/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <set>
#include <string>

namespace aq {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(const std::string& rule, const std::string& msg) {
    throw ValidationError(rule, msg);
}

void require_object(const json& value, const char* where) {
    if (!value.is_object()) fail("type_error", std::string(where) + " must be a JSON object");
}

const json& require_key(const json& obj, const char* key, const char* where) {
    if (!obj.contains(key))
        fail("missing_key", std::string(where) + " requires key '" + key + "'");
    return obj.at(key);
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const char* where) {
    for (const auto& item : obj.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) {
            return item.key() == k;
        });
        if (!known) fail("unknown_key", std::string(where) + " has unknown key '" + item.key() + "'");
    }
}

std::string require_string(const json& value, const char* where) {
    if (!value.is_string()) fail("type_error", std::string(where) + " must be a string");
    return value.get<std::string>();
}

double require_number(const json& value, const char* where) {
    if (!value.is_number()) fail("type_error", std::string(where) + " must be a number");
    const double v = value.get<double>();
    if (!std::isfinite(v)) fail("type_error", std::string(where) + " must be finite");
    return v;
}

std::vector<std::string> require_label_array(const json& value, const char* where) {
    if (!value.is_array()) fail("type_error", std::string(where) + " must be an array");
    if (value.empty()) fail("empty_array", std::string(where) + " must not be empty");
    std::vector<std::string> out;
    for (const auto& item : value) {
        std::string label = require_string(item, where);
        if (label.empty()) fail("empty_value", std::string(where) + " contains an empty label");
        if (std::find(out.begin(), out.end(), label) != out.end())
            fail("duplicate_value", std::string(where) + " repeats label '" + label + "'");
        out.push_back(std::move(label));
    }
    return out;
}

std::vector<StreamKind> parse_streams(const json& value) {
    if (!value.is_array()) fail("type_error", "streams must be an array");
    if (value.empty()) fail("empty_streams", "streams must select at least one stream");
    std::vector<StreamKind> out;
    for (const auto& item : value) {
        const std::string name = require_string(item, "streams entry");
        const auto kind = parse_stream_name(name);
        if (!kind) fail("unknown_stream", "unknown stream name '" + name + "'");
        if (std::find(out.begin(), out.end(), *kind) != out.end())
            fail("duplicate_stream", "stream '" + std::string(stream_name(*kind)) +
                                         "' selected more than once");
        out.push_back(*kind);
    }
    return out;
}

FilterSet parse_filters(const json& value) {
    require_object(value, "filters");
    check_keys(value,
               {"text", "speaker", "emotion_labels", "event_labels", "event_score_min",
                "time_window"},
               "filters");
    FilterSet filters;
    if (value.contains("text")) {
        filters.text = require_string(value.at("text"), "filters.text");
        if (filters.text->empty()) fail("empty_value", "filters.text must not be empty");
    }
    if (value.contains("speaker")) {
        filters.speaker = require_string(value.at("speaker"), "filters.speaker");
        if (filters.speaker->empty()) fail("empty_value", "filters.speaker must not be empty");
    }
    if (value.contains("emotion_labels"))
        filters.emotion_labels = require_label_array(value.at("emotion_labels"),
                                                     "filters.emotion_labels");
    if (value.contains("event_labels"))
        filters.event_labels = require_label_array(value.at("event_labels"),
                                                   "filters.event_labels");
    if (value.contains("event_score_min"))
        filters.event_score_min = require_number(value.at("event_score_min"),
                                                 "filters.event_score_min");
    if (value.contains("time_window")) {
        const json& window = value.at("time_window");
        require_object(window, "filters.time_window");
        check_keys(window, {"start", "end"}, "filters.time_window");
        TimeSpan span;
        span.start = require_number(require_key(window, "start", "filters.time_window"),
                                    "filters.time_window.start");
        span.end = require_number(require_key(window, "end", "filters.time_window"),
                                  "filters.time_window.end");
        filters.time_window = span;
    }
    return filters;
}

FusionSpec parse_fusion(const json& value) {
    require_object(value, "fusion");
    check_keys(value, {"anchor", "tau"}, "fusion");
    FusionSpec fusion;
    const std::string anchor = require_string(require_key(value, "anchor", "fusion"),
                                              "fusion.anchor");
    const auto kind = parse_stream_name(anchor);
    if (!kind) fail("unknown_stream", "unknown fusion.anchor stream '" + anchor + "'");
    fusion.anchor = *kind;
    if (value.contains("tau")) fusion.tau = require_number(value.at("tau"), "fusion.tau");
    return fusion;
}

OutputSpec parse_output(const json& value) {
    require_object(value, "output");
    check_keys(value, {"return_fields"}, "output");
    const json& fields = require_key(value, "return_fields", "output");
    if (!fields.is_array()) fail("type_error", "output.return_fields must be an array");
    if (fields.empty()) fail("empty_fields", "output.return_fields must not be empty");
    OutputSpec output;
    for (const auto& item : fields) {
        const std::string name = require_string(item, "return_fields entry");
        const auto field = parse_field_name(name);
        if (!field) fail("unknown_field", "unknown return field '" + name + "'");
        if (std::find(output.return_fields.begin(), output.return_fields.end(), *field) !=
            output.return_fields.end())
            fail("duplicate_field", "return field '" + name + "' listed more than once");
        output.return_fields.push_back(*field);
    }
    return output;
}

// The answer schema uses a fixed JSON-schema-flavored shape: exactly one
// property whose name selects the kind, plus the matching "required" list
// and an optional "abstainable" flag.
AnswerSchema parse_answer_schema(const json& value) {
    require_object(value, "answer_schema");
    check_keys(value, {"properties", "required", "abstainable"}, "answer_schema");
    const json& properties = require_key(value, "properties", "answer_schema");
    require_object(properties, "answer_schema.properties");
    if (properties.size() != 1)
        fail("schema_shape", "answer_schema.properties must declare exactly one property");
    const std::string prop_name = properties.begin().key();
    const json& prop = properties.begin().value();
    require_object(prop, "answer_schema property");

    AnswerSchema schema;
    if (prop_name == "answer") {
        check_keys(prop, {"type", "enum"}, "answer_schema.properties.answer");
        const std::string type = require_string(require_key(prop, "type", "answer property"),
                                                "answer type");
        if (type == "integer") {
            if (prop.contains("enum"))
                fail("schema_shape", "integer answers do not take an enum");
            schema.kind = AnswerKind::integer;
        } else if (type == "string") {
            if (prop.contains("enum")) {
                schema.kind = AnswerKind::enum_choice;
                schema.enum_values = require_label_array(prop.at("enum"), "answer enum");
            } else {
                schema.kind = AnswerKind::free_text;
            }
        } else {
            fail("schema_shape", "answer type must be 'string' or 'integer', got '" + type + "'");
        }
    } else if (prop_name == "order" || prop_name == "labels" || prop_name == "events") {
        const bool is_order = prop_name == "order";
        if (is_order)
            check_keys(prop, {"type", "items", "minItems", "maxItems"},
                       "answer_schema.properties.order");
        else
            check_keys(prop, {"type", "items"}, "answer_schema list property");
        const std::string type = require_string(require_key(prop, "type", "list property"),
                                                "list property type");
        if (type != "array")
            fail("schema_shape", "property '" + prop_name + "' must have type 'array'");
        const json& items = require_key(prop, "items", "list property");
        require_object(items, "list property items");
        check_keys(items, {"type"}, "list property items");
        const std::string item_type = require_string(require_key(items, "type", "items"),
                                                     "items type");
        if (is_order) {
            if (item_type != "integer") fail("schema_shape", "order items must be integers");
            const json& min_items = require_key(prop, "minItems", "order property");
            const json& max_items = require_key(prop, "maxItems", "order property");
            if (!min_items.is_number_integer() || !max_items.is_number_integer())
                fail("type_error", "minItems/maxItems must be integers");
            const int n = min_items.get<int>();
            if (max_items.get<int>() != n)
                fail("schema_shape", "order minItems and maxItems must be equal");
            schema.kind = AnswerKind::ordering;
            schema.ordering_size = n;
        } else if (prop_name == "labels") {
            if (item_type != "string") fail("schema_shape", "labels items must be strings");
            schema.kind = AnswerKind::label_list;
        } else {
            if (item_type != "object") fail("schema_shape", "events items must be objects");
            schema.kind = AnswerKind::span_list;
        }
    } else {
        fail("schema_shape", "unknown answer property '" + prop_name + "'");
    }

    const json& required = require_key(value, "required", "answer_schema");
    if (!required.is_array() || required.size() != 1 || !required.front().is_string() ||
        required.front().get<std::string>() != prop_name)
        fail("schema_shape", "answer_schema.required must be exactly [\"" + prop_name + "\"]");

    if (value.contains("abstainable")) {
        const json& flag = value.at("abstainable");
        if (!flag.is_boolean()) fail("type_error", "abstainable must be a boolean");
        schema.abstainable = flag.get<bool>();
    }
    return schema;
}

bool has_stream(const std::vector<StreamKind>& streams, StreamKind kind) {
    return std::find(streams.begin(), streams.end(), kind) != streams.end();
}

ordered_json answer_schema_to_json(const AnswerSchema& schema) {
    ordered_json prop;
    std::string prop_name;
    switch (schema.kind) {
        case AnswerKind::free_text:
            prop_name = "answer";
            prop["type"] = "string";
            break;
        case AnswerKind::enum_choice:
            prop_name = "answer";
            prop["type"] = "string";
            prop["enum"] = schema.enum_values;
            break;
        case AnswerKind::integer:
            prop_name = "answer";
            prop["type"] = "integer";
            break;
        case AnswerKind::span_list:
            prop_name = "events";
            prop["type"] = "array";
            prop["items"] = ordered_json{{"type", "object"}};
            break;
        case AnswerKind::label_list:
            prop_name = "labels";
            prop["type"] = "array";
            prop["items"] = ordered_json{{"type", "string"}};
            break;
        case AnswerKind::ordering:
            prop_name = "order";
            prop["type"] = "array";
            prop["items"] = ordered_json{{"type", "integer"}};
            prop["minItems"] = schema.ordering_size;
            prop["maxItems"] = schema.ordering_size;
            break;
    }
    ordered_json out;
    out["properties"] = ordered_json{{prop_name, prop}};
    out["required"] = ordered_json::array({prop_name});
    if (schema.abstainable) out["abstainable"] = true;
    return out;
}

}  // namespace

std::string_view field_name(ReturnField field) {
    switch (field) {
        case ReturnField::start: return "start";
        case ReturnField::end: return "end";
        case ReturnField::speaker: return "speaker";
        case ReturnField::text: return "text";
        case ReturnField::emotion: return "emotion";
        case ReturnField::event: return "event";
        case ReturnField::score: return "score";
    }
    return "?";
}

std::optional<ReturnField> parse_field_name(std::string_view name) {
    if (name == "start") return ReturnField::start;
    if (name == "end") return ReturnField::end;
    if (name == "speaker") return ReturnField::speaker;
    if (name == "text") return ReturnField::text;
    if (name == "emotion") return ReturnField::emotion;
    if (name == "event") return ReturnField::event;
    if (name == "score") return ReturnField::score;
    return std::nullopt;
}

std::string_view answer_kind_name(AnswerKind kind) {
    switch (kind) {
        case AnswerKind::free_text: return "free_text";
        case AnswerKind::enum_choice: return "enum_choice";
        case AnswerKind::integer: return "integer";
        case AnswerKind::span_list: return "span_list";
        case AnswerKind::label_list: return "label_list";
        case AnswerKind::ordering: return "ordering";
    }
    return "?";
}

RetrievalPlan parse_plan(std::string_view document) {
    json root;
    try {
        root = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("plan document: ") + e.what());
    }
    require_object(root, "plan");
    check_keys(root, {"streams", "filters", "fusion", "output", "answer_schema"}, "plan");

    RetrievalPlan plan;
    plan.streams = parse_streams(require_key(root, "streams", "plan"));
    plan.filters = parse_filters(require_key(root, "filters", "plan"));
    plan.fusion = parse_fusion(require_key(root, "fusion", "plan"));
    plan.output = parse_output(require_key(root, "output", "plan"));
    plan.answer_schema = parse_answer_schema(require_key(root, "answer_schema", "plan"));
    validate_plan(plan);
    return plan;
}

void validate_plan(const RetrievalPlan& plan) {
    if (plan.streams.empty()) fail("empty_streams", "plan selects no streams");
    for (std::size_t i = 0; i < plan.streams.size(); ++i)
        for (std::size_t j = i + 1; j < plan.streams.size(); ++j)
            if (plan.streams[i] == plan.streams[j])
                fail("duplicate_stream", "stream '" +
                                             std::string(stream_name(plan.streams[i])) +
                                             "' selected more than once");

    if (!has_stream(plan.streams, plan.fusion.anchor))
        fail("anchor_not_selected", "fusion.anchor '" +
                                        std::string(stream_name(plan.fusion.anchor)) +
                                        "' is not among the selected streams");
    if (plan.fusion.tau && !(*plan.fusion.tau > 0.0 && std::isfinite(*plan.fusion.tau)))
        fail("invalid_tau", "fusion.tau must be a positive number");

    const FilterSet& f = plan.filters;
    if (f.text && !has_stream(plan.streams, StreamKind::transcript))
        fail("filter_without_stream", "filters.text requires the transcript stream");
    if (f.text && f.text->empty()) fail("empty_value", "filters.text must not be empty");
    if (f.speaker && !has_stream(plan.streams, StreamKind::speaker))
        fail("filter_without_stream", "filters.speaker requires the speaker stream");
    if (f.speaker && f.speaker->empty()) fail("empty_value", "filters.speaker must not be empty");
    if (f.emotion_labels && !has_stream(plan.streams, StreamKind::emotion))
        fail("filter_without_stream", "filters.emotion_labels requires the emotion stream");
    if (f.emotion_labels && f.emotion_labels->empty())
        fail("empty_array", "filters.emotion_labels must not be empty");
    if (f.event_labels && !has_stream(plan.streams, StreamKind::sound_event))
        fail("filter_without_stream", "filters.event_labels requires the sound_event stream");
    if (f.event_labels && f.event_labels->empty())
        fail("empty_array", "filters.event_labels must not be empty");
    if (f.event_score_min && !has_stream(plan.streams, StreamKind::sound_event))
        fail("filter_without_stream", "filters.event_score_min requires the sound_event stream");
    if (f.event_score_min && !(*f.event_score_min >= 0.0 && *f.event_score_min <= 1.0))
        fail("invalid_score", "filters.event_score_min must lie in [0, 1]");
    if (f.time_window && !f.time_window->valid())
        fail("invalid_window", "filters.time_window must satisfy 0 <= start <= end");

    if (plan.output.return_fields.empty())
        fail("empty_fields", "output.return_fields must not be empty");
    for (ReturnField field : plan.output.return_fields) {
        const char* missing = nullptr;
        switch (field) {
            case ReturnField::start:
            case ReturnField::end: break;
            case ReturnField::speaker:
                if (!has_stream(plan.streams, StreamKind::speaker)) missing = "speaker";
                break;
            case ReturnField::text:
                if (!has_stream(plan.streams, StreamKind::transcript)) missing = "transcript";
                break;
            case ReturnField::emotion:
                if (!has_stream(plan.streams, StreamKind::emotion)) missing = "emotion";
                break;
            case ReturnField::event:
                if (!has_stream(plan.streams, StreamKind::sound_event)) missing = "sound_event";
                break;
            case ReturnField::score:
                if (!has_stream(plan.streams, StreamKind::sound_event) &&
                    !has_stream(plan.streams, StreamKind::emotion))
                    missing = "emotion or sound_event";
                break;
        }
        if (missing)
            fail("unresolvable_field", "return field '" + std::string(field_name(field)) +
                                           "' requires the " + missing + " stream");
    }

    const AnswerSchema& schema = plan.answer_schema;
    if (schema.kind == AnswerKind::enum_choice) {
        if (schema.enum_values.empty())
            fail("empty_enum", "enum_choice requires at least one value");
        std::set<std::string> seen;
        for (const auto& v : schema.enum_values) {
            if (v.empty()) fail("empty_value", "enum values must not be empty");
            if (!seen.insert(v).second)
                fail("duplicate_value", "enum value '" + v + "' repeats");
        }
    } else if (!schema.enum_values.empty()) {
        fail("schema_shape", "enum values only apply to enum_choice answers");
    }
    if (schema.kind == AnswerKind::ordering) {
        if (schema.ordering_size < 2)
            fail("invalid_ordering", "ordering answers need at least two items");
    } else if (schema.ordering_size != 0) {
        fail("schema_shape", "ordering_size only applies to ordering answers");
    }
}

RetrievalPlan canonicalize(RetrievalPlan plan) {
    std::vector<StreamKind> ordered;
    ordered.push_back(plan.fusion.anchor);
    for (StreamKind kind : kAllStreams) {
        if (kind != plan.fusion.anchor && has_stream(plan.streams, kind)) ordered.push_back(kind);
    }
    plan.streams = std::move(ordered);

    std::vector<ReturnField> fields;
    for (ReturnField field : plan.output.return_fields) {
        if (std::find(fields.begin(), fields.end(), field) == fields.end())
            fields.push_back(field);
    }
    plan.output.return_fields = std::move(fields);

    if (!plan.fusion.tau) plan.fusion.tau = kDefaultTau;
    if (has_stream(plan.streams, StreamKind::sound_event) && !plan.filters.event_score_min)
        plan.filters.event_score_min = kDefaultEventScoreMin;
    return plan;
}

std::string serialize_plan(const RetrievalPlan& plan) {
    const RetrievalPlan p = canonicalize(plan);
    ordered_json root;

    ordered_json streams = ordered_json::array();
    for (StreamKind kind : p.streams) streams.push_back(std::string(stream_name(kind)));
    root["streams"] = std::move(streams);

    ordered_json filters = ordered_json::object();
    if (p.filters.text) filters["text"] = *p.filters.text;
    if (p.filters.speaker) filters["speaker"] = *p.filters.speaker;
    if (p.filters.emotion_labels) filters["emotion_labels"] = *p.filters.emotion_labels;
    if (p.filters.event_labels) filters["event_labels"] = *p.filters.event_labels;
    if (p.filters.event_score_min) filters["event_score_min"] = *p.filters.event_score_min;
    if (p.filters.time_window)
        filters["time_window"] = ordered_json{{"start", p.filters.time_window->start},
                                              {"end", p.filters.time_window->end}};
    root["filters"] = std::move(filters);

    root["fusion"] = ordered_json{{"anchor", std::string(stream_name(p.fusion.anchor))},
                                  {"tau", *p.fusion.tau}};
    ordered_json fields = ordered_json::array();
    for (ReturnField field : p.output.return_fields)
        fields.push_back(std::string(field_name(field)));
    root["output"] = ordered_json{{"return_fields", std::move(fields)}};
    root["answer_schema"] = answer_schema_to_json(p.answer_schema);
    return root.dump();
}

std::string serialize_answer_schema(const AnswerSchema& schema) {
    return answer_schema_to_json(schema).dump();
}

}  // namespace aq
