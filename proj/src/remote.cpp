#include "aq/remote.hpp"

#include "aq/errors.hpp"

#include <httplib.h>

#include <charconv>
#include <cstdlib>
#include <iostream>
#include <semaphore>

namespace aq {

using nlohmann::json;

namespace {

int parse_int_setting(const std::string& value, const std::string& name) {
    int out = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw ConfigError(name + " must be an integer, got '" + value + "'");
    return out;
}

void trace_line(const RemoteConfig& config, const std::string& direction,
                const std::string& body) {
    if (!config.trace) return;
    // API key never appears in bodies; it travels in the Authorization header,
    // which is not logged.
    std::cerr << "[remote] " << direction << " " << body << "\n";
}

}  // namespace

RemoteConfig remote_config_from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("remote config must be a JSON object");
    RemoteConfig config;
    for (const auto& item : doc.items()) {
        const std::string& key = item.key();
        const json& value = item.value();
        const auto expect_string = [&]() -> std::string {
            if (!value.is_string()) throw ConfigError(key + " must be a string");
            return value.get<std::string>();
        };
        const auto expect_int = [&]() -> int {
            if (!value.is_number_integer()) throw ConfigError(key + " must be an integer");
            return value.get<int>();
        };
        if (key == "endpoint") config.endpoint = expect_string();
        else if (key == "model") config.model = expect_string();
        else if (key == "api_key") config.api_key = expect_string();
        else if (key == "timeout_seconds") config.timeout_seconds = expect_int();
        else if (key == "retries") config.retries = expect_int();
        else if (key == "max_concurrent") config.max_concurrent = expect_int();
        else if (key == "trace") {
            if (!value.is_boolean()) throw ConfigError("trace must be a boolean");
            config.trace = value.get<bool>();
        } else {
            throw ConfigError("unknown remote config key '" + key + "'");
        }
    }
    return config;
}

void apply_env_overrides(RemoteConfig& config) {
    const auto get = [](const char* name) -> std::optional<std::string> {
        const char* value = std::getenv(name);
        if (!value) return std::nullopt;
        return std::string(value);
    };
    if (const auto v = get("AQ_ENDPOINT")) config.endpoint = *v;
    if (const auto v = get("AQ_MODEL")) config.model = *v;
    if (const auto v = get("AQ_API_KEY")) config.api_key = *v;
    if (const auto v = get("AQ_TIMEOUT_SECONDS"))
        config.timeout_seconds = parse_int_setting(*v, "AQ_TIMEOUT_SECONDS");
    if (const auto v = get("AQ_RETRIES")) config.retries = parse_int_setting(*v, "AQ_RETRIES");
    if (const auto v = get("AQ_MAX_CONCURRENT"))
        config.max_concurrent = parse_int_setting(*v, "AQ_MAX_CONCURRENT");
}

struct ChatClient::Gate {
    explicit Gate(int slots) : semaphore(slots) {}
    std::counting_semaphore<1024> semaphore;
};

ChatClient::ChatClient(RemoteConfig config) : config_(std::move(config)) {
    if (config_.timeout_seconds <= 0) throw ConfigError("timeout_seconds must be positive");
    if (config_.retries < 0) throw ConfigError("retries must be >= 0");
    if (config_.max_concurrent < 1 || config_.max_concurrent > 1024)
        throw ConfigError("max_concurrent must lie in [1, 1024]");
    gate_ = std::make_unique<Gate>(config_.max_concurrent);
}

ChatClient::~ChatClient() = default;

std::string ChatClient::complete(const std::string& system_prompt,
                                 const std::vector<Turn>& turns) const {
    if (config_.endpoint.empty()) throw RemoteError("no remote endpoint configured");

    json messages = json::array();
    messages.push_back({{"role", "system"}, {"content", system_prompt}});
    for (const Turn& turn : turns)
        messages.push_back({{"role", turn.role}, {"content", turn.content}});
    json body = {{"model", config_.model}, {"temperature", 0}, {"messages", std::move(messages)}};
    const std::string payload = body.dump();

    gate_->semaphore.acquire();
    struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
    } release{gate_->semaphore};

    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_write_timeout(config_.timeout_seconds, 0);

    httplib::Headers headers;
    if (!config_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + config_.api_key);

    trace_line(config_, ">>", payload);
    const auto result = client.Post("/v1/chat/completions", headers, payload, "application/json");
    if (!result)
        throw RemoteError("endpoint unreachable: " + httplib::to_string(result.error()));
    trace_line(config_, "<<", result->body);
    if (result->status != 200)
        throw RemoteError("remote returned status " + std::to_string(result->status) + ": " +
                          result->body.substr(0, 512));

    json reply = json::parse(result->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("choices") || !reply["choices"].is_array() ||
        reply["choices"].empty() || !reply["choices"][0].contains("message") ||
        !reply["choices"][0]["message"].contains("content") ||
        !reply["choices"][0]["message"]["content"].is_string())
        throw RemoteError("malformed completion response");
    return reply["choices"][0]["message"]["content"].get<std::string>();
}

RemoteLLMPlanner::RemoteLLMPlanner(RemoteConfig config) : client_(std::move(config)) {}

std::string RemoteLLMPlanner::system_prompt(const QueryRequest& request) {
    std::string prompt =
        "You translate an audio-understanding question into a JSON retrieval plan.\n"
        "Reply with one JSON object and nothing else. Top-level keys, all required:\n"
        "  streams: array from [\"transcript\", \"speaker\", \"emotion\", \"sound_event\"]\n"
        "  filters: object; optional keys text (keyword phrase), speaker (exact label),\n"
        "           emotion_labels (array), event_labels (array), event_score_min (0..1),\n"
        "           time_window ({\"start\": s, \"end\": s})\n"
        "  fusion: {\"anchor\": <one of streams>, \"tau\": seconds (optional)}\n"
        "  output: {\"return_fields\": array from [start, end, speaker, text, emotion, event, score]}\n"
        "  answer_schema: JSON-schema-like object with exactly one property named\n"
        "                 answer | order | labels | events, plus \"required\"\n"
        "Filters may only target selected streams. No other keys are allowed.\n";
    prompt += "Recording " + request.recording_id +
              " lasts " + format_number(request.db_metadata.duration) + " s. Streams present:";
    for (StreamKind kind : request.db_metadata.streams)
        prompt += " " + std::string(stream_name(kind));
    const auto list_some = [](const std::vector<std::string>& items) {
        std::string out;
        const std::size_t limit = std::min<std::size_t>(items.size(), 24);
        for (std::size_t i = 0; i < limit; ++i) out += (i ? ", " : "") + items[i];
        if (items.size() > limit) out += ", ...";
        return out;
    };
    if (!request.db_metadata.speaker_labels.empty())
        prompt += "\nKnown speakers: " + list_some(request.db_metadata.speaker_labels);
    if (!request.db_metadata.event_labels.empty())
        prompt += "\nKnown event labels: " + list_some(request.db_metadata.event_labels);
    return prompt;
}

RetrievalPlan RemoteLLMPlanner::plan(const QueryRequest& request) {
    std::vector<ChatClient::Turn> turns{{"user", request.question}};
    std::string last_error;
    const int attempts = 1 + client_.config().retries;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        std::string reply;
        try {
            reply = client_.complete(system_prompt(request), turns);
        } catch (const RemoteError& e) {
            throw RemoteError(std::string("planner_unavailable: ") + e.what());
        }
        try {
            return parse_plan(reply);
        } catch (const std::exception& e) {
            last_error = e.what();
            turns.push_back({"assistant", reply});
            turns.push_back({"user", std::string("The plan was rejected: ") + e.what() +
                                         "\nReply with a corrected JSON plan only."});
        }
    }
    throw RemoteError("plan_invalid_after_retries: " + last_error);
}

RemoteLLMGenerator::RemoteLLMGenerator(RemoteConfig config) : client_(std::move(config)) {}

std::string RemoteLLMGenerator::system_prompt(const AnswerSchema& schema) {
    std::string prompt =
        "You answer a question using only the tab-separated evidence rows supplied.\n"
        "Your reply must conform to this answer schema:\n" +
        serialize_answer_schema(schema) + "\n";
    switch (schema.kind) {
        case AnswerKind::free_text:
            prompt += "Reply with the answer text only.\n";
            break;
        case AnswerKind::enum_choice:
            prompt += "Reply with exactly one allowed enum value.\n";
            break;
        case AnswerKind::integer:
            prompt += "Reply with {\"answer\": <integer>}.\n";
            break;
        case AnswerKind::span_list:
            prompt += "Reply with {\"events\": [{\"label\", \"start\", \"end\"}, ...]}.\n";
            break;
        case AnswerKind::label_list:
            prompt += "Reply with {\"labels\": [...]}.\n";
            break;
        case AnswerKind::ordering:
            prompt += "Reply with {\"order\": [...]}, a permutation of 1.." +
                      std::to_string(schema.ordering_size) + ".\n";
            break;
    }
    if (schema.abstainable)
        prompt += "If the evidence cannot answer the question, reply exactly: " +
                  std::string(kAbstainReply) + "\n";
    return prompt;
}

Answer RemoteLLMGenerator::generate(const std::string& question,
                                    const RetrievedSegments& context,
                                    const AnswerSchema& schema) {
    std::string user = question + "\n\nEvidence rows:\n" +
                       (context.context_text.empty() ? "(none)" : context.context_text);
    std::string reply;
    try {
        reply = client_.complete(system_prompt(schema), {{"user", std::move(user)}});
    } catch (const RemoteError& e) {
        throw RemoteError(std::string("generator_unavailable: ") + e.what());
    }
    return parse_answer(std::move(reply), schema);
}

}  // namespace aq
