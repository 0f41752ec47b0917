#pragma once

#include "aq/gateway.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace aq {

// Remote chat-completion endpoint settings. Precedence when assembling a
// config: file values, then flags, then AQ_* environment overrides.
struct RemoteConfig {
    std::string endpoint;  // base URL, e.g. http://localhost:8089
    std::string model = "default";
    std::string api_key;
    int timeout_seconds = 30;
    int retries = 3;         // re-prompts after an invalid plan
    int max_concurrent = 4;  // in-flight request bound
    bool trace = false;      // log request/response bodies (key redacted)
};

RemoteConfig remote_config_from_json(const nlohmann::json& doc);

// AQ_ENDPOINT, AQ_MODEL, AQ_API_KEY, AQ_TIMEOUT_SECONDS, AQ_RETRIES,
// AQ_MAX_CONCURRENT. Environment wins over whatever is already set.
void apply_env_overrides(RemoteConfig& config);

// Minimal chat-completions client: POST {endpoint}/v1/chat/completions with
// a system prompt and alternating user/assistant turns; returns the first
// choice's message content. Bounds concurrent requests per config.
class ChatClient {
public:
    explicit ChatClient(RemoteConfig config);
    ~ChatClient();

    ChatClient(const ChatClient&) = delete;
    ChatClient& operator=(const ChatClient&) = delete;

    struct Turn {
        std::string role;  // "user" or "assistant"
        std::string content;
    };

    std::string complete(const std::string& system_prompt, const std::vector<Turn>& turns) const;

    const RemoteConfig& config() const { return config_; }

private:
    RemoteConfig config_;
    struct Gate;
    std::unique_ptr<Gate> gate_;
};

// Stage-2 planner backed by a remote model. The plan schema is embedded in
// the system prompt; schema-violating replies are re-prompted with the
// diagnostic up to config.retries times, then fail.
class RemoteLLMPlanner : public Planner {
public:
    explicit RemoteLLMPlanner(RemoteConfig config);

    RetrievalPlan plan(const QueryRequest& request) override;

    static std::string system_prompt(const QueryRequest& request);

private:
    ChatClient client_;
};

// Stage-4 generator backed by a remote model. Schema violations are recorded
// as parse failures, never repaired.
class RemoteLLMGenerator : public Generator {
public:
    explicit RemoteLLMGenerator(RemoteConfig config);

    Answer generate(const std::string& question, const RetrievedSegments& context,
                    const AnswerSchema& schema) override;

    static std::string system_prompt(const AnswerSchema& schema);

private:
    ChatClient client_;
};

}  // namespace aq
