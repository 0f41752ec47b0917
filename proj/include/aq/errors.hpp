#pragma once

#include <stdexcept>
#include <string>

namespace aq {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input document (JSON, JSONL, RTTM). The message carries the
// file/line or byte position of the first offending token.
struct ParseError : Error {
    using Error::Error;
};

// Structurally parseable document that violates a contract rule. `rule` names
// the first violated rule so callers can re-prompt or report precisely.
struct ValidationError : Error {
    std::string rule;
    ValidationError(std::string rule_name, const std::string& msg)
        : Error(rule_name + ": " + msg), rule(std::move(rule_name)) {}
};

struct StoreError : Error {
    using Error::Error;
};
struct CompileError : Error {
    using Error::Error;
};
struct ExecError : Error {
    using Error::Error;
};
struct IngestError : Error {
    using Error::Error;
};
struct RemoteError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace aq
