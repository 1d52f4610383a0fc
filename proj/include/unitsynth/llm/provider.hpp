#pragma once

#include "unitsynth/common/json.hpp"
#include "unitsynth/llm/prompts.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace unitsynth::llm {

struct RequestMetadata {
    std::string candidate_id;
    std::string function_name; // lets mock scripts address units by name
    int round = 0;
    int attempt = 1;           // 2 for the single re-request after a rejected reply
};

struct CompletionRequest {
    std::string request_id;
    RoleId role = RoleId::test_generator;
    RenderedPrompt prompt;
    std::string model;
    Sampling sampling;
    RequestMetadata metadata;
};

struct TokenUsage {
    long long prompt_tokens = 0;
    long long completion_tokens = 0;

    long long total() const { return prompt_tokens + completion_tokens; }
};

/// Outcome of a single provider call. `status` follows HTTP conventions:
/// 200 success, 429 / 5xx / 0 (transport failure) transient, other 4xx fatal.
struct ProviderReply {
    int status = 0;
    std::string text;
    TokenUsage usage;
    std::string error;
};

struct CompletionResponse {
    std::string request_id;
    std::string text;
    TokenUsage usage;
    double latency_ms = 0;
    int status = 0;
    int attempts = 0;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual ProviderReply call(const CompletionRequest& request) = 0;
};

/// Raised by MockProvider when no script entry matches a request.
class MockLookupError : public Error {
public:
    using Error::Error;
};

/// Replays scripted replies keyed by (role, candidate or function name,
/// round, attempt). Omitted keys are wildcards; the entry with the most keys
/// set wins and file order breaks ties.
class MockProvider : public Provider {
public:
    struct Entry {
        RoleId role = RoleId::test_generator;
        std::optional<std::string> candidate;
        std::optional<std::string> function;
        std::optional<int> round;
        std::optional<int> attempt;
        int status = 200;
        std::string text;
    };

    explicit MockProvider(std::vector<Entry> entries);

    /// Reads the `responses` array of a mock script document.
    static MockProvider from_json(const json& script);
    static MockProvider from_file(const std::filesystem::path& path);

    ProviderReply call(const CompletionRequest& request) override;

private:
    std::vector<Entry> entries_;
};

/// Minimal HTTP POST seam so retry behaviour can be tested without a network.
class HttpTransport {
public:
    struct Response {
        int status = 0; // 0 when no HTTP response was received
        std::string body;
        std::string error;
    };
    virtual ~HttpTransport() = default;
    virtual Response post(const std::string& url, const std::map<std::string, std::string>& headers,
                          const std::string& body) = 0;
};

/// cpp-httplib backed transport (http and https).
class HttplibTransport : public HttpTransport {
public:
    explicit HttplibTransport(std::chrono::seconds timeout = std::chrono::seconds(120));
    Response post(const std::string& url, const std::map<std::string, std::string>& headers,
                  const std::string& body) override;

private:
    std::chrono::seconds timeout_;
};

/// OpenAI-compatible `/chat/completions` endpoint.
class ChatCompletionsProvider : public Provider {
public:
    ChatCompletionsProvider(std::shared_ptr<HttpTransport> transport, std::string base_url,
                            std::string api_key);

    ProviderReply call(const CompletionRequest& request) override;

    static json request_body(const CompletionRequest& request);

private:
    std::shared_ptr<HttpTransport> transport_;
    std::string endpoint_;
    std::string api_key_;
};

} // namespace unitsynth::llm
