#pragma once

#include "unitsynth/llm/provider.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>

namespace unitsynth::llm {

/// Retries exhausted or a non-retryable status; carries the last status.
class ProviderError : public Error {
public:
    ProviderError(const std::string& message, int last_status)
        : Error(message), last_status_(last_status) {}
    int last_status() const { return last_status_; }

private:
    int last_status_;
};

/// The configured request or token budget would be exceeded.
class BudgetExceeded : public Error {
public:
    using Error::Error;
};

struct RetryPolicy {
    int max_retries = 4;
    std::chrono::milliseconds base_delay{500};
    std::chrono::milliseconds max_delay{30000};

    /// Delay before retry number `retry` (1-based): base * 2^(retry-1), capped.
    std::chrono::milliseconds delay_for(int retry) const;
    static bool is_transient(int status);
};

struct Budget {
    long long max_requests = 0; // 0 = unlimited
    long long max_tokens = 0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;
using Clock = std::function<std::chrono::steady_clock::time_point()>;

/// Token bucket: `rate` permits per second, bursts up to `capacity`.
/// A non-positive rate disables limiting.
class TokenBucket {
public:
    TokenBucket(double rate, double capacity, Clock clock = {}, Sleeper sleeper = {});

    void acquire();

private:
    double rate_;
    double capacity_;
    double tokens_;
    Clock clock_;
    Sleeper sleeper_;
    std::chrono::steady_clock::time_point last_;
    std::mutex mu_;
};

struct GatewayOptions {
    RetryPolicy retry;
    double requests_per_second = 0;
    double burst = 1;
    Budget budget;
    std::filesystem::path audit_log; // empty = no log
};

/// Thread-safe front door to a provider: rate limiting, budget accounting,
/// retries with exponential backoff and an append-only audit log.
class Gateway {
public:
    Gateway(std::shared_ptr<Provider> provider, GatewayOptions options, Sleeper sleeper = {});

    CompletionResponse complete(const CompletionRequest& request);

    /// Renders the role's prompt and completes it.
    CompletionResponse complete(const AgentRole& role, const Slots& slots, const RequestMetadata& meta);

    long long requests_sent() const { return requests_.load(); }
    long long tokens_used() const { return tokens_.load(); }

private:
    void check_budget();
    void log(const CompletionRequest& request, const CompletionResponse* response, const std::string& error);

    std::shared_ptr<Provider> provider_;
    GatewayOptions options_;
    Sleeper sleeper_;
    TokenBucket limiter_;
    std::atomic<long long> requests_{0};
    std::atomic<long long> tokens_{0};
    std::mutex log_mu_;
    std::ofstream log_;
};

std::string make_request_id(RoleId role, const RequestMetadata& meta);

} // namespace unitsynth::llm
