#include "unitsynth/llm/gateway.hpp"

#include "unitsynth/common/json.hpp"

#include <algorithm>
#include <thread>

namespace unitsynth::llm {

namespace {

void real_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

} // namespace

std::chrono::milliseconds RetryPolicy::delay_for(int retry) const {
    const int shift = std::clamp(retry - 1, 0, 30);
    const auto raw = base_delay.count() * (1LL << shift);
    return std::chrono::milliseconds(std::min<long long>(raw, max_delay.count()));
}

bool RetryPolicy::is_transient(int status) { return status == 0 || status == 429 || status >= 500; }

TokenBucket::TokenBucket(double rate, double capacity, Clock clock, Sleeper sleeper)
    : rate_(rate),
      capacity_(std::max(1.0, capacity)),
      tokens_(std::max(1.0, capacity)),
      clock_(clock ? std::move(clock) : Clock([] { return std::chrono::steady_clock::now(); })),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper(real_sleep)),
      last_(clock_()) {}

void TokenBucket::acquire() {
    if (rate_ <= 0) {
        return;
    }
    while (true) {
        std::chrono::milliseconds wait{0};
        {
            std::lock_guard lock(mu_);
            const auto now = clock_();
            const double elapsed = std::chrono::duration<double>(now - last_).count();
            last_ = now;
            tokens_ = std::min(capacity_, tokens_ + elapsed * rate_);
            if (tokens_ >= 1.0) {
                tokens_ -= 1.0;
                return;
            }
            wait = std::chrono::milliseconds(static_cast<long long>((1.0 - tokens_) / rate_ * 1000.0) + 1);
        }
        sleeper_(wait);
    }
}

std::string make_request_id(RoleId role, const RequestMetadata& meta) {
    return std::string(role_name(role)) + ":" + meta.candidate_id + ":r" + std::to_string(meta.round) + ":a" +
           std::to_string(meta.attempt);
}

Gateway::Gateway(std::shared_ptr<Provider> provider, GatewayOptions options, Sleeper sleeper)
    : provider_(std::move(provider)),
      options_(std::move(options)),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper(real_sleep)),
      limiter_(options_.requests_per_second, options_.burst, {}, sleeper_) {
    if (!options_.audit_log.empty()) {
        if (options_.audit_log.has_parent_path()) {
            std::filesystem::create_directories(options_.audit_log.parent_path());
        }
        log_.open(options_.audit_log, std::ios::app | std::ios::binary);
        if (!log_) {
            throw IoError("cannot open audit log " + options_.audit_log.string());
        }
    }
}

void Gateway::check_budget() {
    const auto& b = options_.budget;
    if (b.max_requests > 0 && requests_.load() >= b.max_requests) {
        throw BudgetExceeded("request budget of " + std::to_string(b.max_requests) + " exhausted");
    }
    if (b.max_tokens > 0 && tokens_.load() >= b.max_tokens) {
        throw BudgetExceeded("token budget of " + std::to_string(b.max_tokens) + " exhausted");
    }
}

CompletionResponse Gateway::complete(const CompletionRequest& request) {
    int last_status = 0;
    std::string last_error;
    for (int attempt = 0; attempt <= options_.retry.max_retries; ++attempt) {
        if (attempt > 0) {
            sleeper_(options_.retry.delay_for(attempt));
        }
        check_budget();
        limiter_.acquire();
        ++requests_;
        const auto start = std::chrono::steady_clock::now();
        ProviderReply reply = provider_->call(request);
        const auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start);
        tokens_ += reply.usage.total();
        last_status = reply.status;
        last_error = reply.error;
        if (reply.status == 200) {
            CompletionResponse resp;
            resp.request_id = request.request_id;
            resp.text = std::move(reply.text);
            resp.usage = reply.usage;
            resp.latency_ms = elapsed.count();
            resp.status = reply.status;
            resp.attempts = attempt + 1;
            log(request, &resp, {});
            return resp;
        }
        if (!RetryPolicy::is_transient(reply.status)) {
            break;
        }
    }
    const std::string message = "provider failed for " + request.request_id + " (status " +
                                std::to_string(last_status) + "): " + last_error;
    log(request, nullptr, message);
    throw ProviderError(message, last_status);
}

CompletionResponse Gateway::complete(const AgentRole& role, const Slots& slots, const RequestMetadata& meta) {
    CompletionRequest req;
    req.role = role.id;
    req.prompt = render_prompt(role, slots);
    req.model = role.binding.model;
    req.sampling = role.sampling;
    req.metadata = meta;
    req.request_id = make_request_id(role.id, meta);
    return complete(req);
}

void Gateway::log(const CompletionRequest& request, const CompletionResponse* response, const std::string& error) {
    if (!log_.is_open()) {
        return;
    }
    json rec = {
        {"request_id", request.request_id},
        {"role", role_name(request.role)},
        {"candidate_id", request.metadata.candidate_id},
        {"round", request.metadata.round},
        {"attempt", request.metadata.attempt},
        {"model", request.model},
        {"prompt", request.prompt.user},
    };
    if (response != nullptr) {
        rec["status"] = response->status;
        rec["text"] = response->text;
        rec["usage"] = {{"prompt_tokens", response->usage.prompt_tokens},
                        {"completion_tokens", response->usage.completion_tokens}};
        rec["latency_ms"] = response->latency_ms;
        rec["provider_attempts"] = response->attempts;
    } else {
        rec["error"] = error;
    }
    std::lock_guard lock(log_mu_);
    log_ << jsonl_line(rec) << '\n';
    log_.flush();
}

} // namespace unitsynth::llm
