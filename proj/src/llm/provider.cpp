#include "unitsynth/llm/provider.hpp"

#include "unitsynth/common/text.hpp"

namespace unitsynth::llm {

namespace {

long long count_tokens(std::string_view s) { return static_cast<long long>(whitespace_tokens(s).size()); }

int specificity(const MockProvider::Entry& e) {
    return (e.candidate ? 1 : 0) + (e.function ? 1 : 0) + (e.round ? 1 : 0) + (e.attempt ? 1 : 0);
}

} // namespace

MockProvider::MockProvider(std::vector<Entry> entries) : entries_(std::move(entries)) {}

MockProvider MockProvider::from_json(const json& script) {
    std::vector<Entry> entries;
    if (!script.is_object()) {
        throw ConfigError("mock script must be a JSON object");
    }
    const auto it = script.find("responses");
    if (it == script.end()) {
        return MockProvider({});
    }
    try {
        for (const auto& r : *it) {
            Entry e;
            e.role = role_from_name(r.at("role").get<std::string>());
            if (r.contains("candidate")) {
                e.candidate = r["candidate"].get<std::string>();
            }
            if (r.contains("function")) {
                e.function = r["function"].get<std::string>();
            }
            if (r.contains("round")) {
                e.round = r["round"].get<int>();
            }
            if (r.contains("attempt")) {
                e.attempt = r["attempt"].get<int>();
            }
            e.status = r.value("status", 200);
            e.text = r.value("text", std::string());
            entries.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed mock script: ") + e.what());
    }
    return MockProvider(std::move(entries));
}

MockProvider MockProvider::from_file(const std::filesystem::path& path) {
    return from_json(read_json_file(path));
}

ProviderReply MockProvider::call(const CompletionRequest& request) {
    const Entry* best = nullptr;
    int best_score = -1;
    const auto& m = request.metadata;
    for (const auto& e : entries_) {
        if (e.role != request.role || (e.candidate && *e.candidate != m.candidate_id) ||
            (e.function && *e.function != m.function_name) || (e.round && *e.round != m.round) ||
            (e.attempt && *e.attempt != m.attempt)) {
            continue;
        }
        const int score = specificity(e);
        if (score > best_score) {
            best = &e;
            best_score = score;
        }
    }
    if (best == nullptr) {
        throw MockLookupError("mock script has no response for role=" + std::string(role_name(request.role)) +
                              " candidate=" + m.candidate_id + " function=" + m.function_name +
                              " round=" + std::to_string(m.round) + " attempt=" + std::to_string(m.attempt));
    }
    ProviderReply reply;
    reply.status = best->status;
    reply.text = best->text;
    reply.usage.prompt_tokens = count_tokens(request.prompt.system) + count_tokens(request.prompt.user);
    reply.usage.completion_tokens = count_tokens(best->text);
    if (reply.status != 200) {
        reply.error = "scripted status " + std::to_string(reply.status);
    }
    return reply;
}

ChatCompletionsProvider::ChatCompletionsProvider(std::shared_ptr<HttpTransport> transport, std::string base_url,
                                                 std::string api_key)
    : transport_(std::move(transport)), api_key_(std::move(api_key)) {
    while (!base_url.empty() && base_url.back() == '/') {
        base_url.pop_back();
    }
    endpoint_ = base_url + "/chat/completions";
}

json ChatCompletionsProvider::request_body(const CompletionRequest& request) {
    json body = {
        {"model", request.model},
        {"messages",
         json::array({{{"role", "system"}, {"content", request.prompt.system}},
                      {{"role", "user"}, {"content", request.prompt.user}}})},
        {"temperature", request.sampling.temperature},
        {"max_tokens", request.sampling.max_tokens},
    };
    if (request.sampling.seed) {
        body["seed"] = *request.sampling.seed;
    }
    return body;
}

ProviderReply ChatCompletionsProvider::call(const CompletionRequest& request) {
    std::map<std::string, std::string> headers{{"Content-Type", "application/json"}};
    if (!api_key_.empty()) {
        headers["Authorization"] = "Bearer " + api_key_;
    }
    const auto resp = transport_->post(endpoint_, headers, request_body(request).dump());
    ProviderReply reply;
    reply.status = resp.status;
    if (resp.status != 200) {
        reply.error = resp.error.empty() ? resp.body.substr(0, 500) : resp.error;
        return reply;
    }
    try {
        const auto j = json::parse(resp.body);
        reply.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        if (const auto u = j.find("usage"); u != j.end() && u->is_object()) {
            reply.usage.prompt_tokens = u->value("prompt_tokens", 0LL);
            reply.usage.completion_tokens = u->value("completion_tokens", 0LL);
        }
    } catch (const json::exception& e) {
        // a 200 with an unusable body is treated like a server fault
        reply.status = 502;
        reply.error = std::string("unparseable completion body: ") + e.what();
    }
    return reply;
}

} // namespace unitsynth::llm
