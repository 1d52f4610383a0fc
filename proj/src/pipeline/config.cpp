#include "unitsynth/pipeline/config.hpp"

#include "unitsynth/common/hash.hpp"
#include "unitsynth/common/parallel.hpp"
#include "unitsynth/common/text.hpp"

#include <algorithm>
#include <set>

namespace unitsynth::pipeline {

namespace fs = std::filesystem;

namespace {

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    if (!obj.is_object()) {
        throw ConfigError(where + " must be an object");
    }
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (allowed.count(it.key()) == 0) {
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
        }
    }
}

template <class T>
T get(const json& obj, const char* key, const std::string& where, T fallback) {
    if (!obj.contains(key) || obj[key].is_null()) {
        return fallback;
    }
    try {
        return obj[key].get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

fs::path existing(const fs::path& base, const json& obj, const char* key, const std::string& where,
                  bool directory = false) {
    if (!obj.contains(key) || !obj[key].is_string()) {
        throw ConfigError(where + "." + key + " is required");
    }
    auto p = resolve(base, obj[key].get<std::string>());
    const bool ok = directory ? fs::is_directory(p) : fs::is_regular_file(p);
    if (!ok) {
        throw ConfigError(where + "." + key + ": no such " + (directory ? "directory" : "file") + " " + p.string());
    }
    return p;
}

std::string file_hash(const fs::path& p) { return sha256_file_hex(p); }

std::string directory_hash(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    Sha256 h;
    for (const auto& f : files) {
        h.update(fs::relative(f, dir).generic_string());
        h.update(std::string(1, '\0'));
        h.update(sha256_file_hex(f));
    }
    return h.hex_digest();
}

} // namespace

bool PipelineConfig::uses_mock_provider() const {
    for (const auto& [id, r] : roles) {
        if (r.binding.provider == "mock") {
            return true;
        }
    }
    return false;
}

PipelineConfig parse_config(const json& doc, const fs::path& base, const Overrides& ov) {
    PipelineConfig c;
    c.raw = doc;
    check_keys(doc, "config",
               {"corpus", "blocklist", "shingle_length", "allowlist", "denylist", "max_source_chars", "prompts_dir",
                "roles", "http", "gateway", "max_round", "execution", "include_unrefined", "output_dir",
                "bucket_edges", "eval_items", "mock_script"});

    if (!doc.contains("corpus")) {
        throw ConfigError("config.corpus is required");
    }
    check_keys(doc["corpus"], "corpus", {"source", "format"});
    c.corpus_source = existing(base, doc["corpus"], "source", "corpus");
    c.corpus_format = get<std::string>(doc["corpus"], "format", "corpus", "jsonl");
    if (c.corpus_format != "jsonl") {
        throw ConfigError("corpus.format: only 'jsonl' is supported");
    }
    if (doc.contains("blocklist") && !doc["blocklist"].is_null()) {
        c.blocklist = existing(base, doc, "blocklist", "config", true);
    }
    c.shingle_length = get<size_t>(doc, "shingle_length", "config", 13);
    if (c.shingle_length < 8) {
        throw ConfigError("shingle_length must be >= 8");
    }
    c.allowlist = existing(base, doc, "allowlist", "config");
    c.denylist = existing(base, doc, "denylist", "config");
    c.max_source_chars = get<size_t>(doc, "max_source_chars", "config", 4096);
    if (doc.contains("prompts_dir") && !doc["prompts_dir"].is_null()) {
        c.prompts_dir = existing(base, doc, "prompts_dir", "config", true);
    }

    for (auto id : {llm::RoleId::test_generator, llm::RoleId::bug_fixer, llm::RoleId::refiner}) {
        auto role = llm::AgentRole::with_defaults(id);
        if (c.prompts_dir) {
            role.prompt = llm::load_template(*c.prompts_dir, id);
        }
        const std::string name(llm::role_name(id));
        if (doc.contains("roles") && doc["roles"].contains(name)) {
            const auto& r = doc["roles"][name];
            const auto where = "roles." + name;
            check_keys(r, where, {"provider", "model", "temperature", "max_tokens", "seed"});
            role.binding.provider = get<std::string>(r, "provider", where, role.binding.provider);
            role.binding.model = get<std::string>(r, "model", where, role.binding.model);
            role.sampling.temperature = get<double>(r, "temperature", where, role.sampling.temperature);
            role.sampling.max_tokens = get<int>(r, "max_tokens", where, role.sampling.max_tokens);
            if (r.contains("seed") && !r["seed"].is_null()) {
                role.sampling.seed = get<long long>(r, "seed", where, 0);
            }
            if (role.binding.provider != "mock" && role.binding.provider != "http") {
                throw ConfigError(where + ".provider must be 'mock' or 'http'");
            }
            if (role.sampling.max_tokens < 1 || role.sampling.temperature < 0) {
                throw ConfigError(where + ": sampling values out of range");
            }
        }
        c.roles[id] = std::move(role);
    }
    if (doc.contains("roles")) {
        check_keys(doc["roles"], "roles", {"test_generator", "bug_fixer", "refiner"});
    }

    if (doc.contains("http")) {
        check_keys(doc["http"], "http", {"base_url", "api_key_env", "timeout_seconds"});
        c.http.base_url = get<std::string>(doc["http"], "base_url", "http", "");
        c.http.api_key_env = get<std::string>(doc["http"], "api_key_env", "http", c.http.api_key_env);
        c.http.timeout_seconds = get<int>(doc["http"], "timeout_seconds", "http", c.http.timeout_seconds);
    }
    for (const auto& [id, r] : c.roles) {
        if (r.binding.provider == "http" && c.http.base_url.empty()) {
            throw ConfigError("http.base_url is required when a role uses the http provider");
        }
    }

    if (doc.contains("gateway")) {
        const auto& g = doc["gateway"];
        check_keys(g, "gateway",
                   {"requests_per_second", "burst", "max_retries", "base_delay_ms", "max_delay_ms", "max_requests",
                    "max_tokens"});
        c.gateway.requests_per_second = get<double>(g, "requests_per_second", "gateway", 0);
        c.gateway.burst = get<double>(g, "burst", "gateway", 1);
        c.gateway.retry.max_retries = get<int>(g, "max_retries", "gateway", c.gateway.retry.max_retries);
        c.gateway.retry.base_delay =
            std::chrono::milliseconds(get<long long>(g, "base_delay_ms", "gateway", c.gateway.retry.base_delay.count()));
        c.gateway.retry.max_delay =
            std::chrono::milliseconds(get<long long>(g, "max_delay_ms", "gateway", c.gateway.retry.max_delay.count()));
        c.gateway.budget.max_requests = get<long long>(g, "max_requests", "gateway", 0);
        c.gateway.budget.max_tokens = get<long long>(g, "max_tokens", "gateway", 0);
        if (c.gateway.retry.max_retries < 0 || c.gateway.budget.max_requests < 0 || c.gateway.budget.max_tokens < 0) {
            throw ConfigError("gateway values must be non-negative");
        }
    }

    c.max_round = get<int>(doc, "max_round", "config", 3);
    if (c.max_round < 0) {
        throw ConfigError("max_round must be >= 0");
    }

    c.execution.parallelism = default_parallelism();
    if (doc.contains("execution")) {
        const auto& e = doc["execution"];
        check_keys(e, "execution",
                   {"executor", "worker_command", "timeout_seconds", "flake_retries", "error_retries", "parallelism",
                    "grace_seconds"});
        c.execution.executor = get<std::string>(e, "executor", "execution", "stub");
        c.execution.worker_command = get<std::vector<std::string>>(e, "worker_command", "execution", {});
        c.execution.policy.timeout_seconds = get<double>(e, "timeout_seconds", "execution", 30);
        c.execution.policy.flake_retries = get<int>(e, "flake_retries", "execution", 1);
        c.execution.policy.error_retries = get<int>(e, "error_retries", "execution", 0);
        c.execution.parallelism = get<int>(e, "parallelism", "execution", c.execution.parallelism);
        c.execution.grace_seconds = get<double>(e, "grace_seconds", "execution", 5);
    }
    if (ov.parallelism) {
        c.execution.parallelism = *ov.parallelism;
    }
    if (c.execution.executor != "stub" && c.execution.executor != "process") {
        throw ConfigError("execution.executor must be 'stub' or 'process'");
    }
    if (c.execution.executor == "process" && c.execution.worker_command.empty()) {
        throw ConfigError("execution.worker_command is required for the process executor");
    }
    if (c.execution.parallelism < 1) {
        throw ConfigError("parallelism must be >= 1");
    }
    if (c.execution.policy.timeout_seconds <= 0 || c.execution.grace_seconds < 0 ||
        c.execution.policy.flake_retries < 0 || c.execution.policy.error_retries < 0) {
        throw ConfigError("execution values out of range");
    }

    c.include_unrefined = get<bool>(doc, "include_unrefined", "config", false);
    c.output_dir = resolve(base, get<std::string>(doc, "output_dir", "config", "out"));
    if (ov.output_dir) {
        c.output_dir = *ov.output_dir;
    }
    c.bucket_edges = get<std::vector<size_t>>(doc, "bucket_edges", "config",
                                              {1, 10, 100, 1000, 10000, 100000});
    if (c.bucket_edges.empty() || !std::is_sorted(c.bucket_edges.begin(), c.bucket_edges.end()) ||
        std::adjacent_find(c.bucket_edges.begin(), c.bucket_edges.end()) != c.bucket_edges.end()) {
        throw ConfigError("bucket_edges must be non-empty and strictly increasing");
    }
    if (doc.contains("eval_items") && !doc["eval_items"].is_null()) {
        c.eval_items = existing(base, doc, "eval_items", "config");
    }
    if (ov.mock_script) {
        if (!fs::is_regular_file(*ov.mock_script)) {
            throw ConfigError("--mock-script: no such file " + ov.mock_script->string());
        }
        c.mock_script = *ov.mock_script;
    } else if (doc.contains("mock_script") && !doc["mock_script"].is_null()) {
        c.mock_script = existing(base, doc, "mock_script", "config");
    }
    if ((c.uses_mock_provider() || c.uses_stub_executor()) && !c.mock_script) {
        throw ConfigError("a mock script is required for the mock provider and the stub executor");
    }
    return c;
}

PipelineConfig load_config(const fs::path& path, const Overrides& overrides) {
    if (!fs::is_regular_file(path)) {
        throw ConfigError("config file not found: " + path.string());
    }
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(doc, path.has_parent_path() ? path.parent_path() : fs::path("."), overrides);
}

json config_snapshot(const PipelineConfig& c) {
    json snap = c.raw;
    snap.erase("output_dir");
    if (snap.contains("execution")) {
        snap["execution"].erase("parallelism");
    }
    json inputs = {{"corpus", file_hash(c.corpus_source)},
                   {"allowlist", file_hash(c.allowlist)},
                   {"denylist", file_hash(c.denylist)}};
    if (c.blocklist) {
        inputs["blocklist"] = directory_hash(*c.blocklist);
    }
    if (c.mock_script) {
        inputs["mock_script"] = file_hash(*c.mock_script);
    }
    if (c.eval_items) {
        inputs["eval_items"] = file_hash(*c.eval_items);
    }
    json prompts = json::object();
    for (const auto& [id, r] : c.roles) {
        prompts[std::string(llm::role_name(id))] = sha256_hex(r.prompt.system + "\n\n" + r.prompt.user);
    }
    snap.erase("mock_script");
    return {{"settings", snap}, {"input_hashes", inputs}, {"prompt_hashes", prompts}, {"hash_algorithm", kContentHashName}};
}

} // namespace unitsynth::pipeline
