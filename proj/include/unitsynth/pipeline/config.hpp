#pragma once

#include "unitsynth/common/json.hpp"
#include "unitsynth/exec/orchestrator.hpp"
#include "unitsynth/llm/gateway.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace unitsynth::pipeline {

struct HttpSettings {
    std::string base_url;
    std::string api_key_env = "UNITSYNTH_API_KEY";
    int timeout_seconds = 120;
};

struct ExecutionSettings {
    std::string executor = "stub"; // "stub" (scripted, from the mock script) or "process"
    std::vector<std::string> worker_command;
    exec::ExecutionPolicy policy;
    double grace_seconds = 5;
    int parallelism = 1;
};

/// Parsed and validated pipeline configuration. Relative paths in the file
/// are resolved against the file's directory.
struct PipelineConfig {
    std::filesystem::path corpus_source;
    std::string corpus_format = "jsonl";
    std::optional<std::filesystem::path> blocklist;
    size_t shingle_length = 13;
    std::filesystem::path allowlist;
    std::filesystem::path denylist;
    size_t max_source_chars = 4096;
    std::optional<std::filesystem::path> prompts_dir;
    std::map<llm::RoleId, llm::AgentRole> roles;
    HttpSettings http;
    llm::GatewayOptions gateway;
    int max_round = 3;
    ExecutionSettings execution;
    bool include_unrefined = false;
    std::filesystem::path output_dir = "out";
    std::vector<size_t> bucket_edges;
    std::optional<std::filesystem::path> eval_items;
    std::optional<std::filesystem::path> mock_script;

    /// The document as read, for the snapshot.
    json raw;

    bool uses_mock_provider() const;
    bool uses_stub_executor() const { return execution.executor == "stub"; }
};

struct Overrides {
    std::optional<std::filesystem::path> output_dir;
    std::optional<int> parallelism;
    std::optional<std::filesystem::path> mock_script;
};

/// Throws ConfigError on unknown keys, wrong types, out-of-range values or
/// referenced paths that do not exist.
PipelineConfig parse_config(const json& doc, const std::filesystem::path& base_dir, const Overrides& overrides = {});
PipelineConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});

/// The configuration as written (minus run-local knobs: output directory
/// and parallelism) plus content hashes of the inputs it references.
json config_snapshot(const PipelineConfig& cfg);

} // namespace unitsynth::pipeline
