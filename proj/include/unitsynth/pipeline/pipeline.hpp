#pragma once

#include "unitsynth/pipeline/config.hpp"

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace unitsynth::pipeline {

enum class Stage { ingest, extract, gen_tests, execute, improve, refine, export_, stats, eval_generator };

inline constexpr Stage kAllStages[] = {Stage::ingest,  Stage::extract, Stage::gen_tests,
                                       Stage::execute, Stage::improve, Stage::refine,
                                       Stage::export_, Stage::stats,   Stage::eval_generator};

std::string_view stage_name(Stage s);
std::optional<Stage> stage_from_name(std::string_view name);

/// Artifact file names inside the output directory.
namespace files {
inline constexpr const char* documents = "documents.jsonl";
inline constexpr const char* units = "units.jsonl";
inline constexpr const char* suites = "suites.jsonl";
inline constexpr const char* suites_partial = "suites.partial.jsonl";
inline constexpr const char* checkpoint = "checkpoint.jsonl";
inline constexpr const char* refined = "refined.jsonl";
inline constexpr const char* refine_audit = "refine_audit.jsonl";
inline constexpr const char* dataset = "dataset.jsonl";
inline constexpr const char* dataset_manifest = "dataset.manifest.json";
inline constexpr const char* stats = "stats.json";
inline constexpr const char* eval_report = "eval_report.json";
inline constexpr const char* llm_audit = "llm_audit.jsonl";
inline constexpr const char* execution_log = "execution.jsonl";
inline constexpr const char* run_state = "run_state.json";
inline constexpr const char* run_manifest = "run_manifest.json";
inline constexpr const char* lock = ".lock";
} // namespace files

/// Exclusive advisory lock on `<dir>/.lock`, released on destruction or
/// process exit. Throws ConfigError if another run holds it.
class RunLock {
public:
    explicit RunLock(const std::filesystem::path& dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    int fd_ = -1;
};

struct RunOptions {
    bool resume = false;
    std::optional<Stage> stop_after; // stop (as if interrupted) once this stage completes
};

class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg);
    ~Pipeline();

    /// Runs one stage, reading the previous stage's artifact; writes the
    /// artifact and `<stage>.report.json`. Returns the report.
    json run_stage(Stage stage);

    /// All stages in order (eval-generator only when eval items are
    /// configured), recording completed stages in run_state.json. With
    /// `resume`, completed stages are skipped. Returns the run manifest, or
    /// null when stopped early by `stop_after`.
    json run_all(const RunOptions& opts = {});

    const PipelineConfig& config() const { return cfg_; }
    std::filesystem::path out(const char* name) const { return cfg_.output_dir / name; }

    /// Gen-tests reuses suites.partial.jsonl left by a budget halt.
    void set_resume(bool r) { resume_ = r; }

private:
    json ingest();
    json extract();
    json gen_tests();
    json execute();
    json improve();
    json refine();
    json export_();
    json stats();
    json eval_generator();

    llm::Gateway& gateway();
    exec::Orchestrator& orchestrator();
    llm::AgentRole role(llm::RoleId id) const;

    PipelineConfig cfg_;
    json snapshot_;
    bool resume_ = false;
    std::unique_ptr<llm::Gateway> gateway_;
    std::unique_ptr<exec::Orchestrator> orchestrator_;
};

} // namespace unitsynth::pipeline
