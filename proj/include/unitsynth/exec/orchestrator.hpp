#pragma once

#include "unitsynth/exec/executor.hpp"

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>

namespace unitsynth::exec {

struct ExecutionPolicy {
    double timeout_seconds = 30;
    int flake_retries = 1; // extra attempts after a fail verdict
    int error_retries = 0; // extra attempts after an error verdict
    bool measure_coverage = false;
};

struct ExecJob {
    std::string candidate_id;
    std::string function_name;
    int round = 0;
    std::string function_source;
    std::string test_source;
};

class Orchestrator {
public:
    Orchestrator(std::shared_ptr<Executor> executor, ExecutionPolicy policy,
                 std::filesystem::path log_path = {});

    /// Runs the job, re-running fail (error) verdicts up to flake_retries
    /// (error_retries) more times. Reports pass if any attempt passed;
    /// `attempt` is the number of attempts made.
    ExecutionResult execute(const ExecJob& job);
    ExecutionResult execute(const ExecJob& job, const ExecutionPolicy& policy);

    /// One result per job, in job order. Per-job failures are embedded in the
    /// results; only executor misconfiguration propagates.
    std::vector<ExecutionResult> execute_batch(const std::vector<ExecJob>& jobs, int parallelism);

    const ExecutionPolicy& policy() const { return policy_; }

private:
    void log(const std::vector<ExecutionResult>& results);

    std::shared_ptr<Executor> executor_;
    ExecutionPolicy policy_;
    std::mutex log_mu_;
    std::ofstream log_;
};

std::string job_id_for(const ExecJob& job, int attempt);

} // namespace unitsynth::exec
