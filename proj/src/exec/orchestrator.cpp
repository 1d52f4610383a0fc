#include "unitsynth/exec/orchestrator.hpp"

#include "unitsynth/common/parallel.hpp"

namespace unitsynth::exec {

std::string job_id_for(const ExecJob& job, int attempt) {
    return job.candidate_id + ":r" + std::to_string(job.round) + ":a" + std::to_string(attempt);
}

Orchestrator::Orchestrator(std::shared_ptr<Executor> executor, ExecutionPolicy policy,
                           std::filesystem::path log_path)
    : executor_(std::move(executor)), policy_(policy) {
    if (policy_.timeout_seconds <= 0) {
        throw ConfigError("execution timeout must be positive");
    }
    if (policy_.flake_retries < 0 || policy_.error_retries < 0) {
        throw ConfigError("retry counts must be non-negative");
    }
    if (!log_path.empty()) {
        if (log_path.has_parent_path()) {
            std::filesystem::create_directories(log_path.parent_path());
        }
        log_.open(log_path, std::ios::app | std::ios::binary);
        if (!log_) {
            throw IoError("cannot open execution log " + log_path.string());
        }
    }
}

namespace {

ExecutionResult run_with_retries(Executor& executor, const ExecJob& job, const ExecutionPolicy& policy) {
    ExecutionResult r;
    r.candidate_id = job.candidate_id;
    r.round = job.round;
    int fails = 0;
    int errors = 0;
    for (int attempt = 1;; ++attempt) {
        RunnerJob rj{job_id_for(job, attempt), job.function_source, job.test_source, policy.timeout_seconds,
                     policy.measure_coverage};
        JobContext ctx{job.candidate_id, job.function_name, job.round, attempt};
        Verdict v;
        if (job.function_source.empty() || job.test_source.empty()) {
            v = Verdict::error(ErrorKind::collection_error, "empty function or test source");
        } else {
            try {
                v = executor.run(rj, ctx);
            } catch (const StubLookupError&) {
                throw;
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception& e) {
                v = Verdict::error(ErrorKind::crash, e.what());
            }
        }
        r.verdict = std::move(v);
        r.attempt = attempt;
        if (r.verdict.status == Status::pass) {
            return r;
        }
        if (r.verdict.status == Status::fail ? fails++ >= policy.flake_retries
                                             : errors++ >= policy.error_retries) {
            return r;
        }
    }
}

} // namespace

ExecutionResult Orchestrator::execute(const ExecJob& job) { return execute(job, policy_); }

ExecutionResult Orchestrator::execute(const ExecJob& job, const ExecutionPolicy& policy) {
    auto r = run_with_retries(*executor_, job, policy);
    log({r});
    return r;
}

std::vector<ExecutionResult> Orchestrator::execute_batch(const std::vector<ExecJob>& jobs, int parallelism) {
    if (parallelism < 1) {
        throw ConfigError("parallelism must be >= 1");
    }
    std::vector<ExecutionResult> results(jobs.size());
    parallel_for(jobs.size(), parallelism,
                 [&](size_t i) { results[i] = run_with_retries(*executor_, jobs[i], policy_); });
    log(results);
    return results;
}

void Orchestrator::log(const std::vector<ExecutionResult>& results) {
    if (!log_.is_open()) {
        return;
    }
    std::lock_guard lock(log_mu_);
    for (const auto& r : results) {
        log_ << jsonl_line(to_json(r)) << '\n';
    }
    log_.flush();
}

} // namespace unitsynth::exec
