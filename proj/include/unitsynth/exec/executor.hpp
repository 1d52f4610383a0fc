#pragma once

#include "unitsynth/exec/verdict.hpp"

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace unitsynth::exec {

/// Who a job is for; the stub executor matches on it, real workers ignore it.
struct JobContext {
    std::string candidate_id;
    std::string function_name;
    int round = 0;
    int attempt = 1;
};

class Executor {
public:
    virtual ~Executor() = default;
    /// Runs one job to a verdict. Worker failures become error verdicts;
    /// exceptions are reserved for misconfiguration.
    virtual Verdict run(const RunnerJob& job, const JobContext& ctx) = 0;
};

class StubLookupError : public Error {
public:
    using Error::Error;
};

/// In-process table of scripted verdicts. Rules match on candidate,
/// function, round, attempt and substrings of the function or test source;
/// omitted keys are wildcards, the rule with the most keys set wins and file
/// order breaks ties. Results go through the same wire parser as real
/// worker output.
class StubExecutor : public Executor {
public:
    struct Rule {
        std::optional<std::string> candidate;
        std::optional<std::string> function;
        std::optional<int> round;
        std::optional<int> attempt;
        std::optional<std::string> source_contains;
        std::optional<std::string> test_contains;
        json result = json::array({"pass", json::object()});
        std::optional<double> coverage;
        double wall_time = 0;
    };

    explicit StubExecutor(std::vector<Rule> rules);

    /// Reads the `verdicts` array of a mock script document.
    static StubExecutor from_json(const json& script);

    Verdict run(const RunnerJob& job, const JobContext& ctx) override;

private:
    std::vector<Rule> rules_;
};

/// Spawns `command` once per job, writes the job object to its stdin and
/// reads one result object from its stdout. A worker still running at
/// timeout + grace is killed (timeout); one that exits without a result
/// object is a crash.
class ProcessExecutor : public Executor {
public:
    explicit ProcessExecutor(std::vector<std::string> command,
                             std::chrono::milliseconds grace = std::chrono::seconds(5));

    Verdict run(const RunnerJob& job, const JobContext& ctx) override;

private:
    std::vector<std::string> command_;
    std::chrono::milliseconds grace_;
};

} // namespace unitsynth::exec
