#pragma once

#include "unitsynth/exec/orchestrator.hpp"
#include "unitsynth/extract/extract.hpp"
#include "unitsynth/llm/gateway.hpp"
#include "unitsynth/llm/response.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace unitsynth::improve {

enum class CandidateStatus { pending, passed, exhausted, skipped };

std::string_view candidate_status_name(CandidateStatus s);
CandidateStatus candidate_status_from_name(std::string_view name);

struct HistoryEntry {
    int round = 0;
    std::string source;
    exec::ExecutionResult result;

    bool operator==(const HistoryEntry&) const = default;
};

struct Candidate {
    std::string candidate_id;
    extract::FunctionUnit unit;
    std::string current_source;
    llm::UnitTestSuite suite;
    int round = 0;
    std::vector<HistoryEntry> history;
    CandidateStatus status = CandidateStatus::pending;
    std::string skip_reason;

    bool operator==(const Candidate&) const = default;
};

/// name + "-" + first 8 hex digits of the unit id.
std::string candidate_id_for(const extract::FunctionUnit& unit);

json to_json(const Candidate& c);
Candidate candidate_from_json(const json& j);

struct PartitionState {
    std::set<std::string> d_pass;
    std::set<std::string> d_curr;
    std::set<std::string> d_skipped;
    int round = 0;

    size_t admitted() const { return d_pass.size() + d_curr.size() + d_skipped.size(); }
    bool operator==(const PartitionState&) const = default;
};

/// Everything a run needs to continue: partition, candidates (ordered by id)
/// and the number of candidates that moved to d_pass in each round so far.
struct LoopState {
    PartitionState partition;
    std::map<std::string, Candidate> candidates;
    std::vector<size_t> pass_counts;

    bool operator==(const LoopState&) const = default;
};

/// Checkpoint file: a header line with the partition and pass counts, then
/// one line per candidate.
void write_checkpoint(const std::filesystem::path& path, const LoopState& state);
LoopState read_checkpoint(const std::filesystem::path& path);

/// Outcome of asking the test generator for a suite. A rejected or
/// unparseable reply is re-requested once.
struct SuiteRequest {
    std::optional<llm::UnitTestSuite> suite;
    std::string reason; // why no suite: "suite_rejected:<why>" or "provider_error"
    std::string detail;
    int attempts = 0;
};

SuiteRequest request_suite(llm::Gateway& gateway, const llm::AgentRole& role, const std::string& candidate_id,
                           const std::string& function_name, const std::string& function_source);

/// Phase 1 output before execution: one entry per unit, either a pending
/// candidate with a suite or a skipped one.
struct SuiteOutcome {
    Candidate candidate;
    int attempts = 0;
};

json to_json(const SuiteOutcome& o);
SuiteOutcome suite_outcome_from_json(const json& j);

struct LoopOptions {
    int max_round = 3;
    int parallelism = 1;
    std::filesystem::path checkpoint; // empty = no checkpoints
};

/// Observer called after initialization (round 0) and after each repair
/// round, with the state already checkpointed.
using RoundObserver = std::function<void(const LoopState&)>;

class ImprovementLoop {
public:
    ImprovementLoop(llm::Gateway& gateway, exec::Orchestrator& orchestrator, llm::AgentRole test_generator,
                    llm::AgentRole bug_fixer, LoopOptions options);

    /// Phase 1a: a suite for every unit. `done` holds outcomes from an
    /// interrupted earlier attempt, keyed by candidate id; those units are not
    /// re-requested. On BudgetExceeded the completed outcomes are handed to
    /// `on_halt` before the exception propagates.
    std::vector<SuiteOutcome> generate_suites(
        const std::vector<extract::FunctionUnit>& units, const std::map<std::string, SuiteOutcome>& done = {},
        const std::function<void(const std::vector<SuiteOutcome>&)>& on_halt = {});

    /// Phase 1b: executes every pending candidate against its suite and
    /// builds the round-0 partition.
    LoopState execute_initial(const std::vector<SuiteOutcome>& outcomes);

    LoopState initialize(const std::vector<extract::FunctionUnit>& units);

    /// One bug-fix round over d_curr. Requires round < max_round and a
    /// non-empty d_curr.
    LoopState repair_round(const LoopState& state);

    /// Repair rounds until d_curr is empty or round = max_round; leftover
    /// d_curr members are marked exhausted. Checkpoints after every round.
    LoopState run_rounds(LoopState state);

    LoopState run_to_completion(const std::vector<extract::FunctionUnit>& units);

    void set_observer(RoundObserver obs) { observer_ = std::move(obs); }

private:
    void finish_round(LoopState& state);

    llm::Gateway& gateway_;
    exec::Orchestrator& orchestrator_;
    llm::AgentRole test_generator_;
    llm::AgentRole bug_fixer_;
    LoopOptions options_;
    RoundObserver observer_;
};

/// Throws std::logic_error if the partition and candidate statuses disagree
/// or any candidate invariant is broken.
void check_state(const LoopState& state, int max_round);

} // namespace unitsynth::improve
