#pragma once

#include "unitsynth/common/errors.hpp"
#include "unitsynth/common/json.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace unitsynth::exec {

enum class Status { pass, fail, error };

/// The runner's four kinds plus two the primary side synthesizes: a repair
/// that does not parse, and a provider call that failed.
enum class ErrorKind { timeout, import_missing, collection_error, crash, parse_failure, provider_error };

std::string_view status_name(Status s);
Status status_from_name(std::string_view name);
std::string_view error_kind_name(ErrorKind k);
ErrorKind error_kind_from_name(std::string_view name);

/// Malformed worker output or a verdict that breaks the status invariants.
class WireError : public Error {
public:
    using Error::Error;
};

struct Verdict {
    Status status = Status::error;
    std::vector<std::pair<std::string, std::string>> failures; // test name -> traceback, runner order
    std::optional<ErrorKind> error_kind;
    std::string error_detail;
    std::optional<double> coverage;
    double wall_time = 0;

    bool passed() const { return status == Status::pass; }
    bool operator==(const Verdict&) const = default;

    static Verdict pass();
    static Verdict fail(std::vector<std::pair<std::string, std::string>> failures);
    static Verdict error(ErrorKind kind, std::string detail);
};

/// Throws WireError unless pass has no failures and no error kind, fail has
/// failures, and error has a kind.
void check_invariants(const Verdict& v);

/// `["pass", {}]`, `["fail", {name: traceback, ...}]` or
/// `["error", {"kind": ..., "detail": ...}]`.
ordered_json wire_result(const Verdict& v);

/// wire_result serialized with Python `json.dumps` spacing. This exact text
/// is what the bug-fix agent receives.
std::string serialize_result(const Verdict& v);

/// Inverse of wire_result; coverage and wall time are supplied separately.
/// Throws WireError.
Verdict parse_wire_result(const ordered_json& result, std::optional<double> coverage = {}, double wall_time = 0);
Verdict parse_wire_result(const json& result, std::optional<double> coverage = {}, double wall_time = 0);

struct RunnerJob {
    std::string job_id;
    std::string function_source;
    std::string test_source;
    double timeout_seconds = 30;
    bool measure_coverage = false;
};

ordered_json to_json(const RunnerJob& job);

/// Parses the worker's stdout object
/// `{"job_id", "result", "coverage", "wall_time"}`. Throws WireError.
Verdict parse_worker_output(const ordered_json& output, std::string_view expected_job_id);
Verdict parse_worker_output(const json& output, std::string_view expected_job_id);

json verdict_to_json(const Verdict& v);
Verdict verdict_from_json(const json& j);

struct ExecutionResult {
    std::string candidate_id;
    int round = 0;
    Verdict verdict;
    int attempt = 1;

    bool operator==(const ExecutionResult&) const = default;
};

json to_json(const ExecutionResult& r);
ExecutionResult result_from_json(const json& j);

} // namespace unitsynth::exec
