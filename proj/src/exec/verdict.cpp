#include "unitsynth/exec/verdict.hpp"

#include <array>
#include <cmath>

namespace unitsynth::exec {

namespace {

constexpr std::array<std::string_view, 3> kStatusNames = {"pass", "fail", "error"};
constexpr std::array<std::string_view, 6> kKindNames = {"timeout", "import_missing", "collection_error",
                                                         "crash",   "parse_failure",  "provider_error"};

ordered_json to_ordered(const json& j) { return ordered_json::parse(j.dump()); }

} // namespace

std::string_view status_name(Status s) { return kStatusNames[static_cast<size_t>(s)]; }

Status status_from_name(std::string_view name) {
    for (size_t i = 0; i < kStatusNames.size(); ++i) {
        if (kStatusNames[i] == name) {
            return static_cast<Status>(i);
        }
    }
    throw WireError("unknown status '" + std::string(name) + "'");
}

std::string_view error_kind_name(ErrorKind k) { return kKindNames[static_cast<size_t>(k)]; }

ErrorKind error_kind_from_name(std::string_view name) {
    for (size_t i = 0; i < kKindNames.size(); ++i) {
        if (kKindNames[i] == name) {
            return static_cast<ErrorKind>(i);
        }
    }
    throw WireError("unknown error kind '" + std::string(name) + "'");
}

Verdict Verdict::pass() {
    Verdict v;
    v.status = Status::pass;
    return v;
}

Verdict Verdict::fail(std::vector<std::pair<std::string, std::string>> failures) {
    Verdict v;
    v.status = Status::fail;
    v.failures = std::move(failures);
    return v;
}

Verdict Verdict::error(ErrorKind kind, std::string detail) {
    Verdict v;
    v.status = Status::error;
    v.error_kind = kind;
    v.error_detail = std::move(detail);
    return v;
}

void check_invariants(const Verdict& v) {
    switch (v.status) {
    case Status::pass:
        if (!v.failures.empty() || v.error_kind) {
            throw WireError("pass verdict with failures or an error kind");
        }
        break;
    case Status::fail:
        if (v.failures.empty()) {
            throw WireError("fail verdict without failures");
        }
        if (v.error_kind) {
            throw WireError("fail verdict with an error kind");
        }
        break;
    case Status::error:
        if (!v.error_kind) {
            throw WireError("error verdict without a kind");
        }
        if (!v.failures.empty()) {
            throw WireError("error verdict with failures");
        }
        break;
    }
    if (v.coverage && !(*v.coverage >= 0.0 && *v.coverage <= 1.0)) {
        throw WireError("coverage outside [0, 1]");
    }
}

ordered_json wire_result(const Verdict& v) {
    ordered_json payload = ordered_json::object();
    if (v.status == Status::fail) {
        for (const auto& [name, tb] : v.failures) {
            payload[name] = tb;
        }
    } else if (v.status == Status::error) {
        payload["kind"] = v.error_kind ? std::string(error_kind_name(*v.error_kind)) : std::string("crash");
        payload["detail"] = v.error_detail;
    }
    return ordered_json::array({std::string(status_name(v.status)), payload});
}

std::string serialize_result(const Verdict& v) { return python_dumps(wire_result(v)); }

Verdict parse_wire_result(const ordered_json& result, std::optional<double> coverage, double wall_time) {
    if (!result.is_array() || result.size() != 2 || !result[0].is_string() || !result[1].is_object()) {
        throw WireError("result must be [status, object]");
    }
    Verdict v;
    v.status = status_from_name(result[0].get<std::string>());
    const auto& payload = result[1];
    if (v.status == Status::fail) {
        for (auto it = payload.begin(); it != payload.end(); ++it) {
            if (!it.value().is_string()) {
                throw WireError("traceback for '" + it.key() + "' is not a string");
            }
            v.failures.emplace_back(it.key(), it.value().get<std::string>());
        }
    } else if (v.status == Status::error) {
        if (!payload.contains("kind") || !payload["kind"].is_string()) {
            throw WireError("error result without a kind");
        }
        v.error_kind = error_kind_from_name(payload["kind"].get<std::string>());
        if (payload.contains("detail") && payload["detail"].is_string()) {
            v.error_detail = payload["detail"].get<std::string>();
        }
    } else if (!payload.empty()) {
        throw WireError("pass result with a non-empty payload");
    }
    v.coverage = coverage;
    v.wall_time = wall_time;
    check_invariants(v);
    return v;
}

Verdict parse_wire_result(const json& result, std::optional<double> coverage, double wall_time) {
    return parse_wire_result(to_ordered(result), coverage, wall_time);
}

ordered_json to_json(const RunnerJob& job) {
    return ordered_json{{"job_id", job.job_id},
                        {"function_source", job.function_source},
                        {"test_source", job.test_source},
                        {"timeout_seconds", job.timeout_seconds},
                        {"measure_coverage", job.measure_coverage}};
}

Verdict parse_worker_output(const ordered_json& out, std::string_view expected_job_id) {
    if (!out.is_object()) {
        throw WireError("worker output is not an object");
    }
    if (!out.contains("job_id") || !out["job_id"].is_string() || out["job_id"].get<std::string>() != expected_job_id) {
        throw WireError("worker output has a missing or mismatched job_id");
    }
    if (!out.contains("result")) {
        throw WireError("worker output has no result");
    }
    std::optional<double> coverage;
    if (out.contains("coverage") && !out["coverage"].is_null()) {
        if (!out["coverage"].is_number()) {
            throw WireError("coverage is not a number");
        }
        coverage = out["coverage"].get<double>();
    }
    double wall = 0;
    if (out.contains("wall_time") && out["wall_time"].is_number()) {
        wall = out["wall_time"].get<double>();
    }
    return parse_wire_result(out["result"], coverage, wall);
}

Verdict parse_worker_output(const json& out, std::string_view expected_job_id) {
    return parse_worker_output(to_ordered(out), expected_job_id);
}

json verdict_to_json(const Verdict& v) {
    json failures = json::array();
    for (const auto& [name, tb] : v.failures) {
        failures.push_back({name, tb});
    }
    json j = {{"status", status_name(v.status)}, {"failures", failures}, {"wall_time", v.wall_time}};
    j["error_kind"] = v.error_kind ? json(error_kind_name(*v.error_kind)) : json(nullptr);
    j["detail"] = v.error_detail;
    j["coverage"] = v.coverage ? json(*v.coverage) : json(nullptr);
    return j;
}

Verdict verdict_from_json(const json& j) {
    Verdict v;
    v.status = status_from_name(j.at("status").get<std::string>());
    for (const auto& f : j.at("failures")) {
        v.failures.emplace_back(f.at(0).get<std::string>(), f.at(1).get<std::string>());
    }
    if (!j.at("error_kind").is_null()) {
        v.error_kind = error_kind_from_name(j["error_kind"].get<std::string>());
    }
    v.error_detail = j.value("detail", "");
    if (j.contains("coverage") && !j["coverage"].is_null()) {
        v.coverage = j["coverage"].get<double>();
    }
    v.wall_time = j.value("wall_time", 0.0);
    check_invariants(v);
    return v;
}

json to_json(const ExecutionResult& r) {
    return {{"candidate_id", r.candidate_id},
            {"round", r.round},
            {"attempt", r.attempt},
            {"verdict", verdict_to_json(r.verdict)},
            {"result", serialize_result(r.verdict)}};
}

ExecutionResult result_from_json(const json& j) {
    ExecutionResult r;
    r.candidate_id = j.at("candidate_id").get<std::string>();
    r.round = j.at("round").get<int>();
    r.attempt = j.at("attempt").get<int>();
    r.verdict = verdict_from_json(j.at("verdict"));
    return r;
}

} // namespace unitsynth::exec
