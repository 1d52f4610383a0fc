#include "unitsynth/improve/improve.hpp"

#include "unitsynth/common/parallel.hpp"
#include "unitsynth/pysyntax/parser.hpp"

#include <array>
#include <stdexcept>

namespace unitsynth::improve {

using exec::ErrorKind;
using exec::ExecutionResult;
using exec::Verdict;

namespace {

constexpr std::array<std::string_view, 4> kStatusNames = {"pending", "passed", "exhausted", "skipped"};

json suite_to_json(const llm::UnitTestSuite& s) {
    return {{"suite_id", s.suite_id},
            {"candidate_id", s.candidate_id},
            {"source", s.source},
            {"test_method_names", s.test_method_names}};
}

llm::UnitTestSuite suite_from_json(const json& j) {
    llm::UnitTestSuite s;
    s.suite_id = j.at("suite_id").get<std::string>();
    s.candidate_id = j.at("candidate_id").get<std::string>();
    s.source = j.at("source").get<std::string>();
    s.test_method_names = j.at("test_method_names").get<std::vector<std::string>>();
    return s;
}

ExecutionResult synthetic(const std::string& cid, int round, ErrorKind kind, std::string detail) {
    return ExecutionResult{cid, round, Verdict::error(kind, std::move(detail)), 1};
}

} // namespace

std::string_view candidate_status_name(CandidateStatus s) { return kStatusNames[static_cast<size_t>(s)]; }

CandidateStatus candidate_status_from_name(std::string_view name) {
    for (size_t i = 0; i < kStatusNames.size(); ++i) {
        if (kStatusNames[i] == name) {
            return static_cast<CandidateStatus>(i);
        }
    }
    throw InputError("unknown candidate status '" + std::string(name) + "'");
}

std::string candidate_id_for(const extract::FunctionUnit& unit) {
    return unit.name + "-" + unit.unit_id.substr(0, 8);
}

json to_json(const Candidate& c) {
    json history = json::array();
    for (const auto& h : c.history) {
        history.push_back({{"round", h.round}, {"source", h.source}, {"result", exec::to_json(h.result)}});
    }
    return {{"candidate_id", c.candidate_id},
            {"unit", extract::to_json(c.unit)},
            {"current_source", c.current_source},
            {"suite", suite_to_json(c.suite)},
            {"round", c.round},
            {"history", history},
            {"status", candidate_status_name(c.status)},
            {"skip_reason", c.skip_reason}};
}

Candidate candidate_from_json(const json& j) {
    Candidate c;
    c.candidate_id = j.at("candidate_id").get<std::string>();
    c.unit = extract::unit_from_json(j.at("unit"));
    c.current_source = j.at("current_source").get<std::string>();
    c.suite = suite_from_json(j.at("suite"));
    c.round = j.at("round").get<int>();
    for (const auto& h : j.at("history")) {
        c.history.push_back(
            {h.at("round").get<int>(), h.at("source").get<std::string>(), exec::result_from_json(h.at("result"))});
    }
    c.status = candidate_status_from_name(j.at("status").get<std::string>());
    c.skip_reason = j.value("skip_reason", "");
    return c;
}

void write_checkpoint(const std::filesystem::path& path, const LoopState& state) {
    std::vector<json> lines;
    lines.push_back({{"type", "state"},
                     {"round", state.partition.round},
                     {"d_pass", state.partition.d_pass},
                     {"d_curr", state.partition.d_curr},
                     {"d_skipped", state.partition.d_skipped},
                     {"pass_counts", state.pass_counts}});
    for (const auto& [id, c] : state.candidates) {
        json line = to_json(c);
        line["type"] = "candidate";
        lines.push_back(std::move(line));
    }
    write_jsonl_atomic(path, lines);
}

LoopState read_checkpoint(const std::filesystem::path& path) {
    LoopState s;
    bool have_header = false;
    try {
        read_jsonl(path, [&](size_t, json&& j) {
            const auto type = j.at("type").get<std::string>();
            if (type == "state") {
                s.partition.round = j.at("round").get<int>();
                s.partition.d_pass = j.at("d_pass").get<std::set<std::string>>();
                s.partition.d_curr = j.at("d_curr").get<std::set<std::string>>();
                s.partition.d_skipped = j.at("d_skipped").get<std::set<std::string>>();
                s.pass_counts = j.at("pass_counts").get<std::vector<size_t>>();
                have_header = true;
            } else if (type == "candidate") {
                auto c = candidate_from_json(j);
                const auto id = c.candidate_id;
                s.candidates.emplace(id, std::move(c));
            } else {
                throw InputError("unknown checkpoint record type '" + type + "'");
            }
        });
    } catch (const json::exception& e) {
        throw InputError("malformed checkpoint " + path.string() + ": " + e.what());
    } catch (const exec::WireError& e) {
        throw InputError("malformed checkpoint " + path.string() + ": " + e.what());
    }
    if (!have_header) {
        throw InputError("checkpoint " + path.string() + " has no state record");
    }
    return s;
}

SuiteRequest request_suite(llm::Gateway& gateway, const llm::AgentRole& role, const std::string& candidate_id,
                           const std::string& function_name, const std::string& function_source) {
    SuiteRequest out;
    for (int attempt = 1; attempt <= 2; ++attempt) {
        out.attempts = attempt;
        llm::CompletionResponse resp;
        try {
            resp = gateway.complete(role, {{"function", function_source}},
                                    {candidate_id, function_name, 0, attempt});
        } catch (const llm::ProviderError& e) {
            out.reason = "provider_error";
            out.detail = e.what();
            return out;
        }
        std::string code;
        try {
            code = llm::extract_code_block(resp.text).code;
        } catch (const llm::ResponseParseError& e) {
            out.reason = "suite_rejected:empty_response";
            out.detail = e.what();
            continue;
        }
        auto v = llm::validate_test_suite(code);
        if (v.accepted()) {
            out.suite = std::move(v.suite);
            out.suite->candidate_id = candidate_id;
            out.suite->suite_id = candidate_id + ":suite";
            out.reason.clear();
            out.detail.clear();
            return out;
        }
        out.reason = "suite_rejected:" + std::string(llm::rejection_name(*v.rejection));
        out.detail = v.detail;
    }
    return out;
}

json to_json(const SuiteOutcome& o) { return {{"candidate", to_json(o.candidate)}, {"attempts", o.attempts}}; }

SuiteOutcome suite_outcome_from_json(const json& j) {
    return {candidate_from_json(j.at("candidate")), j.at("attempts").get<int>()};
}

ImprovementLoop::ImprovementLoop(llm::Gateway& gateway, exec::Orchestrator& orchestrator,
                                 llm::AgentRole test_generator, llm::AgentRole bug_fixer, LoopOptions options)
    : gateway_(gateway),
      orchestrator_(orchestrator),
      test_generator_(std::move(test_generator)),
      bug_fixer_(std::move(bug_fixer)),
      options_(std::move(options)) {
    if (options_.max_round < 0) {
        throw ConfigError("max_round must be >= 0");
    }
    if (options_.parallelism < 1) {
        throw ConfigError("parallelism must be >= 1");
    }
}

std::vector<SuiteOutcome> ImprovementLoop::generate_suites(
    const std::vector<extract::FunctionUnit>& units, const std::map<std::string, SuiteOutcome>& done,
    const std::function<void(const std::vector<SuiteOutcome>&)>& on_halt) {
    std::vector<const extract::FunctionUnit*> todo;
    std::map<std::string, std::string> seen; // candidate id -> unit id
    for (const auto& u : units) {
        const auto cid = candidate_id_for(u);
        auto [it, fresh] = seen.emplace(cid, u.unit_id);
        if (!fresh) {
            if (it->second != u.unit_id) {
                throw InputError("candidate id collision on " + cid);
            }
            continue; // same unit listed twice
        }
        todo.push_back(&u);
    }
    std::vector<std::optional<SuiteOutcome>> out(todo.size());
    try {
        parallel_for(todo.size(), options_.parallelism, [&](size_t i) {
            const auto& u = *todo[i];
            const auto cid = candidate_id_for(u);
            if (auto it = done.find(cid); it != done.end()) {
                out[i] = it->second;
                return;
            }
            SuiteOutcome o;
            o.candidate.candidate_id = cid;
            o.candidate.unit = u;
            o.candidate.current_source = extract::module_source(u);
            auto req = request_suite(gateway_, test_generator_, cid, u.name, o.candidate.current_source);
            o.attempts = req.attempts;
            if (req.suite) {
                o.candidate.suite = std::move(*req.suite);
            } else {
                o.candidate.status = CandidateStatus::skipped;
                o.candidate.skip_reason = req.reason;
            }
            out[i] = std::move(o);
        });
    } catch (const llm::BudgetExceeded&) {
        if (on_halt) {
            std::vector<SuiteOutcome> partial;
            for (auto& o : out) {
                if (o) {
                    partial.push_back(*o);
                }
            }
            on_halt(partial);
        }
        throw;
    }
    std::vector<SuiteOutcome> result;
    result.reserve(out.size());
    for (auto& o : out) {
        result.push_back(std::move(*o));
    }
    return result;
}

LoopState ImprovementLoop::execute_initial(const std::vector<SuiteOutcome>& outcomes) {
    LoopState state;
    std::vector<exec::ExecJob> jobs;
    std::vector<std::string> job_ids;
    for (const auto& o : outcomes) {
        const auto& c = o.candidate;
        if (!state.candidates.emplace(c.candidate_id, c).second) {
            throw InputError("duplicate candidate " + c.candidate_id);
        }
        if (c.status == CandidateStatus::skipped) {
            state.partition.d_skipped.insert(c.candidate_id);
            continue;
        }
        jobs.push_back({c.candidate_id, c.unit.name, 0, c.current_source, c.suite.source});
        job_ids.push_back(c.candidate_id);
    }
    auto results = orchestrator_.execute_batch(jobs, options_.parallelism);
    size_t passed = 0;
    for (size_t i = 0; i < results.size(); ++i) {
        auto& c = state.candidates.at(job_ids[i]);
        c.round = 0;
        c.history.push_back({0, c.current_source, results[i]});
        const auto& v = results[i].verdict;
        if (v.passed()) {
            c.status = CandidateStatus::passed;
            state.partition.d_pass.insert(c.candidate_id);
            ++passed;
        } else if (v.error_kind == ErrorKind::import_missing) {
            c.status = CandidateStatus::skipped;
            c.skip_reason = "import_missing";
            state.partition.d_skipped.insert(c.candidate_id);
        } else {
            state.partition.d_curr.insert(c.candidate_id);
        }
    }
    state.pass_counts.push_back(passed);
    finish_round(state);
    return state;
}

LoopState ImprovementLoop::initialize(const std::vector<extract::FunctionUnit>& units) {
    return execute_initial(generate_suites(units));
}

LoopState ImprovementLoop::repair_round(const LoopState& state) {
    if (state.partition.round >= options_.max_round) {
        throw std::logic_error("repair_round called at max_round");
    }
    if (state.partition.d_curr.empty()) {
        throw std::logic_error("repair_round called with empty d_curr");
    }
    const int r = state.partition.round + 1;
    const std::vector<std::string> ids(state.partition.d_curr.begin(), state.partition.d_curr.end());
    std::vector<Candidate> updated(ids.size());

    parallel_for(ids.size(), options_.parallelism, [&](size_t i) {
        Candidate c = state.candidates.at(ids[i]);
        c.status = CandidateStatus::pending;
        c.round = r;
        // the verdict the bug fixer sees is the latest real one, not a provider failure
        const HistoryEntry* prev = &c.history.back();
        for (auto it = c.history.rbegin(); it != c.history.rend(); ++it) {
            if (it->result.verdict.error_kind != ErrorKind::provider_error) {
                prev = &*it;
                break;
            }
        }
        llm::Slots slots = {{"function", c.current_source},
                            {"unit_test", c.suite.source},
                            {"execution_result", exec::serialize_result(prev->result.verdict)}};
        std::string reply;
        try {
            reply = gateway_.complete(bug_fixer_, slots, {c.candidate_id, c.unit.name, r, 1}).text;
        } catch (const llm::ProviderError& e) {
            c.history.push_back({r, c.current_source, synthetic(c.candidate_id, r, ErrorKind::provider_error, e.what())});
            updated[i] = std::move(c);
            return;
        }
        std::string revised;
        try {
            revised = llm::extract_code_block(reply).code;
        } catch (const llm::ResponseParseError&) {
        }
        c.current_source = revised;
        auto parsed = py::parse_module(revised);
        if (!parsed.ok() || revised.empty()) {
            const std::string why = revised.empty() ? "empty reply" : parsed.error->to_string();
            c.history.push_back({r, revised, synthetic(c.candidate_id, r, ErrorKind::parse_failure, why)});
        } else if (py::find_function(*parsed.module, c.unit.name) == nullptr) {
            c.history.push_back({r, revised,
                                 synthetic(c.candidate_id, r, ErrorKind::parse_failure,
                                           "no single top-level function named '" + c.unit.name + "'")});
        } else {
            auto res = orchestrator_.execute({c.candidate_id, c.unit.name, r, revised, c.suite.source});
            if (res.verdict.passed()) {
                c.status = CandidateStatus::passed;
            }
            c.history.push_back({r, revised, std::move(res)});
        }
        updated[i] = std::move(c);
    });

    LoopState next = state;
    next.partition.round = r;
    size_t moved = 0;
    for (auto& c : updated) {
        if (c.status == CandidateStatus::passed) {
            next.partition.d_curr.erase(c.candidate_id);
            next.partition.d_pass.insert(c.candidate_id);
            ++moved;
        }
        next.candidates[c.candidate_id] = std::move(c);
    }
    next.pass_counts.push_back(moved);
    finish_round(next);
    return next;
}

LoopState ImprovementLoop::run_rounds(LoopState state) {
    while (state.partition.round < options_.max_round && !state.partition.d_curr.empty()) {
        state = repair_round(state);
    }
    bool changed = false;
    for (const auto& id : state.partition.d_curr) {
        auto& c = state.candidates.at(id);
        if (c.status != CandidateStatus::exhausted) {
            c.status = CandidateStatus::exhausted;
            changed = true;
        }
    }
    if (changed && !options_.checkpoint.empty()) {
        write_checkpoint(options_.checkpoint, state);
    }
    return state;
}

LoopState ImprovementLoop::run_to_completion(const std::vector<extract::FunctionUnit>& units) {
    return run_rounds(initialize(units));
}

void ImprovementLoop::finish_round(LoopState& state) {
    if (!options_.checkpoint.empty()) {
        write_checkpoint(options_.checkpoint, state);
    }
    if (observer_) {
        observer_(state);
    }
}

void check_state(const LoopState& s, int max_round) {
    auto fail = [](const std::string& m) { throw std::logic_error("loop state: " + m); };
    const auto& p = s.partition;
    if (p.admitted() != s.candidates.size()) {
        fail("partition sizes do not add up to the candidate count");
    }
    for (const auto& [id, c] : s.candidates) {
        const int in = int(p.d_pass.count(id)) + int(p.d_curr.count(id)) + int(p.d_skipped.count(id));
        if (in != 1) {
            fail(id + " is in " + std::to_string(in) + " sets");
        }
        if (c.round > max_round) {
            fail(id + " round exceeds max_round");
        }
        if (c.history.size() > static_cast<size_t>(max_round) + 1) {
            fail(id + " history longer than max_round + 1");
        }
        for (size_t k = 0; k < c.history.size(); ++k) {
            if (c.history[k].round != static_cast<int>(k)) {
                fail(id + " history rounds are not 0, 1, 2, ...");
            }
        }
        const bool last_pass = !c.history.empty() && c.history.back().result.verdict.passed();
        switch (c.status) {
        case CandidateStatus::passed:
            if (!p.d_pass.count(id) || !last_pass) {
                fail(id + " passed without a passing last verdict");
            }
            break;
        case CandidateStatus::exhausted:
            if (!p.d_curr.count(id) || c.round != max_round || last_pass) {
                fail(id + " exhausted inconsistently");
            }
            break;
        case CandidateStatus::pending:
            if (!p.d_curr.count(id)) {
                fail(id + " pending outside d_curr");
            }
            break;
        case CandidateStatus::skipped:
            if (!p.d_skipped.count(id)) {
                fail(id + " skipped outside d_skipped");
            }
            break;
        }
    }
}

} // namespace unitsynth::improve
