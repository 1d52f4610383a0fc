#include "unitsynth/refine/refine.hpp"

#include "unitsynth/common/parallel.hpp"
#include "unitsynth/common/text.hpp"
#include "unitsynth/pysyntax/parser.hpp"

#include <array>
#include <stdexcept>

namespace unitsynth::refine {

namespace {

constexpr std::array<std::string_view, 5> kRejectionNames = {"provider", "parse", "signature_changed",
                                                              "no_docstring", "behavior_changed"};

bool same_params(const std::vector<py::Param>& a, const std::vector<py::Param>& b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].name != b[i].name || a[i].kind != b[i].kind || a[i].has_default != b[i].has_default) {
            return false;
        }
    }
    return true;
}

} // namespace

std::string_view rejection_name(Rejection r) { return kRejectionNames[static_cast<size_t>(r)]; }

Rejection rejection_from_name(std::string_view name) {
    for (size_t i = 0; i < kRejectionNames.size(); ++i) {
        if (kRejectionNames[i] == name) {
            return static_cast<Rejection>(i);
        }
    }
    throw InputError("unknown refine rejection '" + std::string(name) + "'");
}

std::optional<NormalizedSource> normalize_function_source(std::string_view source, std::string_view name,
                                                          const std::vector<extract::ImportStatement>& fallback) {
    auto parsed = py::parse_module(source);
    if (!parsed.ok()) {
        return std::nullopt;
    }
    const auto* fn = py::find_function(*parsed.module, name);
    if (fn == nullptr) {
        return std::nullopt;
    }
    std::set<std::string, std::less<>> idents;
    for (auto id : py::identifiers_in(*parsed.module, fn->first_token, fn->last_token)) {
        idents.emplace(id);
    }
    auto own = extract::split_imports(source);
    NormalizedSource out;
    out.imports = extract::slice_imports(own.empty() ? fallback : own, idents);
    for (const auto& i : out.imports) {
        out.source += i.text;
        out.source += "\n";
        if (!i.root_package.empty()) {
            out.packages.insert(i.root_package);
        }
    }
    if (!out.imports.empty()) {
        out.source += "\n\n";
    }
    out.source += source.substr(fn->span.begin, fn->span.end - fn->span.begin);
    out.source += "\n";
    return out;
}

json to_json(const RefineOutcome& o) {
    json j = {{"candidate_id", o.candidate_id},
              {"unit_id", o.unit_id},
              {"doc_id", o.doc_id},
              {"function_name", o.function_name},
              {"pre_source", o.pre_source},
              {"suite_source", o.suite_source},
              {"detail", o.detail}};
    if (o.refined) {
        j["refined"] = {{"candidate_id", o.refined->candidate_id},
                        {"refined_source", o.refined->refined_source},
                        {"docstring", o.refined->docstring},
                        {"verified", o.refined->verified},
                        {"packages", o.refined->packages}};
    } else {
        j["refined"] = nullptr;
    }
    j["rejection"] = o.rejection ? json(rejection_name(*o.rejection)) : json(nullptr);
    j["post_result"] = o.post_result ? exec::to_json(*o.post_result) : json(nullptr);
    return j;
}

RefineOutcome outcome_from_json(const json& j) {
    RefineOutcome o;
    o.candidate_id = j.at("candidate_id").get<std::string>();
    o.unit_id = j.at("unit_id").get<std::string>();
    o.doc_id = j.at("doc_id").get<std::string>();
    o.function_name = j.at("function_name").get<std::string>();
    o.pre_source = j.at("pre_source").get<std::string>();
    o.suite_source = j.at("suite_source").get<std::string>();
    o.detail = j.value("detail", "");
    if (!j.at("refined").is_null()) {
        const auto& r = j["refined"];
        o.refined = RefinedUnit{r.at("candidate_id").get<std::string>(), r.at("refined_source").get<std::string>(),
                                r.at("docstring").get<std::string>(), r.at("verified").get<bool>(),
                                r.at("packages").get<std::set<std::string>>()};
    }
    if (!j.at("rejection").is_null()) {
        o.rejection = rejection_from_name(j["rejection"].get<std::string>());
    }
    if (!j.at("post_result").is_null()) {
        o.post_result = exec::result_from_json(j["post_result"]);
    }
    return o;
}

Refiner::Refiner(llm::Gateway& gateway, exec::Orchestrator& orchestrator, llm::AgentRole role, int parallelism,
                 std::filesystem::path audit_log)
    : gateway_(gateway), orchestrator_(orchestrator), role_(std::move(role)), parallelism_(parallelism) {
    if (parallelism_ < 1) {
        throw ConfigError("parallelism must be >= 1");
    }
    if (!audit_log.empty()) {
        if (audit_log.has_parent_path()) {
            std::filesystem::create_directories(audit_log.parent_path());
        }
        log_.open(audit_log, std::ios::app | std::ios::binary);
        if (!log_) {
            throw IoError("cannot open refinement audit log " + audit_log.string());
        }
    }
}

RefineOutcome Refiner::refine(const improve::Candidate& c) {
    auto o = refine_one(c);
    log(o);
    return o;
}

std::vector<RefineOutcome> Refiner::refine_all(const std::vector<improve::Candidate>& passed) {
    std::vector<RefineOutcome> out(passed.size());
    parallel_for(passed.size(), parallelism_, [&](size_t i) { out[i] = refine_one(passed[i]); });
    for (const auto& o : out) {
        log(o);
    }
    return out;
}

RefineOutcome Refiner::refine_one(const improve::Candidate& c) {
    if (c.status != improve::CandidateStatus::passed) {
        throw std::logic_error("refine requires a passed candidate: " + c.candidate_id);
    }
    RefineOutcome o;
    o.candidate_id = c.candidate_id;
    o.unit_id = c.unit.unit_id;
    o.doc_id = c.unit.doc_id;
    o.function_name = c.unit.name;
    o.pre_source = c.current_source;
    o.suite_source = c.suite.source;
    auto reject = [&](Rejection r, std::string detail) {
        o.rejection = r;
        o.detail = std::move(detail);
        return o;
    };

    std::string reply;
    try {
        reply = gateway_
                    .complete(role_, {{"function", c.current_source}, {"unit_test", c.suite.source}},
                              {c.candidate_id, c.unit.name, c.round, 1})
                    .text;
    } catch (const llm::ProviderError& e) {
        return reject(Rejection::provider, e.what());
    }
    std::string code;
    try {
        code = llm::extract_code_block(reply).code;
    } catch (const llm::ResponseParseError& e) {
        return reject(Rejection::parse, e.what());
    }
    auto parsed = py::parse_module(code);
    if (!parsed.ok()) {
        return reject(Rejection::parse, parsed.error->to_string());
    }
    auto pre = py::parse_module(c.current_source);
    const py::Stmt* pre_fn = pre.ok() ? py::find_function(*pre.module, c.unit.name) : nullptr;
    const py::Stmt* fn = py::find_function(*parsed.module, c.unit.name);
    if (fn == nullptr) {
        return reject(Rejection::signature_changed, "no single top-level function named '" + c.unit.name + "'");
    }
    if (pre_fn == nullptr || !same_params(pre_fn->params, fn->params)) {
        return reject(Rejection::signature_changed, "parameter list differs");
    }
    std::string doc;
    if (fn->docstring) {
        doc = std::string(trim(py::docstring_text(code, *fn->docstring)));
    }
    if (doc.empty()) {
        return reject(Rejection::no_docstring, "refined function has no docstring");
    }
    auto norm = normalize_function_source(code, c.unit.name, extract::split_imports(c.current_source));
    if (!norm) {
        return reject(Rejection::parse, "refined source could not be normalized");
    }
    auto res = orchestrator_.execute({c.candidate_id, c.unit.name, c.round, norm->source, c.suite.source});
    const bool ok = res.verdict.passed();
    o.post_result = std::move(res);
    if (!ok) {
        return reject(Rejection::behavior_changed, exec::serialize_result(o.post_result->verdict));
    }
    o.refined = RefinedUnit{c.candidate_id, norm->source, doc, true, norm->packages};
    return o;
}

void Refiner::log(const RefineOutcome& o) {
    if (!log_.is_open()) {
        return;
    }
    json rec = {{"candidate_id", o.candidate_id},
                {"pre_source", o.pre_source},
                {"post_source", o.refined ? json(o.refined->refined_source) : json(nullptr)},
                {"decision", o.accepted() ? "accepted" : "rejected"},
                {"reason", o.rejection ? json(rejection_name(*o.rejection)) : json(nullptr)},
                {"detail", o.detail},
                {"post_verdict", o.post_result ? json(exec::serialize_result(o.post_result->verdict)) : json(nullptr)}};
    std::lock_guard lock(log_mu_);
    log_ << jsonl_line(rec) << '\n';
    log_.flush();
}

} // namespace unitsynth::refine
