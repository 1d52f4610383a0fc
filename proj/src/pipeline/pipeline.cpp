#include "unitsynth/pipeline/pipeline.hpp"

#include "unitsynth/common/hash.hpp"
#include "unitsynth/common/parallel.hpp"
#include "unitsynth/common/text.hpp"
#include "unitsynth/corpus/corpus.hpp"
#include "unitsynth/dataset/dataset.hpp"
#include "unitsynth/eval/eval.hpp"
#include "unitsynth/extract/extract.hpp"
#include "unitsynth/improve/improve.hpp"
#include "unitsynth/refine/refine.hpp"

#include <array>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace unitsynth::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, 9> kStageNames = {"ingest", "extract", "gen-tests", "execute",       "improve",
                                                          "refine", "export",  "stats",     "eval-generator"};

/// Routes each request to the provider bound to its role.
class RoutingProvider : public llm::Provider {
public:
    explicit RoutingProvider(std::map<llm::RoleId, std::shared_ptr<llm::Provider>> routes)
        : routes_(std::move(routes)) {}

    llm::ProviderReply call(const llm::CompletionRequest& request) override {
        return routes_.at(request.role)->call(request);
    }

private:
    std::map<llm::RoleId, std::shared_ptr<llm::Provider>> routes_;
};

json document_to_json(const corpus::SourceDocument& d) {
    return {{"doc_id", d.doc_id}, {"path", d.path}, {"content", d.content}, {"language", d.language_tag}};
}

corpus::SourceDocument document_from_json(const json& j) {
    corpus::SourceDocument d;
    d.doc_id = j.at("doc_id").get<std::string>();
    d.path = j.at("path").get<std::string>();
    d.content = j.at("content").get<std::string>();
    d.language_tag = j.at("language").get<std::string>();
    return d;
}

/// Reads an artifact, turning a missing file or malformed record into
/// InputError naming the stage that should have produced it.
template <class T, class F>
std::vector<T> read_artifact(const fs::path& path, std::string_view producer, F&& parse) {
    if (!fs::is_regular_file(path)) {
        throw InputError("missing " + path.filename().string() + "; run the '" + std::string(producer) +
                         "' stage first");
    }
    std::vector<T> out;
    read_jsonl(path, [&](size_t line, json&& j) {
        try {
            out.push_back(parse(j));
        } catch (const std::exception& e) {
            throw InputError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        }
    });
    return out;
}

json read_report(const fs::path& path) {
    try {
        return read_json_file(path);
    } catch (const std::exception& e) {
        throw InputError("cannot read " + path.string() + ": " + e.what());
    }
}

template <class Map>
json tally(const Map& m) {
    json j = json::object();
    for (const auto& [k, v] : m) {
        j[k] = v;
    }
    return j;
}

json partition_report(const improve::LoopState& s) {
    size_t exhausted = 0;
    std::map<std::string, size_t> skipped;
    for (const auto& [id, c] : s.candidates) {
        if (c.status == improve::CandidateStatus::exhausted) {
            ++exhausted;
        } else if (c.status == improve::CandidateStatus::skipped) {
            ++skipped[c.skip_reason];
        }
    }
    return {{"admitted", s.partition.admitted()},
            {"d_pass", s.partition.d_pass.size()},
            {"d_curr", s.partition.d_curr.size()},
            {"d_skipped", s.partition.d_skipped.size()},
            {"skipped_reasons", tally(skipped)},
            {"exhausted", exhausted},
            {"round", s.partition.round},
            {"pass_counts", s.pass_counts}};
}

} // namespace

std::string_view stage_name(Stage s) { return kStageNames[static_cast<size_t>(s)]; }

std::optional<Stage> stage_from_name(std::string_view name) {
    for (size_t i = 0; i < kStageNames.size(); ++i) {
        if (kStageNames[i] == name) {
            return static_cast<Stage>(i);
        }
    }
    return std::nullopt;
}

RunLock::RunLock(const fs::path& dir) {
    fs::create_directories(dir);
    const auto path = dir / files::lock;
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) {
        throw IoError("cannot open lock file " + path.string() + ": " + std::strerror(errno));
    }
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw ConfigError("output directory " + dir.string() + " is in use by another run");
    }
}

RunLock::~RunLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)), snapshot_(config_snapshot(cfg_)) {}

Pipeline::~Pipeline() = default;

llm::AgentRole Pipeline::role(llm::RoleId id) const { return cfg_.roles.at(id); }

llm::Gateway& Pipeline::gateway() {
    if (!gateway_) {
        std::shared_ptr<llm::Provider> mock, http;
        std::map<llm::RoleId, std::shared_ptr<llm::Provider>> routes;
        for (const auto& [id, r] : cfg_.roles) {
            if (r.binding.provider == "mock") {
                if (!mock) {
                    mock = std::make_shared<llm::MockProvider>(llm::MockProvider::from_json(read_json_file(*cfg_.mock_script)));
                }
                routes[id] = mock;
            } else {
                if (!http) {
                    const char* key = std::getenv(cfg_.http.api_key_env.c_str());
                    http = std::make_shared<llm::ChatCompletionsProvider>(
                        std::make_shared<llm::HttplibTransport>(std::chrono::seconds(cfg_.http.timeout_seconds)),
                        cfg_.http.base_url, key != nullptr ? key : "");
                }
                routes[id] = http;
            }
        }
        auto opts = cfg_.gateway;
        opts.audit_log = out(files::llm_audit);
        gateway_ = std::make_unique<llm::Gateway>(std::make_shared<RoutingProvider>(std::move(routes)), opts);
    }
    return *gateway_;
}

exec::Orchestrator& Pipeline::orchestrator() {
    if (!orchestrator_) {
        std::shared_ptr<exec::Executor> executor;
        if (cfg_.uses_stub_executor()) {
            executor = std::make_shared<exec::StubExecutor>(exec::StubExecutor::from_json(read_json_file(*cfg_.mock_script)));
        } else {
            executor = std::make_shared<exec::ProcessExecutor>(
                cfg_.execution.worker_command,
                std::chrono::milliseconds(static_cast<long long>(cfg_.execution.grace_seconds * 1000)));
        }
        orchestrator_ = std::make_unique<exec::Orchestrator>(executor, cfg_.execution.policy, out(files::execution_log));
    }
    return *orchestrator_;
}

json Pipeline::run_stage(Stage stage) {
    fs::create_directories(cfg_.output_dir);
    json report;
    switch (stage) {
    case Stage::ingest: report = ingest(); break;
    case Stage::extract: report = extract(); break;
    case Stage::gen_tests: report = gen_tests(); break;
    case Stage::execute: report = execute(); break;
    case Stage::improve: report = improve(); break;
    case Stage::refine: report = refine(); break;
    case Stage::export_: report = export_(); break;
    case Stage::stats: report = stats(); break;
    case Stage::eval_generator: report = eval_generator(); break;
    }
    report["stage"] = stage_name(stage);
    write_json_atomic(cfg_.output_dir / (std::string(stage_name(stage)) + ".report.json"), report);
    return report;
}

json Pipeline::ingest() {
    auto res = corpus::ingest(cfg_.corpus_source, cfg_.corpus_format);
    const size_t read = res.documents.size();
    auto docs = corpus::dedup_exact(std::move(res.documents));
    const size_t duplicates = read - docs.size();
    json decon = json::object();
    if (cfg_.blocklist) {
        auto bl = corpus::Blocklist::from_directory(*cfg_.blocklist, cfg_.shingle_length);
        auto d = corpus::decontaminate(std::move(docs), bl);
        docs = std::move(d.kept);
        decon = tally(d.dropped_per_benchmark);
    }
    std::vector<json> lines;
    for (const auto& d : docs) {
        lines.push_back(document_to_json(d));
    }
    write_jsonl_atomic(out(files::documents), lines);
    json skipped = json::array();
    for (const auto& s : res.skipped) {
        skipped.push_back({{"line", s.line}, {"reason", s.reason}});
    }
    return {{"records", read + res.skipped.size()},
            {"skipped_records", skipped},
            {"duplicates", duplicates},
            {"decontaminated", decon},
            {"documents", docs.size()}};
}

json Pipeline::extract() {
    auto docs = read_artifact<corpus::SourceDocument>(out(files::documents), "ingest", document_from_json);
    const auto allow = extract::PackageAllowlist::from_file(cfg_.allowlist);
    const auto deny = extract::Denylist::from_file(cfg_.denylist);
    extract::ExtractOptions opts;
    opts.max_source_chars = cfg_.max_source_chars;
    std::vector<extract::ExtractResult> per_doc(docs.size());
    parallel_for(docs.size(), cfg_.execution.parallelism,
                 [&](size_t i) { per_doc[i] = extract::extract_functions(docs[i], opts); });
    std::vector<extract::FunctionUnit> units;
    size_t parse_errors = 0, too_long = 0, classes = 0;
    for (auto& r : per_doc) {
        parse_errors += r.parse_error ? 1 : 0;
        too_long += r.dropped_too_long;
        classes += r.skipped_classes;
        for (auto& u : r.units) {
            units.push_back(std::move(u));
        }
    }
    auto d_pkg = extract::filter_by_packages(units, allow);
    auto screened = extract::safety_screen(d_pkg, deny);
    std::vector<json> lines;
    for (const auto& u : screened.safe) {
        lines.push_back(extract::to_json(u));
    }
    write_jsonl_atomic(out(files::units), lines);
    return {{"docs", docs.size()},
            {"parse_errors", parse_errors},
            {"units", units.size()},
            {"too_long", too_long},
            {"skipped_classes", classes},
            {"d_pkg", d_pkg.size()},
            {"unsafe", screened.dropped.size()},
            {"d_p_safe", screened.safe.size()}};
}

json Pipeline::gen_tests() {
    auto units = read_artifact<extract::FunctionUnit>(out(files::units), "extract", extract::unit_from_json);
    std::map<std::string, improve::SuiteOutcome> done;
    const auto partial = out(files::suites_partial);
    if (resume_ && fs::is_regular_file(partial)) {
        for (auto& o : read_artifact<improve::SuiteOutcome>(partial, "gen-tests", improve::suite_outcome_from_json)) {
            const auto id = o.candidate.candidate_id;
            done.emplace(id, std::move(o));
        }
    }
    improve::ImprovementLoop loop(gateway(), orchestrator(), role(llm::RoleId::test_generator),
                                  role(llm::RoleId::bug_fixer),
                                  {cfg_.max_round, cfg_.execution.parallelism, {}});
    auto outcomes = loop.generate_suites(units, done, [&](const std::vector<improve::SuiteOutcome>& got) {
        std::vector<json> lines;
        for (const auto& o : got) {
            lines.push_back(improve::to_json(o));
        }
        write_jsonl_atomic(partial, lines);
    });
    std::vector<json> lines;
    size_t suites = 0;
    std::map<std::string, size_t> skipped;
    for (const auto& o : outcomes) {
        lines.push_back(improve::to_json(o));
        if (o.candidate.status == improve::CandidateStatus::skipped) {
            ++skipped[o.candidate.skip_reason];
        } else {
            ++suites;
        }
    }
    write_jsonl_atomic(out(files::suites), lines);
    std::error_code ec;
    fs::remove(partial, ec);
    return {{"units", outcomes.size()}, {"suites", suites}, {"skipped", tally(skipped)}};
}

json Pipeline::execute() {
    auto outcomes =
        read_artifact<improve::SuiteOutcome>(out(files::suites), "gen-tests", improve::suite_outcome_from_json);
    improve::ImprovementLoop loop(gateway(), orchestrator(), role(llm::RoleId::test_generator),
                                  role(llm::RoleId::bug_fixer),
                                  {cfg_.max_round, cfg_.execution.parallelism, out(files::checkpoint)});
    auto state = loop.execute_initial(outcomes);
    improve::check_state(state, cfg_.max_round);
    return partition_report(state);
}

json Pipeline::improve() {
    if (!fs::is_regular_file(out(files::checkpoint))) {
        throw InputError("missing checkpoint.jsonl; run the 'execute' stage first");
    }
    auto state = improve::read_checkpoint(out(files::checkpoint));
    improve::ImprovementLoop loop(gateway(), orchestrator(), role(llm::RoleId::test_generator),
                                  role(llm::RoleId::bug_fixer),
                                  {cfg_.max_round, cfg_.execution.parallelism, out(files::checkpoint)});
    state = loop.run_rounds(std::move(state));
    improve::check_state(state, cfg_.max_round);
    auto report = partition_report(state);
    report["max_round"] = cfg_.max_round;
    return report;
}

json Pipeline::refine() {
    if (!fs::is_regular_file(out(files::checkpoint))) {
        throw InputError("missing checkpoint.jsonl; run the 'improve' stage first");
    }
    auto state = improve::read_checkpoint(out(files::checkpoint));
    std::vector<improve::Candidate> passed;
    for (const auto& [id, c] : state.candidates) {
        if (c.status == improve::CandidateStatus::passed) {
            passed.push_back(c);
        }
    }
    refine::Refiner refiner(gateway(), orchestrator(), role(llm::RoleId::refiner), cfg_.execution.parallelism,
                            out(files::refine_audit));
    auto outcomes = refiner.refine_all(passed);
    std::vector<json> lines;
    size_t accepted = 0;
    std::map<std::string, size_t> rejected;
    for (const auto& o : outcomes) {
        lines.push_back(refine::to_json(o));
        if (o.accepted()) {
            ++accepted;
        } else {
            ++rejected[std::string(refine::rejection_name(*o.rejection))];
        }
    }
    write_jsonl_atomic(out(files::refined), lines);
    return {{"passed", passed.size()}, {"accepted", accepted}, {"rejected", tally(rejected)}};
}

json Pipeline::export_() {
    auto outcomes = read_artifact<refine::RefineOutcome>(out(files::refined), "refine", refine::outcome_from_json);
    auto built = dataset::build_pairs(outcomes, cfg_.include_unrefined);
    // provenance chain: every pair must come from a document that survived ingest
    std::set<std::string> doc_ids;
    for (const auto& d : read_artifact<corpus::SourceDocument>(out(files::documents), "ingest", document_from_json)) {
        doc_ids.insert(d.doc_id);
    }
    for (const auto& p : built.pairs) {
        if (doc_ids.count(p.provenance.doc_id) == 0) {
            throw InputError("pair " + p.pair_id + " derives from document " + p.provenance.doc_id +
                             " which is not in documents.jsonl");
        }
    }
    auto manifest = dataset::export_dataset(built.pairs, out(files::dataset), out(files::dataset_manifest),
                                            snapshot_, cfg_.bucket_edges);
    json errors = json::array();
    for (const auto& [cid, why] : built.errors) {
        errors.push_back({{"candidate_id", cid}, {"error", why}});
    }
    return {{"pairs", built.pairs.size()},
            {"build_errors", errors},
            {"not_admitted", built.not_admitted},
            {"content_hash", manifest["content_hash"]}};
}

json Pipeline::stats() {
    if (!fs::is_regular_file(out(files::dataset))) {
        throw InputError("missing dataset.jsonl; run the 'export' stage first");
    }
    auto s = dataset::to_json(dataset::compute_stats(dataset::read_dataset(out(files::dataset)), cfg_.bucket_edges));
    write_json_atomic(out(files::stats), s);
    return s;
}

json Pipeline::eval_generator() {
    if (!cfg_.eval_items) {
        throw ConfigError("eval_items is not configured");
    }
    auto items = eval::read_eval_items(*cfg_.eval_items);
    auto report = eval::evaluate_generator(items, gateway(), role(llm::RoleId::test_generator), orchestrator(),
                                           cfg_.execution.parallelism);
    auto j = eval::to_json(report);
    write_json_atomic(out(files::eval_report), j);
    return {{"item_count", j["item_count"]},
            {"evaluated", j["evaluated"]},
            {"passes", j["passes"]},
            {"accuracy", j["accuracy"]},
            {"mean_coverage", j["mean_coverage"]},
            {"no_data", j["no_data"]}};
}

json Pipeline::run_all(const RunOptions& opts) {
    fs::create_directories(cfg_.output_dir);
    const auto state_path = out(files::run_state);
    const auto config_hash = sha256_hex(snapshot_.dump());
    std::vector<std::string> completed;
    if (opts.resume && fs::is_regular_file(state_path)) {
        auto st = read_report(state_path);
        if (st.value("config_hash", "") != config_hash) {
            throw ConfigError("cannot resume: the configuration differs from the interrupted run");
        }
        completed = st.at("completed").get<std::vector<std::string>>();
    } else {
        std::error_code ec;
        fs::remove(state_path, ec);
        fs::remove(out(files::suites_partial), ec);
    }
    resume_ = opts.resume;
    json reports = json::object();
    for (Stage s : kAllStages) {
        if (s == Stage::eval_generator && !cfg_.eval_items) {
            continue;
        }
        const std::string name(stage_name(s));
        if (std::find(completed.begin(), completed.end(), name) != completed.end()) {
            reports[name] = read_report(cfg_.output_dir / (name + ".report.json"));
        } else {
            reports[name] = run_stage(s);
            completed.push_back(name);
            write_json_atomic(state_path, {{"completed", completed}, {"config_hash", config_hash}});
        }
        if (opts.stop_after && *opts.stop_after == s) {
            return nullptr;
        }
    }
    json manifest = {{"stages", reports},
                     {"dataset", read_report(out(files::dataset_manifest))},
                     {"config", snapshot_}};
    write_json_atomic(out(files::run_manifest), manifest);
    return manifest;
}

} // namespace unitsynth::pipeline
