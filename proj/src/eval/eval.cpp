#include "unitsynth/eval/eval.hpp"

#include "unitsynth/common/parallel.hpp"
#include "unitsynth/common/text.hpp"
#include "unitsynth/pysyntax/parser.hpp"

#include <array>

namespace unitsynth::eval {

namespace {

constexpr std::array<std::string_view, 5> kItemStatusNames = {"pass", "fail", "rejected", "provider_error",
                                                              "excluded"};

} // namespace

std::string_view item_status_name(ItemStatus s) { return kItemStatusNames[static_cast<size_t>(s)]; }

std::string solution_function_name(const EvalItem& item) {
    auto parsed = py::parse_module(item.canonical_solution);
    if (!parsed.ok()) {
        throw InputError("item " + item.item_id + ": solution does not parse: " + parsed.error->to_string());
    }
    for (const auto& s : parsed.module->body) {
        if (s.kind == py::StmtKind::function_def) {
            return s.name;
        }
    }
    throw InputError("item " + item.item_id + ": solution defines no top-level function");
}

std::string item_source(const EvalItem& item) {
    std::string out;
    for (const auto& i : item.imports) {
        out += i;
        out += "\n";
    }
    if (!item.imports.empty()) {
        out += "\n\n";
    }
    out += item.canonical_solution;
    if (out.empty() || out.back() != '\n') {
        out += "\n";
    }
    return out;
}

std::vector<EvalItem> read_eval_items(const std::filesystem::path& path) {
    std::vector<EvalItem> items;
    read_jsonl(path, [&](size_t line, json&& j) {
        const auto where = path.string() + ":" + std::to_string(line);
        EvalItem item;
        try {
            item.item_id = j.at("id").is_string() ? j["id"].get<std::string>() : j["id"].dump();
            item.canonical_solution = j.at("solution").get<std::string>();
            if (j.contains("imports")) {
                const auto& im = j["imports"];
                if (im.is_string()) {
                    std::string_view rest = im.get_ref<const std::string&>();
                    while (!rest.empty()) {
                        const auto nl = rest.find('\n');
                        auto l = rest.substr(0, nl);
                        if (!trim(l).empty()) {
                            item.imports.emplace_back(trim(l));
                        }
                        if (nl == std::string_view::npos) {
                            break;
                        }
                        rest.remove_prefix(nl + 1);
                    }
                } else if (!im.is_null()) {
                    item.imports = im.get<std::vector<std::string>>();
                }
            }
        } catch (const json::exception& e) {
            throw InputError(where + ": " + e.what());
        }
        solution_function_name(item);
        items.push_back(std::move(item));
    });
    return items;
}

EvalReport aggregate(std::vector<ItemResult> per_item) {
    EvalReport r;
    r.item_count = per_item.size();
    double cov_sum = 0;
    size_t cov_n = 0;
    for (const auto& it : per_item) {
        if (it.status == ItemStatus::excluded) {
            r.excluded.push_back(it.item_id);
            continue;
        }
        ++r.evaluated;
        if (it.status == ItemStatus::pass) {
            ++r.passes;
        }
        if (it.coverage) {
            cov_sum += *it.coverage;
            ++cov_n;
        }
    }
    if (r.evaluated > 0) {
        r.accuracy = static_cast<double>(r.passes) / static_cast<double>(r.evaluated);
    }
    if (cov_n > 0) {
        r.mean_coverage = cov_sum / static_cast<double>(cov_n);
    }
    r.per_item = std::move(per_item);
    return r;
}

json to_json(const EvalReport& r) {
    json items = json::array();
    for (const auto& it : r.per_item) {
        items.push_back({{"item_id", it.item_id},
                         {"status", item_status_name(it.status)},
                         {"coverage", it.coverage ? json(*it.coverage) : json(nullptr)},
                         {"reason", it.reason}});
    }
    return {{"item_count", r.item_count},
            {"evaluated", r.evaluated},
            {"passes", r.passes},
            {"no_data", r.no_data()},
            {"accuracy", r.accuracy ? json(*r.accuracy) : json(nullptr)},
            {"mean_coverage", r.mean_coverage ? json(*r.mean_coverage) : json(nullptr)},
            {"coverage_metric", "line"},
            {"excluded", r.excluded},
            {"per_item", items}};
}

EvalReport evaluate_generator(const std::vector<EvalItem>& items, llm::Gateway& gateway, const llm::AgentRole& role,
                              exec::Orchestrator& orchestrator, int parallelism) {
    auto policy = orchestrator.policy();
    policy.measure_coverage = true;
    std::vector<ItemResult> results(items.size());
    parallel_for(items.size(), parallelism, [&](size_t i) {
        const auto& item = items[i];
        auto& out = results[i];
        out.item_id = item.item_id;
        const auto name = solution_function_name(item);
        const auto source = item_source(item);
        auto req = improve::request_suite(gateway, role, item.item_id, name, source);
        if (!req.suite) {
            out.status = req.reason == "provider_error" ? ItemStatus::provider_error : ItemStatus::rejected;
            out.reason = req.reason;
            return;
        }
        auto res = orchestrator.execute({item.item_id, name, 0, source, req.suite->source}, policy);
        const auto& v = res.verdict;
        out.coverage = v.coverage;
        if (v.passed()) {
            out.status = ItemStatus::pass;
        } else if (v.error_kind == exec::ErrorKind::import_missing) {
            out.status = ItemStatus::excluded;
            out.coverage.reset();
            out.reason = "import_missing";
        } else {
            out.status = ItemStatus::fail;
            out.reason = exec::serialize_result(v);
        }
    });
    return aggregate(std::move(results));
}

} // namespace unitsynth::eval
