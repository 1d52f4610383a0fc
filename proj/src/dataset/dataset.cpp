#include "unitsynth/dataset/dataset.hpp"

#include "unitsynth/common/hash.hpp"
#include "unitsynth/common/text.hpp"
#include "unitsynth/pysyntax/parser.hpp"

#include <algorithm>

namespace unitsynth::dataset {

json to_json(const TrainingPair& p) {
    return {{"pair_id", p.pair_id},
            {"prefix", p.prefix},
            {"completion", p.completion},
            {"packages", p.packages},
            {"suite", p.suite},
            {"provenance",
             {{"candidate_id", p.provenance.candidate_id},
              {"unit_id", p.provenance.unit_id},
              {"doc_id", p.provenance.doc_id},
              {"refined", p.provenance.refined}}}};
}

TrainingPair pair_from_json(const json& j) {
    TrainingPair p;
    p.pair_id = j.at("pair_id").get<std::string>();
    p.prefix = j.at("prefix").get<std::string>();
    p.completion = j.at("completion").get<std::string>();
    p.packages = j.at("packages").get<std::set<std::string>>();
    p.suite = j.at("suite").get<std::string>();
    const auto& pv = j.at("provenance");
    p.provenance = {pv.at("candidate_id").get<std::string>(), pv.at("unit_id").get<std::string>(),
                    pv.at("doc_id").get<std::string>(), pv.at("refined").get<bool>()};
    return p;
}

std::pair<std::string, std::string> split_at_docstring(std::string_view source, std::string_view name) {
    auto parsed = py::parse_module(source);
    if (!parsed.ok()) {
        throw BuildError("source does not parse: " + parsed.error->to_string());
    }
    const auto& m = *parsed.module;
    const auto* fn = py::find_function(m, name);
    if (fn == nullptr) {
        throw BuildError("no single top-level function named '" + std::string(name) + "'");
    }
    if (!fn->docstring) {
        throw BuildError("function has no docstring to split at");
    }
    for (const auto& s : m.body) {
        if (&s == fn) {
            continue;
        }
        if (s.span.begin > fn->span.begin) {
            throw BuildError("statement after the function definition");
        }
        if (s.kind != py::StmtKind::import_stmt && s.kind != py::StmtKind::from_import) {
            throw BuildError("top-level statement other than an import before the function");
        }
    }
    const size_t cut = fn->docstring->end;
    for (size_t t = fn->first_token; t <= fn->last_token; ++t) {
        const auto& tok = m.tokens[t];
        if (tok.begin >= cut && tok.kind == py::TokenKind::name && tok.text == "import") {
            throw BuildError("import statement in the completion");
        }
    }
    return {std::string(source.substr(0, cut)), std::string(source.substr(cut))};
}

TrainingPair build_pair(const refine::RefineOutcome& o, bool include_unrefined) {
    std::string source;
    std::set<std::string> packages;
    bool refined = true;
    if (o.refined) {
        if (!o.refined->verified) {
            throw BuildError("refined unit is not verified");
        }
        source = o.refined->refined_source;
        packages = o.refined->packages;
    } else if (include_unrefined) {
        auto norm = refine::normalize_function_source(o.pre_source, o.function_name);
        if (!norm) {
            throw BuildError("unrefined source could not be normalized");
        }
        source = std::move(norm->source);
        packages = std::move(norm->packages);
        refined = false;
    } else {
        throw BuildError("refinement was rejected");
    }
    auto [prefix, completion] = split_at_docstring(source, o.function_name);
    TrainingPair p;
    p.pair_id = sha256_hex(o.candidate_id + "\n" + source).substr(0, 16);
    p.prefix = std::move(prefix);
    p.completion = std::move(completion);
    p.packages = std::move(packages);
    p.suite = o.suite_source;
    p.provenance = {o.candidate_id, o.unit_id, o.doc_id, refined};
    return p;
}

BuildResult build_pairs(const std::vector<refine::RefineOutcome>& outcomes, bool include_unrefined) {
    BuildResult r;
    for (const auto& o : outcomes) {
        if (!o.accepted() && !include_unrefined) {
            ++r.not_admitted;
            continue;
        }
        try {
            r.pairs.push_back(build_pair(o, include_unrefined));
        } catch (const BuildError& e) {
            r.errors.emplace_back(o.candidate_id, e.what());
        }
    }
    std::sort(r.pairs.begin(), r.pairs.end(), [](const TrainingPair& a, const TrainingPair& b) {
        return a.provenance.candidate_id < b.provenance.candidate_id;
    });
    return r;
}

namespace {

PackageStats finish_stats(std::map<std::string, size_t> counts, const std::vector<size_t>& edges) {
    PackageStats s;
    s.per_package_counts = std::move(counts);
    s.unique_package_count = s.per_package_counts.size();
    if (edges.empty() || !std::is_sorted(edges.begin(), edges.end()) ||
        std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
        throw ConfigError("bucket edges must be non-empty and strictly increasing");
    }
    std::vector<size_t> hist(edges.size(), 0);
    for (const auto& [pkg, n] : s.per_package_counts) {
        auto it = std::upper_bound(edges.begin(), edges.end(), n);
        if (it == edges.begin()) {
            continue; // below the first edge
        }
        ++hist[static_cast<size_t>(it - edges.begin()) - 1];
    }
    for (size_t i = 0; i < edges.size(); ++i) {
        if (hist[i] == 0) {
            continue;
        }
        Bucket b;
        b.lo = edges[i];
        if (i + 1 < edges.size()) {
            b.hi = edges[i + 1];
        }
        b.packages = hist[i];
        s.frequency_buckets.push_back(b);
    }
    return s;
}

} // namespace

PackageStats compute_stats(const std::vector<TrainingPair>& pairs, const std::vector<size_t>& edges) {
    std::map<std::string, size_t> counts;
    for (const auto& p : pairs) {
        for (const auto& pkg : p.packages) {
            ++counts[pkg];
        }
    }
    return finish_stats(std::move(counts), edges);
}

PackageStats merge_stats(const PackageStats& a, const PackageStats& b, const std::vector<size_t>& edges) {
    auto counts = a.per_package_counts;
    for (const auto& [pkg, n] : b.per_package_counts) {
        counts[pkg] += n;
    }
    return finish_stats(std::move(counts), edges);
}

json to_json(const PackageStats& s) {
    json buckets = json::array();
    for (const auto& b : s.frequency_buckets) {
        buckets.push_back({{"lo", b.lo}, {"hi", b.hi ? json(*b.hi) : json(nullptr)}, {"packages", b.packages}});
    }
    return {{"per_package_counts", s.per_package_counts},
            {"unique_package_count", s.unique_package_count},
            {"frequency_buckets", buckets}};
}

json export_dataset(const std::vector<TrainingPair>& pairs, const std::filesystem::path& dataset_path,
                    const std::filesystem::path& manifest_path, const json& config_snapshot,
                    const std::vector<size_t>& edges) {
    const auto stats = compute_stats(pairs, edges);
    std::string data;
    for (const auto& p : pairs) {
        data += jsonl_line(to_json(p));
        data += '\n';
    }
    write_file_atomic(dataset_path, data);
    json manifest = {{"count", pairs.size()},
                     {"dataset_file", dataset_path.filename().string()},
                     {"hash_algorithm", kContentHashName},
                     {"content_hash", sha256_hex(data)},
                     {"config", config_snapshot},
                     {"stats", to_json(stats)}};
    try {
        write_json_atomic(manifest_path, manifest);
    } catch (...) {
        std::error_code ec;
        std::filesystem::remove(dataset_path, ec);
        throw;
    }
    return manifest;
}

std::vector<TrainingPair> read_dataset(const std::filesystem::path& path) {
    std::vector<TrainingPair> out;
    read_jsonl(path, [&](size_t line, json&& j) {
        try {
            out.push_back(pair_from_json(j));
        } catch (const json::exception& e) {
            throw InputError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        }
    });
    return out;
}

} // namespace unitsynth::dataset
