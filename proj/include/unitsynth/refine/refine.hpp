#pragma once

#include "unitsynth/improve/improve.hpp"

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace unitsynth::refine {

/// Imports plus exactly one top-level function, laid out like
/// extract::module_source.
struct NormalizedSource {
    std::string source;
    std::vector<extract::ImportStatement> imports;
    std::set<std::string> packages;
};

/// Keeps the top-level imports of `source` whose bound names the function
/// uses (or, when `source` has no imports at all, the used ones among
/// `fallback_imports`) followed by the function `name`. Returns nullopt if
/// the source does not parse or has no single top-level `name`.
std::optional<NormalizedSource> normalize_function_source(
    std::string_view source, std::string_view name, const std::vector<extract::ImportStatement>& fallback_imports = {});

enum class Rejection { provider, parse, signature_changed, no_docstring, behavior_changed };

std::string_view rejection_name(Rejection r);
Rejection rejection_from_name(std::string_view name);

struct RefinedUnit {
    std::string candidate_id;
    std::string refined_source;
    std::string docstring;
    bool verified = false;
    std::set<std::string> packages;

    bool operator==(const RefinedUnit&) const = default;
};

/// One per passed candidate: either a refined unit or a rejection. Carries
/// what the dataset needs so export reads this artifact alone.
struct RefineOutcome {
    std::string candidate_id;
    std::string unit_id;
    std::string doc_id;
    std::string function_name;
    std::string pre_source; // the passing, unrefined source
    std::string suite_source;
    std::optional<RefinedUnit> refined;
    std::optional<Rejection> rejection;
    std::string detail;
    std::optional<exec::ExecutionResult> post_result;

    bool accepted() const { return refined.has_value(); }
    bool operator==(const RefineOutcome&) const = default;
};

json to_json(const RefineOutcome& o);
RefineOutcome outcome_from_json(const json& j);

class Refiner {
public:
    Refiner(llm::Gateway& gateway, exec::Orchestrator& orchestrator, llm::AgentRole role, int parallelism,
            std::filesystem::path audit_log = {});

    /// Requires candidate.status == passed.
    RefineOutcome refine(const improve::Candidate& candidate);

    /// Outcomes in input order; audit log lines in the same order.
    std::vector<RefineOutcome> refine_all(const std::vector<improve::Candidate>& passed);

private:
    RefineOutcome refine_one(const improve::Candidate& candidate);
    void log(const RefineOutcome& o);

    llm::Gateway& gateway_;
    exec::Orchestrator& orchestrator_;
    llm::AgentRole role_;
    int parallelism_;
    std::mutex log_mu_;
    std::ofstream log_;
};

} // namespace unitsynth::refine
